"""Scalar fields on space-time and derivative bundles.

A ScalarField is an evaluator over point arrays of shape (..., n+1),
optionally with a declared compact support region and known singular
points. Grid-backed fields interpolate their samples multilinearly and
reproduce them exactly at the nodes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .expressions import compile_expression
from .geometry import Region, as_point_array, rho

__all__ = [
    "ScalarField",
    "DerivativeBundle",
    "expression_field",
    "grid_field",
    "save_grid_field",
    "load_grid_field",
    "bump_field",
    "log_rho_power_field",
    "sin_log_rho_power_field",
    "indicator_field",
    "default_battery",
]

LOG_RHO_FLOOR = 1e-12


@dataclass
class ScalarField:
    """Evaluable function on R^{n+1}."""

    evaluator: Callable
    n: int
    label: str = ""
    support: Region | None = None
    singular_points: np.ndarray | None = None

    def __call__(self, points) -> np.ndarray:
        pts = as_point_array(points)
        return np.asarray(self.evaluator(pts), dtype=float)

    def __add__(self, other: "ScalarField") -> "ScalarField":
        if self.n != other.n:
            raise ValueError("field dimensions differ")
        sup = self.support if other.support is None else (
            other.support if self.support is None else None)
        return ScalarField(lambda p: self.evaluator(p) + other.evaluator(p), self.n,
                           label=f"({self.label}+{other.label})", support=sup,
                           singular_points=_merge_singular(self, other))

    def __mul__(self, c: float) -> "ScalarField":
        c = float(c)
        return ScalarField(lambda p: c * self.evaluator(p), self.n,
                           label=f"{c}*{self.label}", support=self.support,
                           singular_points=self.singular_points)

    __rmul__ = __mul__


def _merge_singular(a: ScalarField, b: ScalarField):
    parts = [s for s in (a.singular_points, b.singular_points) if s is not None]
    if not parts:
        return None
    return np.vstack(parts)


@dataclass
class DerivativeBundle:
    """A field with its first/second space derivatives and time derivative.

    d2u is indexed [i][j] and must be symmetric.
    """

    u: ScalarField
    du: Sequence[ScalarField]
    d2u: Sequence[Sequence[ScalarField]]
    ut: ScalarField
    label: str = ""

    @property
    def n(self) -> int:
        return self.u.n

    def __post_init__(self):
        n = self.u.n
        if len(self.du) != n or len(self.d2u) != n or any(len(row) != n for row in self.d2u):
            raise ValueError("derivative bundle shapes inconsistent with n")
        for i in range(n):
            for j in range(i):
                if self.d2u[i][j] is not self.d2u[j][i]:
                    raise ValueError("d2u must be symmetric (share entries across the diagonal)")

    def all_fields(self):
        """(label, field) pairs of u, Du, distinct D2u entries and ut."""
        out = [("u", self.u)]
        n = self.n
        out += [(f"d{i+1}", self.du[i]) for i in range(n)]
        out += [(f"d{i+1}{j+1}", self.d2u[i][j]) for i in range(n) for j in range(i, n)]
        out.append(("ut", self.ut))
        return out


# ---------------------------------------------------------------------------
# constructors


def expression_field(text: str, n: int, support: Region | None = None,
                     label: str | None = None) -> ScalarField:
    """Field from the shared config grammar.

    Variables: x1..x{n} (space coordinates), t, xnorm = |x'| and
    rho = rho(x', t).
    """
    names = tuple(f"x{i+1}" for i in range(n)) + ("t", "xnorm", "rho")
    fn = compile_expression(text, names)

    def evaluator(pts):
        kwargs = {f"x{i+1}": pts[..., i] for i in range(n)}
        kwargs["t"] = pts[..., n]
        kwargs["xnorm"] = np.sqrt(np.sum(pts[..., :n] ** 2, axis=-1))
        kwargs["rho"] = np.maximum(rho(pts), LOG_RHO_FLOOR)
        return np.broadcast_to(np.asarray(fn(**kwargs), dtype=float), pts.shape[:-1]).copy()

    return ScalarField(evaluator, n=n, label=label or text, support=support)


def grid_field(axes: Sequence[np.ndarray], values: np.ndarray, label: str = "grid",
               support: Region | None = None) -> ScalarField:
    """Multilinear interpolation of samples on a tensor grid; 0 outside."""
    interp = RegularGridInterpolator([np.asarray(a, float) for a in axes],
                                     np.asarray(values, float),
                                     method="linear", bounds_error=False, fill_value=0.0)
    n = len(axes) - 1

    f = ScalarField(lambda pts: interp(pts), n=n, label=label, support=support)
    f.axes = [np.asarray(a, float) for a in axes]
    f.values = np.asarray(values, float)
    return f


def save_grid_field(f: ScalarField, path, fmt: str = "npz") -> None:
    """Persist a grid-backed field (npz binary, or CSV with a header row)."""
    if not hasattr(f, "axes"):
        raise ValueError("only grid-backed fields can be saved")
    if fmt == "npz":
        np.savez_compressed(path, values=f.values, n=f.n, label=f.label,
                            **{f"axis{i}": a for i, a in enumerate(f.axes)})
        return
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n", f.n, "label", f.label])
            writer.writerow(["shape"] + [len(a) for a in f.axes])
            for i, a in enumerate(f.axes):
                writer.writerow([f"axis{i}"] + [repr(float(v)) for v in a])
            writer.writerow(["values"] + [repr(float(v)) for v in f.values.ravel()])
        return
    raise ValueError(f"unknown format {fmt!r}")


def load_grid_field(path, fmt: str = "npz") -> ScalarField:
    if fmt == "npz":
        data = np.load(path, allow_pickle=False)
        naxes = int(data["n"]) + 1
        axes = [data[f"axis{i}"] for i in range(naxes)]
        return grid_field(axes, data["values"], label=str(data["label"]))
    if fmt == "csv":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        n = int(rows[0][1])
        label = rows[0][3]
        shape = [int(s) for s in rows[1][1:]]
        axes = [np.array([float(v) for v in rows[2 + i][1:]]) for i in range(n + 1)]
        values = np.array([float(v) for v in rows[2 + n + 1][1:]]).reshape(shape)
        return grid_field(axes, values, label=label)
    raise ValueError(f"unknown format {fmt!r}")


def bump_field(n: int, center=None, r_space: float = 1.0, r_time: float | None = None,
               label: str | None = None) -> ScalarField:
    """C^infty bump exp(1 - 1/(1 - q)) with parabolic argument q < 1.

    q = |x'-c'|^2/r_space^2 + (t-c_t)^2/r_time^2, so the support is the
    ellipsoid-shaped set q < 1 (r_time defaults to r_space^2, making the
    support exactly E_{r_space}(center)).
    """
    c = np.zeros(n + 1) if center is None else as_point_array(center)
    rt = r_space ** 2 if r_time is None else float(r_time)

    def evaluator(pts):
        d = pts - c
        q = np.sum(d[..., :n] ** 2, axis=-1) / r_space ** 2 + d[..., n] ** 2 / rt ** 2
        out = np.zeros(pts.shape[:-1])
        m = q < 1.0
        out[m] = np.exp(1.0 - 1.0 / (1.0 - q[m]))
        return out

    sup = Region.ellipsoid(c, r_space) if rt == r_space ** 2 else None
    return ScalarField(evaluator, n=n, label=label or f"bump(r={r_space})", support=sup)


def log_rho_power_field(n: int, alpha: float, center=None) -> ScalarField:
    """f_alpha = |log rho(x - c)|^alpha, the canonical oscillation test symbol.

    In vanishing-mean-oscillation class for 0 < alpha < 1; alpha = 1 has
    bounded but non-vanishing oscillation. Evaluation floors rho at 1e-12.
    """
    c = np.zeros(n + 1) if center is None else as_point_array(center)

    def evaluator(pts):
        r = np.maximum(rho(pts - c), LOG_RHO_FLOOR)
        return np.abs(np.log(r)) ** alpha

    return ScalarField(evaluator, n=n, label=f"|log rho|^{alpha}",
                       singular_points=c[None, :])


def sin_log_rho_power_field(n: int, alpha: float, center=None) -> ScalarField:
    """sin(f_alpha): bounded, discontinuous at the center, small oscillation."""
    base = log_rho_power_field(n, alpha, center)
    return ScalarField(lambda p: np.sin(base.evaluator(p)), n=n,
                       label=f"sin|log rho|^{alpha}", singular_points=base.singular_points)


def indicator_field(region: Region, label: str | None = None) -> ScalarField:
    n = region.n
    return ScalarField(lambda p: region.contains(p).astype(float), n=n,
                       label=label or f"1_{region.kind}", support=region)


def default_battery(n: int, scale: float = 1.0, center=None) -> list:
    """Twelve compactly supported test fields inside E_scale(center).

    Smooth bumps at three scales/offsets, anisotropic bumps, mollified
    plateaus and oscillatory bumps; none is identically zero.
    """
    c = np.zeros(n + 1) if center is None else as_point_array(center)
    s = float(scale)
    out = []
    # smooth bumps
    out.append(bump_field(n, c, 0.9 * s, label="bump-wide"))
    out.append(bump_field(n, c, 0.45 * s, label="bump-narrow"))
    off = c.copy()
    off[0] += 0.3 * s
    out.append(bump_field(n, off, 0.5 * s, label="bump-offset"))
    # anisotropic bumps (time radius decoupled from space radius)
    out.append(bump_field(n, c, 0.8 * s, r_time=0.25 * s ** 2, label="bump-flat-time"))
    out.append(bump_field(n, c, 0.4 * s, r_time=0.9 * s ** 2, label="bump-long-time"))
    sq = bump_field(n, c, 0.7 * s)
    out.append(ScalarField(lambda p, b=sq: b.evaluator(p) ** 2, n,
                           label="bump-squared", support=sq.support))
    # mollified plateaus: clip-and-smooth of a wide bump
    for k, lbl in ((4.0, "plateau-soft"), (12.0, "plateau-hard")):
        b = bump_field(n, c, 0.85 * s)
        out.append(ScalarField(
            lambda p, b=b, k=k: np.tanh(k * b.evaluator(p)) / np.tanh(k), n,
            label=lbl, support=b.support))
    b0 = bump_field(n, c, 0.88 * s)
    out.append(ScalarField(lambda p, b=b0: np.sqrt(b.evaluator(p)), n,
                           label="plateau-sqrt", support=b0.support))
    # oscillatory bumps
    for freq, lbl in ((2.0, "osc-low"), (5.0, "osc-high")):
        b = bump_field(n, c, 0.8 * s)
        out.append(ScalarField(
            lambda p, b=b, f=freq, cc=c, ss=s:
                b.evaluator(p) * np.cos(f * np.pi * (p[..., 0] - cc[0]) / ss),
            n, label=lbl, support=b.support))
    b1 = bump_field(n, c, 0.75 * s)
    out.append(ScalarField(
        lambda p, b=b1, cc=c, ss=s:
            b.evaluator(p) * np.sin(3.0 * np.pi * (p[..., n] - cc[n]) / ss ** 2),
        n, label="osc-time", support=b1.support))
    return out
