"""Anisotropic space-time geometry: metrics, regions, grids and sphere rules.

Points live in R^{n+1} with the space part first and time last, so an array
of points has shape (..., n+1). Two metrics are provided: the standard
parabolic one and the smooth equivalent whose unit ball is the Euclidean
ball, together with the ellipsoid/cylinder regions they induce, uniform
parabolic quadrature grids (time spacing h^2 for space spacing h), and
layer-graded quadrature rules on the unit sphere S^n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SpaceTimePoint",
    "Region",
    "QuadratureGrid",
    "SphereRule",
    "rho",
    "varrho",
    "RHO_OVER_VARRHO_MAX",
    "parabolic_dilate",
    "polar_weight",
    "unit_ball_volume",
    "sphere_area",
    "build_grid",
    "sphere_rule",
    "generalized_reflection",
    "reflection_row",
    "sample_in_ellipsoid",
    "sample_on_rho_sphere",
]

#: sup over points of rho/varrho, attained at |x'|^2 = |t| = varrho^2:
#: ((1 + sqrt(5))/2)**0.5.
RHO_OVER_VARRHO_MAX = math.sqrt((1.0 + math.sqrt(5.0)) / 2.0)

DEFAULT_NODE_BUDGET = 20_000_000


@dataclass(frozen=True)
class SpaceTimePoint:
    """A point (x', t) with space part x' in R^n and time t."""

    space: np.ndarray
    time: float

    def __post_init__(self):
        sp = np.atleast_1d(np.asarray(self.space, dtype=float))
        if sp.ndim != 1 or sp.size < 1:
            raise ValueError("space part must be a 1-d vector with n >= 1")
        if not (np.all(np.isfinite(sp)) and np.isfinite(self.time)):
            raise ValueError("point components must be finite")
        object.__setattr__(self, "space", sp)
        object.__setattr__(self, "time", float(self.time))

    @property
    def n(self) -> int:
        return self.space.size

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.space, [self.time]])


def as_point_array(p) -> np.ndarray:
    """Coerce a SpaceTimePoint or array-like to a flat (n+1,) float array."""
    if isinstance(p, SpaceTimePoint):
        return p.as_array()
    return np.asarray(p, dtype=float)


def rho(points) -> np.ndarray:
    """Smooth parabolic metric ((|x'|^2 + sqrt(|x'|^4 + 4 t^2)) / 2)^{1/2}.

    Its unit ball is the Euclidean unit ball of R^{n+1}, and membership in
    the ellipsoid E_r is exactly rho < r.
    """
    pts = as_point_array(points)
    sp2 = np.sum(pts[..., :-1] ** 2, axis=-1)
    t = pts[..., -1]
    return np.sqrt((sp2 + np.sqrt(sp2 ** 2 + 4.0 * t ** 2)) / 2.0)


def varrho(points) -> np.ndarray:
    """Standard parabolic metric max(|x'|, |t|^{1/2})."""
    pts = as_point_array(points)
    return np.maximum(
        np.sqrt(np.sum(pts[..., :-1] ** 2, axis=-1)),
        np.sqrt(np.abs(pts[..., -1])),
    )


def parabolic_dilate(points, mu) -> np.ndarray:
    """Parabolic dilation (x', t) -> (mu x', mu^2 t); rho scales by mu."""
    pts = as_point_array(points)
    mu = np.asarray(mu, dtype=float)
    out = np.empty(np.broadcast_shapes(pts.shape, mu.shape + (1,)), dtype=float)
    out[..., :-1] = pts[..., :-1] * mu[..., None]
    out[..., -1] = pts[..., -1] * mu ** 2
    return out


def polar_weight(points) -> np.ndarray:
    """Jacobian factor |w'|^2 + 2 w_t^2 of parabolic polar coordinates.

    With xi = (r w', r^2 w_t) for w on S^n: dxi = r^{n+1} polar_weight(w) dr dsigma(w).
    """
    pts = as_point_array(points)
    return np.sum(pts[..., :-1] ** 2, axis=-1) + 2.0 * pts[..., -1] ** 2


def unit_ball_volume(d: int) -> float:
    """Volume of the Euclidean unit ball in R^d."""
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def sphere_area(n: int) -> float:
    """Surface area of S^n, the unit sphere in R^{n+1}."""
    return 2.0 * math.pi ** ((n + 1) / 2.0) / math.gamma((n + 1) / 2.0)


# ---------------------------------------------------------------------------
# regions


@dataclass(frozen=True)
class Region:
    """Ellipsoid / cylinder / half-space variant / box cylinder.

    kinds:
      ellipsoid       E_r(x):   |x'-y'|^2/r^2 + |t-tau|^2/r^4 < 1
      cylinder        I_r(x):   |x'-y'| < r and |t-tau| < r^2
      semi_ellipsoid  E_r^+(x0) = E_r(x0) with y_n > 0 and tau > 0
      semi_cylinder   C_r^+(x0): |x0'-y'| < r, y_n > 0, 0 < tau < r^2
      box_cylinder    Q = prod_i (lo_i, hi_i) x (0, T)
    Membership is strict everywhere (boundary excluded, measure zero).
    """

    kind: str
    center: np.ndarray = None
    radius: float = 0.0
    box_lo: np.ndarray = None
    box_hi: np.ndarray = None
    time_interval: tuple = None

    _KINDS = ("ellipsoid", "cylinder", "semi_ellipsoid", "semi_cylinder", "box_cylinder")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown region kind {self.kind!r}")
        if self.kind != "box_cylinder":
            if self.radius <= 0:
                raise ValueError("region radius must be positive")
            object.__setattr__(self, "center", as_point_array(self.center))

    # -- constructors

    @classmethod
    def ellipsoid(cls, center, r: float) -> "Region":
        return cls("ellipsoid", center=center, radius=float(r))

    @classmethod
    def cylinder(cls, center, r: float) -> "Region":
        return cls("cylinder", center=center, radius=float(r))

    @classmethod
    def semi_ellipsoid(cls, center, r: float) -> "Region":
        return cls("semi_ellipsoid", center=center, radius=float(r))

    @classmethod
    def semi_cylinder(cls, center, r: float) -> "Region":
        return cls("semi_cylinder", center=center, radius=float(r))

    @classmethod
    def box_cylinder(cls, lo, hi, t_final: float, t_start: float = 0.0) -> "Region":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape or np.any(hi <= lo) or t_final <= t_start:
            raise ValueError("box extents must satisfy lo < hi and t_start < t_final")
        return cls("box_cylinder", box_lo=lo, box_hi=hi,
                   time_interval=(float(t_start), float(t_final)))

    # -- geometry queries

    @property
    def n(self) -> int:
        if self.kind == "box_cylinder":
            return self.box_lo.size
        return self.center.size - 1

    def contains(self, points) -> np.ndarray:
        pts = as_point_array(points)
        if self.kind == "box_cylinder":
            sp, t = pts[..., :-1], pts[..., -1]
            ok = np.all((sp > self.box_lo) & (sp < self.box_hi), axis=-1)
            return ok & (t > self.time_interval[0]) & (t < self.time_interval[1])
        d = pts - self.center
        sp2 = np.sum(d[..., :-1] ** 2, axis=-1)
        dt = d[..., -1]
        r = self.radius
        if self.kind in ("ellipsoid", "semi_ellipsoid"):
            ok = sp2 / r ** 2 + dt ** 2 / r ** 4 < 1.0
            if self.kind == "semi_ellipsoid":
                ok = ok & (pts[..., -2] > 0.0) & (pts[..., -1] > 0.0)
        elif self.kind == "cylinder":
            ok = (sp2 < r ** 2) & (np.abs(dt) < r ** 2)
        else:  # semi_cylinder: time runs over (t_center, t_center + r^2)
            ok = (sp2 < r ** 2) & (pts[..., -2] > 0.0) & (dt > 0.0) & (dt < r ** 2)
        return ok

    def bounding_box(self):
        """(lo, hi) arrays of length n+1 enclosing the region."""
        if self.kind == "box_cylinder":
            lo = np.concatenate([self.box_lo, [self.time_interval[0]]])
            hi = np.concatenate([self.box_hi, [self.time_interval[1]]])
            return lo, hi
        c, r = self.center, self.radius
        lo = c - np.concatenate([np.full(self.n, r), [r ** 2]])
        hi = c + np.concatenate([np.full(self.n, r), [r ** 2]])
        if self.kind == "semi_ellipsoid":
            lo = lo.copy()
            lo[-2] = max(lo[-2], 0.0)
            lo[-1] = max(lo[-1], 0.0)
        elif self.kind == "semi_cylinder":
            lo = lo.copy()
            lo[-2] = max(lo[-2], 0.0)
            lo[-1] = c[-1]
            hi = hi.copy()
            hi[-1] = c[-1] + r ** 2
        return lo, hi

    def volume(self) -> float:
        """Exact measure where a closed form exists."""
        n, r = self.n, self.radius
        if self.kind == "ellipsoid":
            return unit_ball_volume(n + 1) * r ** (n + 2)
        if self.kind == "cylinder":
            return unit_ball_volume(n) * r ** n * 2.0 * r ** 2
        if self.kind == "box_cylinder":
            t0, t1 = self.time_interval
            return float(np.prod(self.box_hi - self.box_lo) * (t1 - t0))
        raise NotImplementedError(f"no closed-form volume for {self.kind}")


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class QuadratureGrid:
    """Uniform parabolic tensor grid restricted to a region.

    nodes: (N, n+1) cell centers inside the region; weights: cell volumes.
    """

    nodes: np.ndarray
    weights: np.ndarray
    h: float
    region: Region = field(repr=False, default=None)

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weights))

    @property
    def cell_spacing(self) -> np.ndarray:
        """Per-axis cell sizes (space..., time)."""
        return self._spacing

    def dump_csv(self, path) -> None:
        n = self.nodes.shape[1] - 1
        header = ",".join([f"x{i+1}" for i in range(n)] + ["t", "weight"])
        data = np.column_stack([self.nodes, self.weights])
        np.savetxt(path, data, delimiter=",", header=header, comments="")


def build_grid(region: Region, h: float, node_budget: int = DEFAULT_NODE_BUDGET) -> QuadratureGrid:
    """Tensor grid with spacing ~h in space and ~h^2 in time, cut to the region.

    Per-axis spacings are adjusted to tile the bounding box by an integer
    number of cells, so box cylinders are covered exactly. Cell centers
    outside the region are dropped and the remaining cells keep their full
    volume as weight (first-order boundary error).
    """
    if h <= 0:
        raise ValueError("grid spacing h must be positive")
    lo, hi = region.bounding_box()
    n = lo.size - 1
    target = np.concatenate([np.full(n, h), [h * h]])
    counts = np.maximum(np.ceil((hi - lo) / target).astype(int), 1)
    if int(np.prod(counts.astype(float))) > node_budget:
        raise ValueError(
            f"grid of {np.prod(counts.astype(float)):.3g} cells exceeds node budget {node_budget}"
        )
    spacing = (hi - lo) / counts
    axes = [lo[i] + (np.arange(counts[i]) + 0.5) * spacing[i] for i in range(n + 1)]
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=-1)
    inside = region.contains(nodes)
    nodes = nodes[inside]
    cell = float(np.prod(spacing))
    grid = QuadratureGrid(nodes=nodes, weights=np.full(len(nodes), cell), h=float(h), region=region)
    object.__setattr__(grid, "_spacing", spacing)
    return grid


# ---------------------------------------------------------------------------
# sphere rules


@dataclass(frozen=True)
class SphereRule:
    """Quadrature rule on S^n in R^{n+1} (time = last coordinate).

    Node placement is geometrically graded toward the equator tau = 0 so
    that kernels with an exponential layer there (heat-kernel derivatives)
    are resolved; polynomial moments stay exact per panel.
    """

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))

    @property
    def n(self) -> int:
        return self.nodes.shape[1] - 1


def _graded_edges(a: float, b: float, toward: float, levels: int) -> np.ndarray:
    """Ascending panel edges on [a, b], geometrically refined toward one endpoint."""
    widths = (b - a) * 2.0 ** -np.arange(levels, dtype=float)  # descending
    if toward == a:
        return np.concatenate([[a], a + widths[::-1]])
    return np.concatenate([b - widths, [b]])


def _composite_gl(edges: np.ndarray, m: int):
    x0, w0 = np.polynomial.legendre.leggauss(m)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    x = (mid[:, None] + half[:, None] * x0[None, :]).ravel()
    w = (half[:, None] * w0[None, :]).ravel()
    return x, w


def _z_rule(order: int, levels: int):
    """Composite GL in z on [-1,1], graded toward z=0 from both sides."""
    m = max((order + 2) // 2, 6)
    edges = np.concatenate(
        [_graded_edges(-1.0, 0.0, toward=0.0, levels=levels),
         _graded_edges(0.0, 1.0, toward=0.0, levels=levels)[1:]]
    )
    return _composite_gl(edges, m)


def sphere_rule(n: int, order: int, levels: int = 22) -> SphereRule:
    """Layer-graded quadrature on S^n for n in {1, 2, 3}."""
    if order < 1:
        raise ValueError("order must be >= 1")
    if n == 1:
        # angle from the time axis: point (sin a, cos a); graded toward the
        # equator angles pi/2 and 3pi/2 inside each quadrant
        m = max(order + 2, 8)
        quads = []
        for lo, hi, toward in (
            (0.0, 0.5 * math.pi, 0.5 * math.pi),
            (0.5 * math.pi, math.pi, 0.5 * math.pi),
            (math.pi, 1.5 * math.pi, 1.5 * math.pi),
            (1.5 * math.pi, 2.0 * math.pi, 1.5 * math.pi),
        ):
            quads.append(_composite_gl(_graded_edges(lo, hi, toward, levels), m))
        a = np.concatenate([q[0] for q in quads])
        w = np.concatenate([q[1] for q in quads])
        pts = np.column_stack([np.sin(a), np.cos(a)])
        return SphereRule(nodes=pts, weights=w, order=order)
    if n == 2:
        z, wz = _z_rule(order, levels)
        nth = 2 * (order + 1)
        th = 2.0 * math.pi * (np.arange(nth) + 0.5) / nth
        wth = 2.0 * math.pi / nth
        zz = np.repeat(z, nth)
        tt = np.tile(th, len(z))
        s = np.sqrt(np.clip(1.0 - zz ** 2, 0.0, None))
        pts = np.column_stack([s * np.cos(tt), s * np.sin(tt), zz])
        w = np.repeat(wz * wth, nth)
        return SphereRule(nodes=pts, weights=w, order=order)
    if n == 3:
        # slice at time z is a 2-sphere of radius sqrt(1-z^2);
        # dsigma = sqrt(1-z^2) dsigma_{S^2}(u) dz, graded toward z=0 and z=+-1
        m = max((order + 2) // 2, 6)
        edges = np.concatenate(
            [
                _graded_edges(-1.0, -0.5, toward=-1.0, levels=levels)[:-1],
                _graded_edges(-0.5, 0.0, toward=0.0, levels=levels),
                _graded_edges(0.0, 0.5, toward=0.0, levels=levels)[1:],
                _graded_edges(0.5, 1.0, toward=1.0, levels=levels)[1:],
            ]
        )
        z, wz = _composite_gl(edges, m)
        sub = sphere_rule(2, order, levels=8)
        u, wu = sub.nodes, sub.weights
        s = np.sqrt(np.clip(1.0 - z ** 2, 0.0, None))
        pts = np.concatenate(
            [
                (s[:, None, None] * u[None, :, :]).reshape(-1, 3),
                np.repeat(z, len(u))[:, None],
            ],
            axis=1,
        )
        w = (wz[:, None] * s[:, None] * wu[None, :]).ravel()
        return SphereRule(nodes=pts, weights=w, order=order)
    raise ValueError("sphere_rule supports n in {1, 2, 3}")


# ---------------------------------------------------------------------------
# generalized reflection


def generalized_reflection(coeffs, points) -> np.ndarray:
    """Coefficient-adapted reflection T(x) = (x' - 2 x_n a^n(x)/a^nn(x), t).

    Maps the closed upper half-space {x_n >= 0} into {x_n <= 0}; the time
    component is unchanged and boundary points are fixed.
    """
    pts = as_point_array(points)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    n = pts.shape[1] - 1
    a = coeffs(pts)
    ann = a[..., n - 1, n - 1]
    if np.any(ann <= 0):
        raise ValueError("coefficient field has non-positive a^nn entry")
    out = pts.copy()
    xn = pts[:, n - 1]
    out[:, :n] = pts[:, :n] - 2.0 * xn[:, None] * a[..., n - 1, :] / ann[:, None]
    return out[0] if single else out


def reflection_row(coeffs, points) -> np.ndarray:
    """Row dT(x)/dx_n = (-2 a^{n1}/a^{nn}, ..., -2 a^{n,n-1}/a^{nn}, -1, 0)."""
    pts = as_point_array(points)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    n = pts.shape[1] - 1
    a = coeffs(pts)
    ann = a[..., n - 1, n - 1]
    if np.any(ann <= 0):
        raise ValueError("coefficient field has non-positive a^nn entry")
    row = np.zeros((len(pts), n + 1))
    row[:, : n - 1] = -2.0 * a[..., n - 1, : n - 1] / ann[:, None]
    row[:, n - 1] = -1.0
    return row[0] if single else row


# ---------------------------------------------------------------------------
# samplers


def sample_in_ellipsoid(rng: np.random.Generator, center, r: float, size: int) -> np.ndarray:
    """Uniform samples in E_r(center) via the parabolic image of the unit ball."""
    c = as_point_array(center)
    d = c.size
    u = rng.standard_normal((size, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    u *= rng.uniform(0.0, 1.0, size=(size, 1)) ** (1.0 / d)
    out = np.empty_like(u)
    out[:, :-1] = c[:-1] + r * u[:, :-1]
    out[:, -1] = c[-1] + r ** 2 * u[:, -1]
    return out


def sample_on_rho_sphere(rng: np.random.Generator, n: int, size: int) -> np.ndarray:
    """Points with rho = 1 exactly: normalize any nonzero z by (z'/rho, z_t/rho^2)."""
    z = rng.standard_normal((size, n + 1))
    r = rho(z)
    out = np.empty_like(z)
    out[:, :-1] = z[:, :-1] / r[:, None]
    out[:, -1] = z[:, -1] / r ** 2
    return out
