"""Integral norms and oscillation functionals on space-time regions.

All suprema over (center, radius) pairs are approximated from below by a
documented finite SupSampler (dyadic radii, uniform center lattice);
reported values are lower bounds of the true supremum and carry the
witness attaining the sampled maximum.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .fields import ScalarField, DerivativeBundle
from .geometry import Region, QuadratureGrid, as_point_array, build_grid

__all__ = [
    "SupSampler",
    "NormReport",
    "lp_norm",
    "weak_l1_norm",
    "mean_integral",
    "mean_oscillation",
    "vmo_modulus",
    "bmo_norm",
    "morrey_norm",
    "weak_morrey_norm",
    "sobolev_morrey_norm",
]


@dataclass(frozen=True)
class SupSampler:
    """Finite (center, radius) sample set standing in for sup over (x, r)."""

    centers: np.ndarray
    radii: np.ndarray
    description: str = ""
    seed: int | None = None

    @classmethod
    def for_region(cls, region: Region, centers_per_axis: int = 3,
                   r_min: float = 0.05, r_max: float = 2.0, seed: int | None = None):
        """Uniform center lattice inside the region, dyadic radii r_min·2^k <= r_max."""
        lo, hi = region.bounding_box()
        axes = [np.linspace(lo[i], hi[i], centers_per_axis + 2)[1:-1] for i in range(lo.size)]
        mesh = np.meshgrid(*axes, indexing="ij")
        centers = np.stack([m.ravel() for m in mesh], axis=-1)
        centers = centers[region.contains(centers)]
        if len(centers) == 0:
            centers = np.atleast_2d(0.5 * (lo + hi))
        k = int(np.floor(np.log2(r_max / r_min))) + 1
        radii = r_min * 2.0 ** np.arange(k)
        return cls(centers=centers, radii=radii,
                   description=f"lattice {centers_per_axis}/axis in {region.kind}, "
                               f"dyadic r in [{r_min:g}, {r_max:g}]", seed=seed)

    def pairs(self):
        for c in self.centers:
            for r in self.radii:
                yield c, float(r)


@dataclass
class NormReport:
    """A sampled-supremum norm value with its witness."""

    value: float
    witness_center: np.ndarray | None
    witness_radius: float | None
    sampling: str
    seed: int | None = None

    def __float__(self):
        return float(self.value)

    def to_json(self) -> str:
        return json.dumps(
            {
                "value": self.value,
                "witness_center": None if self.witness_center is None
                else list(np.asarray(self.witness_center, float)),
                "witness_radius": self.witness_radius,
                "sampling": self.sampling,
                "seed": self.seed,
            },
            sort_keys=True,
        )


# ---------------------------------------------------------------------------
# plain region integrals


def _region_samples(f: ScalarField, region: Region, h: float):
    """Field values and quadrature weights on the region grid.

    Nodes within one cell spacing of a declared singular point of f are
    punctured (dropped); the singularities in scope are integrable, so the
    removed mass is O(h^{n+2}) and log-type fields also carry an evaluation
    floor.
    """
    grid = region if isinstance(region, QuadratureGrid) else build_grid(region, h)
    nodes, weights = grid.nodes, grid.weights
    if f.singular_points is not None and len(nodes):
        cell = np.max(grid.cell_spacing[:-1])
        keep = np.ones(len(nodes), dtype=bool)
        for s in np.atleast_2d(f.singular_points):
            d = nodes - s
            keep &= (np.sum(d[:, :-1] ** 2, axis=1) + np.abs(d[:, -1])) > cell ** 2
        nodes, weights = nodes[keep], weights[keep]
    return f(nodes), weights


def lp_norm(f: ScalarField, region, p: float, h: float = 0.05) -> float:
    """Quadrature L_p norm over the region (or a prebuilt grid)."""
    if p < 1:
        raise ValueError("p must be >= 1")
    vals, w = _region_samples(f, region, h)
    return float(np.sum(w * np.abs(vals) ** p) ** (1.0 / p))


def weak_l1_norm(f: ScalarField, region, h: float = 0.05) -> float:
    """sup_lambda lambda * |{|f| > lambda}| from sorted node values."""
    vals, w = _region_samples(f, region, h)
    a = np.abs(vals)
    order = np.argsort(a)[::-1]
    a = a[order]
    cw = np.cumsum(w[order])
    if len(a) == 0:
        return 0.0
    return float(np.max(a * cw))


def mean_integral(a: ScalarField, region, h: float = 0.05) -> float:
    vals, w = _region_samples(a, region, h)
    tot = np.sum(w)
    return float(np.sum(w * vals) / tot) if tot > 0 else 0.0


def mean_oscillation(a: ScalarField, region, p: float = 1.0, h: float = 0.05) -> float:
    """p-mean oscillation about the region mean; p=1 is the BMO integrand."""
    vals, w = _region_samples(a, region, h)
    tot = np.sum(w)
    if tot == 0:
        return 0.0
    m = np.sum(w * vals) / tot
    return float((np.sum(w * np.abs(vals - m) ** p) / tot) ** (1.0 / p))


def vmo_modulus(a: ScalarField, R: float, sampler: SupSampler,
                resolution: int = 10) -> float:
    """Max sampled mean oscillation over ellipsoids of radius <= R.

    Grids scale with each radius (h = 2r/resolution), so oscillation is
    resolved relative to the window at every scale.
    """
    best = 0.0
    for c, r in sampler.pairs():
        if r > R:
            continue
        osc = mean_oscillation(a, Region.ellipsoid(c, r), p=1.0, h=2.0 * r / resolution)
        best = max(best, osc)
    return best


def bmo_norm(a: ScalarField, sampler: SupSampler, resolution: int = 10) -> NormReport:
    """Sup of mean oscillation over all sampled (center, radius) pairs."""
    best, wit = 0.0, (None, None)
    for c, r in sampler.pairs():
        osc = mean_oscillation(a, Region.ellipsoid(c, r), p=1.0, h=2.0 * r / resolution)
        if osc > best:
            best, wit = osc, (c, r)
    return NormReport(value=best, witness_center=wit[0], witness_radius=wit[1],
                      sampling=sampler.description, seed=sampler.seed)


# ---------------------------------------------------------------------------
# Morrey norms


def _integration_grid(f: ScalarField, domain: Region | None, h: float) -> QuadratureGrid:
    region = domain if domain is not None else f.support
    if region is None:
        raise ValueError(
            "whole-space norms need a compactly supported field (declare f.support)")
    grid = build_grid(region, h)
    if f.singular_points is not None:
        cell = np.max(grid.cell_spacing[:-1])
        keep = np.ones(len(grid.nodes), dtype=bool)
        for s in np.atleast_2d(f.singular_points):
            d = grid.nodes - s
            keep &= (np.sum(d[:, :-1] ** 2, axis=1) + np.abs(d[:, -1])) > cell ** 2
        grid = QuadratureGrid(grid.nodes[keep], grid.weights[keep], grid.h, grid.region)
    return grid


def _window_mask(nodes: np.ndarray, center: np.ndarray, r: float, window: str) -> np.ndarray:
    d = nodes - center
    sp2 = np.sum(d[:, :-1] ** 2, axis=1)
    dt = d[:, -1]
    if window == "ellipsoid":
        return sp2 / r ** 2 + dt ** 2 / r ** 4 < 1.0
    return (sp2 < r ** 2) & (np.abs(dt) < r ** 2)


def _check_phi(val: float) -> float:
    if not np.isfinite(val) or val <= 0:
        raise ValueError("weight function must be positive and finite")
    return float(val)


def morrey_norm(f: ScalarField, p: float, phi, domain: Region | None,
                sampler: SupSampler, h: float = 0.05, window: str | None = None,
                grid: QuadratureGrid | None = None) -> NormReport:
    """Sampled sup of phi(x,r)^{-1} (r^{-(n+2)} int_{W_r(x)} |f|^p)^{1/p}.

    Windows W_r(x) are ellipsoids E_r(x) on the whole space and, per the
    bounded-domain definition, cylinders Q ∩ I_r(x) when a domain is given
    (override with window=). Value is a lower bound of the true sup.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if window is None:
        window = "cylinder" if domain is not None else "ellipsoid"
    g = grid if grid is not None else _integration_grid(f, domain, h)
    vals_p = np.abs(f(g.nodes)) ** p
    wvals = g.weights
    n = g.nodes.shape[1] - 1
    best, wit = -np.inf, (None, None)
    for c, r in sampler.pairs():
        mask = _window_mask(g.nodes, as_point_array(c), r, window)
        integral = float(np.sum(wvals[mask] * vals_p[mask]))
        val = (r ** -(n + 2) * integral) ** (1.0 / p) / _check_phi(phi(c, r))
        if val > best:
            best, wit = val, (c, r)
    return NormReport(value=max(best, 0.0), witness_center=wit[0], witness_radius=wit[1],
                      sampling=sampler.description + f", window={window}", seed=sampler.seed)


def weak_morrey_norm(f: ScalarField, phi, domain: Region | None, sampler: SupSampler,
                     h: float = 0.05, window: str | None = None,
                     grid: QuadratureGrid | None = None) -> NormReport:
    """morrey_norm with the inner integral replaced by the weak-L1 functional."""
    if window is None:
        window = "cylinder" if domain is not None else "ellipsoid"
    g = grid if grid is not None else _integration_grid(f, domain, h)
    avals = np.abs(f(g.nodes))
    wvals = g.weights
    n = g.nodes.shape[1] - 1
    best, wit = -np.inf, (None, None)
    for c, r in sampler.pairs():
        mask = _window_mask(g.nodes, as_point_array(c), r, window)
        a = avals[mask]
        if len(a):
            order = np.argsort(a)[::-1]
            weak = float(np.max(a[order] * np.cumsum(wvals[mask][order])))
        else:
            weak = 0.0
        val = r ** -(n + 2) * weak / _check_phi(phi(c, r))
        if val > best:
            best, wit = val, (c, r)
    return NormReport(value=max(best, 0.0), witness_center=wit[0], witness_radius=wit[1],
                      sampling=sampler.description + f", window={window}", seed=sampler.seed)


def sobolev_morrey_norm(bundle: DerivativeBundle, p: float, phi, Q: Region,
                        sampler: SupSampler, h: float = 0.05) -> float:
    """||u_t|| + sum over |s| <= 2 of ||D^s u|| in the domain Morrey norm."""
    grid = build_grid(Q, h)
    total = 0.0
    for _, fld in bundle.all_fields():
        total += morrey_norm(fld, p, phi, Q, sampler, grid=grid).value
    return float(total)
