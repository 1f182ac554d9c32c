"""Anisotropic singular kernels from the Gaussian fundamental solution.

For a frozen symmetric positive definite matrix a, the fundamental
solution of u_t - a^{ij} D_ij u is

    G(xi', tau) = (4 pi tau)^{-n/2} (det a)^{-1/2} exp(-<a^{-1} xi', xi'>/(4 tau))

for tau > 0 and 0 otherwise. Its second space derivatives G_ij are
kernels homogeneous of degree -(n+2) under the parabolic dilation
(mu xi', mu^2 tau), bounded by M / rho^{n+2}, with vanishing mean on the
unit sphere in the dilation-adapted surface measure w(omega) dsigma,
w = |omega'|^2 + 2 omega_t^2 (the plain-measure mean does not vanish for
these kernels and is reported separately by the audit).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .coefficients import CoefficientField
from .geometry import SphereRule, as_point_array, parabolic_dilate, polar_weight, rho

__all__ = [
    "KernelJet",
    "Kernel",
    "gaussian_jet",
    "gaussian_kernel_values",
    "GaussianDerivativeKernel",
    "FrozenCoefficientKernel",
    "KernelSphereMoments",
    "kernel_sphere_moments",
    "first_derivative_boundary_constants",
    "KernelAuditReport",
    "czk_audit",
]


def _validate_spd(a: np.ndarray) -> tuple:
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or not np.allclose(a, a.T, atol=1e-12):
        raise ValueError("coefficient matrix must be square symmetric")
    ev = np.linalg.eigvalsh(a)
    if ev.min() <= 0:
        raise ValueError("coefficient matrix must be positive definite")
    return a, np.linalg.inv(a), float(np.linalg.det(a))


@dataclass(frozen=True)
class KernelJet:
    """Fundamental-solution values (G, G_j, G_ij) at one point, frozen matrix."""

    a: np.ndarray
    gamma: float
    grad: np.ndarray
    hess: np.ndarray


def _gaussian_all(a_inv: np.ndarray, det_a: float, pts: np.ndarray):
    """G, G_j, G_ij at points (N, n+1); zero for tau <= 0."""
    n = pts.shape[-1] - 1
    sp, tau = pts[..., :n], pts[..., n]
    N = len(pts)
    g = np.zeros(N)
    grad = np.zeros((N, n))
    hess = np.zeros((N, n, n))
    pos = tau > 0
    if np.any(pos):
        spp, tp = sp[pos], tau[pos]
        y = spp @ a_inv  # (a^{-1} xi')_k
        q = np.sum(y * spp, axis=-1) / (4.0 * tp)
        with np.errstate(under="ignore"):
            gp = (4.0 * math.pi * tp) ** (-n / 2.0) / math.sqrt(det_a) * np.exp(-q)
        g[pos] = gp
        grad[pos] = -gp[:, None] * y / (2.0 * tp[:, None])
        outer = y[:, :, None] * y[:, None, :]
        hess[pos] = gp[:, None, None] * (
            outer / (4.0 * tp[:, None, None] ** 2) - a_inv[None, :, :] / (2.0 * tp[:, None, None])
        )
    return g, grad, hess


def gaussian_jet(a, xi) -> KernelJet:
    """Fundamental solution and its first/second space derivatives at xi."""
    a, a_inv, det_a = _validate_spd(a)
    pts = np.atleast_2d(as_point_array(xi))
    g, grad, hess = _gaussian_all(a_inv, det_a, pts)
    return KernelJet(a=a, gamma=float(g[0]), grad=grad[0], hess=hess[0])


def gaussian_kernel_values(a, pts, which: str = "gamma"):
    """Vectorized G / G_j / G_ij over point arrays; which in {gamma, grad, hess}."""
    a, a_inv, det_a = _validate_spd(a)
    pts = np.atleast_2d(as_point_array(pts))
    g, grad, hess = _gaussian_all(a_inv, det_a, pts)
    return {"gamma": g, "grad": grad, "hess": hess}[which]


@dataclass(frozen=True)
class Kernel:
    """Variable singular kernel K(x, xi), parabolically homogeneous of degree -(n+2).

    evaluator(x, xi_points) -> values; for x-independent kernels the first
    argument is ignored. smoothness_bound M dominates |K| rho^{n+2}.
    """

    evaluator: Callable
    n: int
    label: str
    smoothness_bound: float = 1.0

    def __call__(self, x, xi_points) -> np.ndarray:
        return np.asarray(self.evaluator(x, np.atleast_2d(as_point_array(xi_points))),
                          dtype=float)


def GaussianDerivativeKernel(a, i: int, j: int) -> Kernel:
    """Constant-matrix kernel K(xi) = G_ij(xi)."""
    a, a_inv, det_a = _validate_spd(a)
    n = a.shape[0]

    def evaluator(x, pts):
        return _gaussian_all(a_inv, det_a, pts)[2][:, i, j]

    # |G_ij| <= M / rho^{n+2} with M from the frozen matrix's ellipticity
    lam = float(max(np.linalg.eigvalsh(a).max(), 1.0 / np.linalg.eigvalsh(a).min()))
    M = (4.0 * math.pi) ** (-n / 2.0) * lam ** (n / 2.0 + 2.0) * 10.0
    return Kernel(evaluator, n=n, label=f"gauss-d{i+1}{j+1}", smoothness_bound=M)


def FrozenCoefficientKernel(coeffs: CoefficientField, i: int, j: int) -> Kernel:
    """Variable kernel K(x, xi) = G_ij(a(x); xi): matrix frozen at the evaluation point."""
    n = coeffs.n

    def evaluator(x, pts):
        a = coeffs(np.atleast_2d(as_point_array(x)))[0]
        _, a_inv, det_a = _validate_spd(a)
        return _gaussian_all(a_inv, det_a, pts)[2][:, i, j]

    return Kernel(evaluator, n=n, label=f"frozen-{coeffs.label}-d{i+1}{j+1}",
                  smoothness_bound=10.0 * coeffs.ellipticity ** (n / 2.0 + 2.0))


# ---------------------------------------------------------------------------
# sphere moments


@dataclass(frozen=True)
class KernelSphereMoments:
    """Moments of K over S^n in the dilation-adapted measure w dsigma.

    cancellation: int K w dsigma        (must vanish for a principal value)
    time:         int K w omega_t dsigma
    spatial2:     int K w omega_k omega_l dsigma
    plain_mean:   int K dsigma  (Euclidean surface measure, reported only)
    abs_mass:     int |K| dsigma
    """

    cancellation: float
    time: float
    spatial2: np.ndarray
    plain_mean: float
    abs_mass: float


def kernel_sphere_moments(kernel: Kernel, rule: SphereRule, x=None) -> KernelSphereMoments:
    pts, w = rule.nodes, rule.weights
    kv = kernel(x if x is not None else np.zeros(kernel.n + 1), pts)
    wp = polar_weight(pts)
    n = kernel.n
    spatial2 = np.array([[float(np.sum(w * wp * kv * pts[:, k] * pts[:, l]))
                          for l in range(n)] for k in range(n)])
    return KernelSphereMoments(
        cancellation=float(np.sum(w * wp * kv)),
        time=float(np.sum(w * wp * kv * pts[:, n])),
        spatial2=spatial2,
        plain_mean=float(np.sum(w * kv)),
        abs_mass=float(np.sum(w * np.abs(kv))),
    )


def first_derivative_boundary_constants(a, rule: SphereRule) -> np.ndarray:
    """J_ij = int_{S^n} G_j(omega) omega_i dsigma, the potential jump matrix."""
    grad = gaussian_kernel_values(a, rule.nodes, "grad")
    n = grad.shape[1]
    return np.array([[float(np.sum(rule.weights * grad[:, j] * rule.nodes[:, i]))
                      for j in range(n)] for i in range(n)])


# ---------------------------------------------------------------------------
# kernel audit


@dataclass
class KernelAuditReport:
    """Measured kernel-axiom defects; the audit reports, it never raises."""

    label: str
    homogeneity_defect: float
    cancellation_defect: float
    plain_mean: float
    abs_sphere_mass: float
    max_on_sphere: float
    max_gradient_on_sphere: float
    rule_order: int
    notes: str = ("cancellation measured against the dilation-adapted surface "
                  "measure (|w'|^2 + 2 w_t^2) dsigma; plain-measure mean reported "
                  "alongside")

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "homogeneity_defect": self.homogeneity_defect,
            "cancellation_defect": self.cancellation_defect,
            "plain_mean": self.plain_mean,
            "abs_sphere_mass": self.abs_sphere_mass,
            "max_on_sphere": self.max_on_sphere,
            "max_gradient_on_sphere": self.max_gradient_on_sphere,
            "rule_order": self.rule_order,
            "notes": self.notes,
        }


def czk_audit(kernel: Kernel, rule: SphereRule, dilations=(0.5, 2.0, 7.5),
              rng: np.random.Generator | None = None, x=None,
              fd_step: float = 1e-5) -> KernelAuditReport:
    """Measure homogeneity, cancellation and boundedness defects of a kernel.

    Homogeneity: max over sphere nodes and dilation factors mu of the
    relative defect |K(mu o omega) - mu^{-(n+2)} K(omega)| / |mu^{-(n+2)} K(omega)|.
    Boundedness: max |K| and max finite-difference tangential gradient on
    the sphere (first-order smoothness surrogate).
    """
    pts = rule.nodes
    x0 = x if x is not None else np.zeros(kernel.n + 1)
    base = kernel(x0, pts)
    n = kernel.n
    defect = 0.0
    for mu in dilations:
        scaled = kernel(x0, parabolic_dilate(pts, mu))
        expected = mu ** -(n + 2) * base
        denom = np.maximum(np.abs(expected), 1e-300)
        sig = np.abs(expected) > 1e-14 * np.max(np.abs(expected))
        if np.any(sig):
            defect = max(defect, float(np.max(np.abs(scaled - expected)[sig] / denom[sig])))
    mom = kernel_sphere_moments(kernel, rule, x=x0)
    # tangential finite-difference gradient magnitudes at a node subsample
    sel = np.arange(0, len(pts), max(len(pts) // 256, 1))
    grad_max = 0.0
    for idx in sel:
        p = pts[idx]
        for k in range(n + 1):
            e = np.zeros(n + 1)
            e[k] = fd_step
            pp = (p + e) / np.linalg.norm(p + e)
            pm = (p - e) / np.linalg.norm(p - e)
            dd = np.linalg.norm(pp - pm)
            if dd > 0:
                g = abs(float(kernel(x0, pp[None, :])[0] - kernel(x0, pm[None, :])[0])) / dd
                grad_max = max(grad_max, g)
    return KernelAuditReport(
        label=kernel.label,
        homogeneity_defect=defect,
        cancellation_defect=abs(mom.cancellation),
        plain_mean=mom.plain_mean,
        abs_sphere_mass=mom.abs_mass,
        max_on_sphere=float(np.max(np.abs(base))),
        max_gradient_on_sphere=grad_max,
        rule_order=rule.order,
    )
