"""Symmetric uniformly elliptic coefficient fields a(x) for the model operator.

A CoefficientField wraps a matrix-valued evaluator with a declared
ellipticity constant Lambda: Lambda^{-1}|xi|^2 <= <a(x) xi, xi> <= Lambda|xi|^2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import as_point_array, rho

__all__ = ["CoefficientField", "identity_coefficients", "constant_coefficients",
           "smooth_anisotropic_coefficients", "vmo_log_coefficients", "random_spd_matrix"]


@dataclass(frozen=True)
class CoefficientField:
    """Matrix field a: R^{n+1} -> sym(n x n), with ellipticity bound."""

    matrix: Callable
    n: int
    ellipticity: float
    label: str = ""
    time_dependent: bool = True

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(as_point_array(points))
        a = np.asarray(self.matrix(pts), dtype=float)
        if a.shape != (len(pts), self.n, self.n):
            raise ValueError(f"coefficient evaluator returned shape {a.shape}")
        return a

    def validate_at(self, points, atol: float = 1e-10) -> None:
        """Check exact symmetry and eigenvalue bounds at the given points."""
        a = self(points)
        if not np.allclose(a, np.swapaxes(a, -1, -2), atol=atol, rtol=0.0):
            raise ValueError(f"coefficient field {self.label!r} is not symmetric")
        ev = np.linalg.eigvalsh(a)
        lam = self.ellipticity
        if ev.min() < 1.0 / lam - atol or ev.max() > lam + atol:
            raise ValueError(
                f"coefficient field {self.label!r} violates ellipticity "
                f"[{1/lam:.4g}, {lam:.4g}]: eigenvalues in [{ev.min():.4g}, {ev.max():.4g}]"
            )


def identity_coefficients(n: int) -> CoefficientField:
    ident = np.eye(n)

    def matrix(pts):
        return np.broadcast_to(ident, (len(pts), n, n)).copy()

    return CoefficientField(matrix, n=n, ellipticity=1.0, label="identity",
                            time_dependent=False)


def constant_coefficients(a, label: str = "constant") -> CoefficientField:
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or not np.allclose(a, a.T):
        raise ValueError("constant coefficient matrix must be square symmetric")
    ev = np.linalg.eigvalsh(a)
    if ev.min() <= 0:
        raise ValueError("constant coefficient matrix must be positive definite")
    lam = max(ev.max(), 1.0 / ev.min())

    def matrix(pts):
        return np.broadcast_to(a, (len(pts), n, n)).copy()

    return CoefficientField(matrix, n=n, ellipticity=float(lam), label=label,
                            time_dependent=False)


def smooth_anisotropic_coefficients(n: int, amplitude: float = 0.3) -> CoefficientField:
    """Diagonal-dominant smooth field: a = I + amplitude*sin/cos modulation."""
    if not 0 <= amplitude < 0.5:
        raise ValueError("amplitude must lie in [0, 0.5)")

    def matrix(pts):
        sp = pts[:, :n]
        t = pts[:, n]
        a = np.broadcast_to(np.eye(n), (len(pts), n, n)).copy()
        for i in range(n):
            a[:, i, i] = 1.0 + amplitude * np.sin(np.pi * sp[:, i]) * np.cos(np.pi * t)
        if n >= 2:
            off = 0.5 * amplitude * np.sin(np.pi * sp[:, 0]) * np.sin(np.pi * sp[:, 1])
            a[:, 0, 1] += off
            a[:, 1, 0] += off
        return a

    lam = (1.0 + 1.5 * amplitude) / (1.0 - 1.5 * amplitude)
    return CoefficientField(matrix, n=n, ellipticity=float(lam),
                            label=f"smooth-anisotropic({amplitude})")


def vmo_log_coefficients(n: int, singular_point=None, amplitude: float = 0.5) -> CoefficientField:
    """Discontinuous-at-a-point field a^11 = 2 + amp*sin(|log rho(x - x_c)|^{1/2}).

    The modulation is a bounded sine of a vanishing-mean-oscillation symbol,
    so the field has vanishing oscillation modulus while being discontinuous
    at x_c; the remaining entries are the identity.
    """

    def matrix(pts):
        a = np.broadcast_to(np.eye(n), (len(pts), n, n)).copy()
        xc = np.zeros(n + 1) if singular_point is None else as_point_array(singular_point)
        r = np.maximum(rho(pts - xc), 1e-12)
        a[:, 0, 0] = 2.0 + amplitude * np.sin(np.sqrt(np.abs(np.log(r))))
        return a

    return CoefficientField(matrix, n=n, ellipticity=float(2.0 + amplitude),
                            label="vmo-log")


def random_spd_matrix(rng: np.random.Generator, n: int, ellipticity: float) -> np.ndarray:
    """Random symmetric matrix with spectrum inside [1/Lambda, Lambda]."""
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    ev = rng.uniform(1.0 / ellipticity, ellipticity, size=n)
    return (q * ev) @ q.T
