"""Weight families, the Hardy averaging operator and admissibility checkers.

A weight is a positive function phi(x, r) of a space-time point and a
radius. The two admissibility conditions integrate a monotone envelope of
phi(x, s) s^{(n+2)/p} against s^{-(n+2)/p - 1} ds from r to infinity,
condition B carrying an extra (1 + ln(s/r)) factor. The unresolved
envelope operator is read as essential infimum over (s, inf) there, and as
essential supremum over (0, s) in the Hardy constant; reports carry the
reading.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .expressions import compile_expression
from .geometry import as_point_array

__all__ = [
    "WeightFunction",
    "power_weight",
    "power_log_weight",
    "expression_weight",
    "weight_from_config",
    "StepFunction",
    "random_nonincreasing_step",
    "HardyPair",
    "hardy_transform",
    "hardy_constant",
    "hardy_refinement",
    "ConditionReport",
    "check_condition_A",
    "check_condition_B",
    "DIVERGENT",
]

#: sentinel constant value for a failed (divergent) admissibility integral
DIVERGENT = "DIVERGENT"

#: relative growth per decade of S_max above which the integral is classified divergent
DIVERGENCE_GROWTH = 0.10


@dataclass(frozen=True)
class WeightFunction:
    """phi(x, r): point x in R^{n+1}, radius r > 0 -> positive real."""

    evaluator: Callable
    label: str
    params: dict = dc_field(default_factory=dict)

    def __call__(self, x, r):
        val = np.asarray(self.evaluator(as_point_array(x), np.asarray(r, dtype=float)),
                         dtype=float)
        if np.any(~np.isfinite(val)) or np.any(val <= 0):
            raise ValueError(f"weight {self.label!r} must be positive and finite")
        return val if val.ndim else float(val)


def power_weight(exponent: float) -> WeightFunction:
    """phi = r^exponent (x-independent)."""
    return WeightFunction(lambda x, r: r ** exponent, label=f"r^{exponent:g}",
                          params={"exponent": exponent})


def power_log_weight(exponent: float, m: float) -> WeightFunction:
    """phi = r^exponent * log^m(e + r)."""
    return WeightFunction(lambda x, r: r ** exponent * np.log(np.e + r) ** m,
                          label=f"r^{exponent:g} log^{m:g}(e+r)",
                          params={"exponent": exponent, "m": m})


def expression_weight(text: str, n: int) -> WeightFunction:
    """Weight from the config grammar; variables r, t, xnorm and x1..xn."""
    names = tuple(f"x{i+1}" for i in range(n)) + ("t", "xnorm", "r")
    fn = compile_expression(text, names)

    def evaluator(x, r):
        kwargs = {f"x{i+1}": x[..., i] for i in range(n)}
        kwargs["t"] = x[..., n]
        kwargs["xnorm"] = np.sqrt(np.sum(x[..., :n] ** 2, axis=-1))
        kwargs["r"] = r
        return fn(**kwargs)

    return WeightFunction(evaluator, label=text, params={"expr": text})


def weight_from_config(spec: dict, n: int, p: float) -> WeightFunction:
    """Build a weight from a config block.

    {"family": "power", "beta": b}      -> r^{b - (n+2)/p}
    {"family": "power-log", "beta": b, "m": m}
    {"expr": "<grammar expression>"}
    """
    if "expr" in spec:
        return expression_weight(spec["expr"], n)
    family = spec.get("family")
    if family == "power":
        return power_weight(spec["beta"] - (n + 2) / p)
    if family == "power-log":
        return power_log_weight(spec["beta"] - (n + 2) / p, spec.get("m", 1))
    raise ValueError(f"unknown weight config {spec!r}")


# ---------------------------------------------------------------------------
# Hardy operator


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous step function on (0, inf) with exact integrals."""

    breaks: np.ndarray   # ascending break points, values[k] on (breaks[k-1], breaks[k]]
    values: np.ndarray   # len(values) = len(breaks) + 1; last value holds beyond breaks[-1]

    def __post_init__(self):
        b = np.asarray(self.breaks, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if len(v) != len(b) + 1 or np.any(np.diff(b) <= 0) or np.any(b <= 0):
            raise ValueError("need ascending positive breaks and len(values) == len(breaks)+1")
        object.__setattr__(self, "breaks", b)
        object.__setattr__(self, "values", v)

    def __call__(self, s):
        return self.values[np.searchsorted(self.breaks, s, side="left")]

    def integral(self, a: float, b: float) -> float:
        """Exact integral over (a, b)."""
        edges = np.concatenate([[a], self.breaks[(self.breaks > a) & (self.breaks < b)], [b]])
        mids = 0.5 * (edges[:-1] + edges[1:])
        return float(np.sum(np.diff(edges) * self(mids)))

    @property
    def non_increasing(self) -> bool:
        return bool(np.all(np.diff(self.values) <= 0))


def random_nonincreasing_step(rng: np.random.Generator, n_steps: int = 6,
                              r_max: float = 8.0) -> StepFunction:
    breaks = np.sort(rng.uniform(0.05, r_max, size=n_steps))
    drops = rng.uniform(0.05, 1.0, size=n_steps + 1)
    values = np.cumsum(drops[::-1])[::-1]
    return StepFunction(breaks=breaks, values=values)


def hardy_transform(g, r: float) -> float:
    """Hg(r) = (1/r) * integral of g over (0, r).

    Step functions integrate exactly; generic callables use adaptive
    quadrature with endpoint refinement, and a divergence at 0 is flagged.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    if isinstance(g, StepFunction):
        return g.integral(0.0, r) / r
    val, _ = quad(g, 0.0, r, limit=200, points=[r * 1e-6, r * 1e-3, r * 0.1])
    if not np.isfinite(val):
        raise ValueError("integrand diverges on (0, r)")
    return float(val / r)


@dataclass(frozen=True)
class HardyPair:
    """Weights w, v on r > 0 and a non-increasing test function g."""

    w: Callable
    v: Callable
    g: StepFunction | Callable = None

    def __post_init__(self):
        if isinstance(self.g, StepFunction) and not self.g.non_increasing:
            raise ValueError("test function g must be non-increasing")


def hardy_refinement(r_grid: np.ndarray, refine: int = 40) -> np.ndarray:
    """Log-refinement of r_grid reaching six decades below its smallest point."""
    r_grid = np.sort(np.asarray(r_grid, dtype=float))
    if np.any(r_grid <= 0):
        raise ValueError("r_grid must be positive")
    parts = [np.geomspace(r_grid[0] * 1e-6, r_grid[0], 6 * refine)]
    parts += [np.geomspace(a, b, refine) for a, b in zip(r_grid[:-1], r_grid[1:])]
    return np.unique(np.concatenate(parts))


def hardy_constant(pair: HardyPair, r_grid: np.ndarray, refine: int = 40) -> float:
    """A = sup over r of (w(r)/r) * int_0^r ds / ess-sup_{0<z<s} v(z).

    Both the inner running supremum and the outer sup are evaluated on a
    log-refinement of r_grid; normalization C = 1, under which the Hardy
    inequality for non-increasing test functions holds as stated.
    """
    fine = hardy_refinement(r_grid, refine)
    v_vals = np.asarray(pair.v(fine), dtype=float)
    if v_vals.shape != fine.shape:
        v_vals = np.asarray([pair.v(s) for s in fine], dtype=float)
    if np.any(v_vals <= 0):
        raise ValueError("v must be positive")
    run_sup = np.maximum.accumulate(v_vals)
    inv = 1.0 / run_sup
    # cumulative trapezoid of ds / run_sup, including the (0, fine[0]) stub
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (inv[1:] + inv[:-1]) * np.diff(fine))])
    cum += fine[0] * inv[0]
    w_vals = np.asarray(pair.w(fine), dtype=float)
    if w_vals.shape != fine.shape:
        w_vals = np.asarray([pair.w(s) for s in fine], dtype=float)
    return float(np.max(w_vals / fine * cum))


# ---------------------------------------------------------------------------
# admissibility conditions


@dataclass
class ConditionReport:
    """Witnessed constant for an admissibility condition, or DIVERGENT."""

    condition_id: str
    constant: float | str
    x_samples: np.ndarray
    r_samples: np.ndarray
    s_max: float
    tail_estimate: float
    growth_per_decade: float
    notes: str = ""

    @property
    def passed(self) -> bool:
        return self.constant != DIVERGENT

    def to_json(self) -> str:
        return json.dumps(
            {
                "condition": self.condition_id,
                "constant": self.constant if self.constant == DIVERGENT
                else float(self.constant),
                "x_samples": np.asarray(self.x_samples).tolist(),
                "r_samples": np.asarray(self.r_samples).tolist(),
                "s_max": self.s_max,
                "tail_estimate": self.tail_estimate,
                "growth_per_decade": self.growth_per_decade,
                "notes": self.notes,
            },
            sort_keys=True,
        )


def _raw_condition_lhs(phi: WeightFunction, x, r: float, kappa: float, s_max: float,
                       log_factor: bool, pts_per_decade: int = 400) -> tuple:
    """Truncated LHS integral and the frozen-envelope tail estimate.

    kappa = (n+2)/p. Envelope: running inf from the right of
    q(z) = phi(x, z) z^kappa over a log grid extended a decade past s_max.
    """
    s_lo, s_hi = r, s_max
    n_pts = max(int(np.log10(10.0 * s_hi / s_lo) * pts_per_decade), 200)
    zs = np.geomspace(s_lo, 10.0 * s_hi, n_pts)
    q = np.asarray(phi(x, zs), dtype=float) * zs ** kappa
    env = np.minimum.accumulate(q[::-1])[::-1]
    m = zs <= s_hi
    s = zs[m]
    integrand = env[m] / s ** (kappa + 1.0)
    if log_factor:
        integrand = integrand * (1.0 + np.log(s / r))
    val = float(np.trapezoid(integrand, s))
    # frozen envelope beyond s_max: env constant = env(s_max)
    e_inf = env[m][-1]
    if log_factor:
        tail = e_inf * s_hi ** -kappa * ((1.0 + np.log(s_hi / r)) / kappa + 1.0 / kappa ** 2)
    else:
        tail = e_inf * s_hi ** -kappa / kappa
    return val, float(tail)


def _check_condition(phi: WeightFunction, p: float, n: int, x_samples, r_samples,
                     s_max: float, log_factor: bool, cond_id: str) -> ConditionReport:
    if p < 1:
        raise ValueError("p must be >= 1")
    kappa = (n + 2) / p
    x_samples = np.atleast_2d(np.asarray(x_samples, dtype=float))
    r_samples = np.asarray(r_samples, dtype=float)
    best = 0.0
    worst_growth = 0.0
    tail_at_best = 0.0
    for x in x_samples:
        for r in r_samples:
            v_mid, _ = _raw_condition_lhs(phi, x, r, kappa, s_max / 10.0, log_factor)
            v_full, tail = _raw_condition_lhs(phi, x, r, kappa, s_max, log_factor)
            growth = (v_full - v_mid) / v_full if v_full > 0 else 0.0
            worst_growth = max(worst_growth, growth)
            ratio = (v_full + tail) / float(phi(x, r))
            if ratio > best:
                best, tail_at_best = ratio, tail
    divergent = worst_growth >= DIVERGENCE_GROWTH
    return ConditionReport(
        condition_id=cond_id,
        constant=DIVERGENT if divergent else best,
        x_samples=x_samples,
        r_samples=r_samples,
        s_max=s_max,
        tail_estimate=tail_at_best,
        growth_per_decade=worst_growth,
        notes="envelope = essential infimum over (s, inf); "
              "tail frozen at the last envelope value",
    )


def check_condition_A(phi: WeightFunction, p: float, n: int, x_samples, r_samples,
                      s_max: float = 1e6) -> ConditionReport:
    """Admissibility without the log factor; witnessed C or DIVERGENT."""
    return _check_condition(phi, p, n, x_samples, r_samples, s_max, False, "A-eq6")


def check_condition_B(phi: WeightFunction, p: float, n: int, x_samples, r_samples,
                      s_max: float = 1e6) -> ConditionReport:
    """Admissibility with the (1 + ln(s/r)) factor; witnessed C or DIVERGENT."""
    return _check_condition(phi, p, n, x_samples, r_samples, s_max, True, "B-eq8")
