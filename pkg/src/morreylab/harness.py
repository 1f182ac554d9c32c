"""Experiment orchestration: validated configs, dispatch, JSON reports.

Every run is fully determined by (config, seed); reports are
schema-versioned JSON whose only run-to-run difference is the wall-clock
field. Exit status of the CLI is 0 iff every check in the report passed.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import __version__
from .coefficients import identity_coefficients, smooth_anisotropic_coefficients
from .fields import default_battery, expression_field, log_rho_power_field
from .geometry import Region, sphere_rule
from .kernels import GaussianDerivativeKernel, czk_audit
from .norms import SupSampler, morrey_norm
from .operators import (PVConfig, comparability_audit, operator_norm_experiment,
                        reflected_operator, singular_operator,
                        vmo_smallness_experiment)
from .solver import (apriori_ratio, make_audit_bundle, make_manufactured,
                     manufactured_ids, representation_audit, solve_cdp)
from .weights import (check_condition_A, check_condition_B, weight_from_config)

__all__ = ["ExperimentConfig", "RunReport", "run", "run_config_file", "list_catalog",
           "EXPERIMENT_KINDS"]

SCHEMA_VERSION = 1

EXPERIMENT_KINDS = (
    "norm", "weight-check", "kernel-audit", "operator-bound",
    "commutator-vmo", "representation", "pde-verify", "apriori",
)

_TOP_KEYS = {"kind", "seed", "params", "out"}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    seed: int = 0
    params: dict = dc_field(default_factory=dict)
    out: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kind = data.get("kind")
        if kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"kind must be one of {EXPERIMENT_KINDS}, got {kind!r}")
        params = data.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("params must be an object")
        return cls(kind=kind, seed=int(data.get("seed", 0)), params=dict(params),
                   out=data.get("out"))

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        text = Path(path).read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"config parse error in {path}: {exc.msg} "
                f"(line {exc.lineno}, column {exc.colno})") from exc
        return cls.from_dict(data)


@dataclass
class RunReport:
    kind: str
    config: dict
    seed: int
    checks: list
    wall_clock_s: float

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "tool": f"morreylab {__version__}",
            "kind": self.kind,
            "config": self.config,
            "seed": self.seed,
            "checks": self.checks,
            "passed": self.passed,
            "wall_clock_s": self.wall_clock_s,
        }

    def to_json(self) -> str:
        return json.dumps(_plain(self.to_dict()), sort_keys=True, indent=2) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _check(name: str, passed: bool, value, tolerance=None, **details) -> dict:
    row = {"name": name, "passed": bool(passed), "value": _plain(value)}
    if tolerance is not None:
        row["tolerance"] = tolerance
    if details:
        row["details"] = _plain(details)
    return row


# ---------------------------------------------------------------------------
# experiment runners (one per kind)


def _p(params, key, default):
    return params.get(key, default)


def _run_norm(params: dict, rng) -> list:
    n = int(_p(params, "n", 2))
    p = float(_p(params, "p", 2.0))
    expr = _p(params, "field", {"expr": "exp(-xnorm**2 - t**2)"})
    dom = Region.box_cylinder(np.zeros(n), np.ones(n), 1.0)
    f = expression_field(expr["expr"], n, support=dom)
    phi = weight_from_config(_p(params, "weight", {"family": "power", "beta": 1.0}), n, p)
    sampler = SupSampler.for_region(dom, centers_per_axis=2, r_min=0.2, r_max=2.0,
                                    seed=None)
    rep = morrey_norm(f, p, phi, dom, sampler, h=float(_p(params, "h", 0.08)))
    return [_check("morrey-norm-finite", np.isfinite(rep.value), rep.value,
                   witness_radius=rep.witness_radius)]


def _run_weight_check(params: dict, rng) -> list:
    n = int(_p(params, "n", 2))
    p = float(_p(params, "p", 2.0))
    phi = weight_from_config(_p(params, "weight", {"family": "power", "beta": 1.0}), n, p)
    x = np.zeros((1, n + 1))
    r_samples = np.asarray(_p(params, "r_samples", [0.25, 0.5, 1.0, 2.0]), dtype=float)
    s_max = float(_p(params, "s_max", 1e6))
    rep_a = check_condition_A(phi, p, n, x, r_samples, s_max)
    rep_b = check_condition_B(phi, p, n, x, r_samples, s_max)
    checks = [
        _check("condition-A", rep_a.passed, rep_a.constant,
               growth_per_decade=rep_a.growth_per_decade),
        _check("condition-B", rep_b.passed, rep_b.constant,
               growth_per_decade=rep_b.growth_per_decade),
    ]
    expect_divergent = bool(_p(params, "expect_divergent", False))
    if expect_divergent:
        checks = [
            _check("condition-A-divergent", not rep_a.passed, rep_a.constant),
            _check("condition-B-divergent", not rep_b.passed, rep_b.constant),
        ]
    return checks


def _run_kernel_audit(params: dict, rng) -> list:
    n = int(_p(params, "n", 2))
    order = int(_p(params, "order", 10))
    matrix = np.asarray(_p(params, "matrix", np.eye(n).tolist()), dtype=float)
    i = int(_p(params, "i", 1)) - 1
    j = int(_p(params, "j", 1)) - 1
    kern = GaussianDerivativeKernel(matrix, i, j)
    rule = sphere_rule(n, order)
    audit = czk_audit(kern, rule)
    return [
        _check("homogeneity", audit.homogeneity_defect <= 1e-10,
               audit.homogeneity_defect, tolerance=1e-10),
        _check("cancellation", audit.cancellation_defect <= 1e-4,
               audit.cancellation_defect, tolerance=1e-4,
               plain_mean=audit.plain_mean),
        _check("sphere-mass-finite", np.isfinite(audit.abs_sphere_mass),
               audit.abs_sphere_mass),
        _check("bounded-on-sphere", np.isfinite(audit.max_on_sphere),
               audit.max_on_sphere, gradient=audit.max_gradient_on_sphere),
    ]


def _run_operator_bound(params: dict, rng) -> list:
    n = int(_p(params, "n", 2))
    p = float(_p(params, "p", 2.0))
    phi = weight_from_config(_p(params, "weight", {"family": "power", "beta": 1.0}), n, p)
    battery = default_battery(n)[: int(_p(params, "battery_size", 12))]
    if not battery:
        raise ConfigError("operator-bound needs a nonempty battery")
    hs = _p(params, "levels", [0.14, 0.1, 0.07])
    levels = [PVConfig(eps=2.0 * h, h=h, mode="grid", subtract=False) for h in hs]
    support = Region.ellipsoid(np.zeros(n + 1), 1.0)
    sampler = SupSampler.for_region(support, centers_per_axis=2, r_min=0.3, r_max=4.8)
    opname = _p(params, "operator", "singular")
    if opname == "singular":
        op = singular_operator(GaussianDerivativeKernel(np.eye(n), 0, 0))
    elif opname == "reflected":
        op = reflected_operator(GaussianDerivativeKernel(np.eye(n), 0, 0),
                                identity_coefficients(n))
        support = Region.semi_ellipsoid(np.zeros(n + 1), 1.0)
        sampler = SupSampler.for_region(support, centers_per_axis=2, r_min=0.3, r_max=4.8)
    else:
        raise ConfigError(f"unknown operator {opname!r}")
    report = operator_norm_experiment(op, battery, p, phi, levels, support, sampler)
    tol = float(_p(params, "drift_tol", 0.2))
    return [_check("refinement-drift", report.drift < tol, report.drift,
                   tolerance=tol, max_ratio=report.max_ratio,
                   levels=report.levels)]


def _run_commutator_vmo(params: dict, rng) -> list:
    n = int(_p(params, "n", 2))
    p = float(_p(params, "p", 2.0))
    phi = weight_from_config(_p(params, "weight", {"family": "power", "beta": 1.0}), n, p)
    alpha = float(_p(params, "alpha", 0.5))
    r0 = [float(r) for r in _p(params, "r0", [0.5, 0.25, 0.125])]
    kern = GaussianDerivativeKernel(np.eye(n), 0, 0)
    a = log_rho_power_field(n, alpha)
    rows = vmo_smallness_experiment(kern, a, r0, p, phi)
    maxima = [row["max_ratio"] for row in rows]
    expect = _p(params, "expect", "decreasing" if alpha < 1 else "nondecaying")
    if expect == "decreasing":
        ok = all(b < a_ for a_, b in zip(maxima, maxima[1:]))
    else:
        ok = maxima[-1] > 0.5 * maxima[0]
    return [_check(f"smallness-{expect}", ok, maxima, rows=rows)]


def _run_representation(params: dict, rng) -> list:
    n = int(_p(params, "n", 2))
    tol = float(_p(params, "tol", 0.05))
    v = make_audit_bundle(n)
    cfg = PVConfig(eps=float(_p(params, "eps", 1e-4)), h=float(_p(params, "h", 0.05)),
                   r_split=0.3, sphere_order=8, n_radial=24)
    table = representation_audit(v, np.eye(n), cfg=cfg)
    return [_check("representation-error", table["max_rel_error"] <= tol,
                   table["max_rel_error"], tolerance=tol, table=table)]


def _run_pde_verify(params: dict, rng) -> list:
    ident = _p(params, "id", "identity-sine")
    n = int(_p(params, "n", 2))
    hs = [float(h) for h in _p(params, "h_list", [0.2, 0.1, 0.05])]
    errs = []
    for h in hs:
        inst = make_manufactured(ident, n=n, h=h)
        res = solve_cdp(inst)
        pts = res.bundle.u.axes
        mesh = np.meshgrid(*pts, indexing="ij")
        nodes = np.stack([m.ravel() for m in mesh], axis=-1)
        err = float(np.max(np.abs(res.bundle.u.values.ravel() - inst.exact.u(nodes))))
        errs.append(err)
    orders = [np.log2(errs[k] / errs[k + 1]) / np.log2(hs[k] / hs[k + 1])
              for k in range(len(errs) - 1)]
    order_min = float(_p(params, "order_min", 1.8))
    return [_check("convergence-order", min(orders) >= order_min, orders,
                   tolerance=order_min, errors=errs, h_list=hs)]


def _run_apriori(params: dict, rng) -> list:
    ident = _p(params, "id", "identity-sine")
    n = int(_p(params, "n", 2))
    p = float(_p(params, "p", 2.0))
    phi = weight_from_config(_p(params, "weight", {"family": "power", "beta": 1.0}), n, p)
    hs = [float(h) for h in _p(params, "h_list", [0.2, 0.125, 0.1])]
    stability = float(_p(params, "stability", 0.25))
    ratios = []
    for h in hs:
        inst = make_manufactured(ident, n=n, h=h)
        res = solve_cdp(inst)
        sampler = SupSampler.for_region(inst.Q, centers_per_axis=2, r_min=0.25,
                                        r_max=2.0)
        ratios.append(apriori_ratio(res, inst, p, phi, sampler, h_norm=0.1))
    ref = ratios[-1]
    drift = max(abs(r - ref) / ref for r in ratios)
    return [_check("apriori-stability", drift <= stability, ratios,
                   tolerance=stability, drift=drift)]


_RUNNERS = {
    "norm": _run_norm,
    "weight-check": _run_weight_check,
    "kernel-audit": _run_kernel_audit,
    "operator-bound": _run_operator_bound,
    "commutator-vmo": _run_commutator_vmo,
    "representation": _run_representation,
    "pde-verify": _run_pde_verify,
    "apriori": _run_apriori,
}


def run(config: ExperimentConfig, out_dir=None) -> RunReport:
    """Dispatch an experiment; write the JSON report if an output is set."""
    rng = np.random.default_rng(config.seed)
    t0 = time.perf_counter()
    checks = _RUNNERS[config.kind](config.params, rng)
    report = RunReport(
        kind=config.kind,
        config={"kind": config.kind, "seed": config.seed, "params": config.params},
        seed=config.seed,
        checks=checks,
        wall_clock_s=time.perf_counter() - t0,
    )
    target = out_dir if out_dir is not None else config.out
    if target is not None:
        path = Path(target)
        path.mkdir(parents=True, exist_ok=True)
        (path / f"{config.kind}-report.json").write_text(report.to_json())
    return report


def run_config_file(path, seed: int | None = None, out_dir=None) -> RunReport:
    config = ExperimentConfig.from_file(path)
    if seed is not None:
        config.seed = seed
    return run(config, out_dir=out_dir)


def list_catalog() -> str:
    """Stable sorted listing of presets usable in configs."""
    lines = ["experiment kinds:"]
    lines += [f"  {k}" for k in sorted(EXPERIMENT_KINDS)]
    lines.append("manufactured problems:")
    lines += [f"  {k}" for k in sorted(manufactured_ids())]
    lines.append("weight families:")
    lines += [f"  {k}" for k in sorted(["power", "power-log", "expr"])]
    lines.append("kernel families:")
    lines += [f"  {k}" for k in sorted(["gaussian-jet"])]
    lines.append("battery presets:")
    lines += [f"  {f.label}" for f in default_battery(2)]
    return "\n".join(lines) + "\n"
