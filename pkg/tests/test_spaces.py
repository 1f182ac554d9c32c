import math

import numpy as np
import pytest
from scipy.special import erf

from morreylab.fields import (ScalarField, bump_field, default_battery,
                              expression_field, grid_field, indicator_field,
                              load_grid_field, log_rho_power_field,
                              save_grid_field, sin_log_rho_power_field)
from morreylab.geometry import (Region, build_grid, rho, sample_in_ellipsoid,
                                unit_ball_volume)
from morreylab.norms import (SupSampler, bmo_norm, lp_norm, mean_integral,
                             mean_oscillation, morrey_norm, sobolev_morrey_norm,
                             vmo_modulus, weak_l1_norm, weak_morrey_norm)
from morreylab.solver import make_manufactured

E1_VOL = unit_ball_volume(3)  # |E_1| for n = 2


def const_field(c, n=2, support=None):
    return ScalarField(lambda p: np.full(p.shape[:-1], float(c)), n,
                       label=f"const{c}", support=support)


@pytest.fixture(scope="module")
def e1():
    return Region.ellipsoid(np.zeros(3), 1.0)


class TestLpNorm:
    def test_constant_on_unit_ellipsoid(self, e1):
        val = lp_norm(const_field(1.0), e1, p=1, h=0.05)
        assert val == pytest.approx(4 * math.pi / 3, rel=0.02)

    def test_volume_scaling_in_r(self):
        p = 2.0
        for r in (0.5, 2.0):
            er = Region.ellipsoid(np.zeros(3), r)
            val = lp_norm(const_field(1.0), er, p=p, h=0.08 * r)
            assert val == pytest.approx(r ** (4 / p) * E1_VOL ** (1 / p), rel=0.02)

    def test_half_region_indicator(self, e1):
        f = ScalarField(lambda pts: (pts[..., 2] > 0).astype(float), 2, "upper")
        full = lp_norm(const_field(1.0), e1, p=1, h=0.05)
        half = lp_norm(f, e1, p=1, h=0.05)
        assert half == pytest.approx(0.5 * full, rel=1e-9)

    def test_rejects_p_below_one(self, e1):
        with pytest.raises(ValueError):
            lp_norm(const_field(1.0), e1, p=0.5)

    def test_monotone_in_region(self):
        f = bump_field(2, r_space=2.0)
        small = lp_norm(f, Region.ellipsoid(np.zeros(3), 0.5), p=2, h=0.05)
        big = lp_norm(f, Region.ellipsoid(np.zeros(3), 1.0), p=2, h=0.05)
        assert big >= small

    def test_quadrature_convergence_order(self):
        # smooth closed form with an independent product-erf oracle
        q = Region.box_cylinder([0.0, 0.0], [1.0, 1.0], 1.0)
        f = expression_field("exp(-(x1**2 + x2**2 + t**2))", 2, support=q)
        one_d = math.sqrt(math.pi / 2) / 2 * erf(math.sqrt(2.0))
        exact = (one_d ** 3) ** 0.5
        errs = [abs(lp_norm(f, q, p=2, h=h) - exact) for h in (0.2, 0.1)]
        order = math.log2(errs[0] / errs[1])
        assert order >= 1.0

    def test_dilation_covariance_exact(self):
        p, r = 2.0, 1.7
        f = bump_field(2, r_space=0.9)
        f_r = ScalarField(lambda pts: f.evaluator(
            np.concatenate([pts[..., :2] / r, pts[..., 2:] / r ** 2], axis=-1)),
            2, "dilated")
        lhs = lp_norm(f_r, Region.ellipsoid(np.zeros(3), r), p=p, h=0.1 * r)
        rhs = r ** (4 / p) * lp_norm(f, Region.ellipsoid(np.zeros(3), 1.0), p=p, h=0.1)
        assert lhs == pytest.approx(rhs, rel=1e-12)


class TestWeakL1:
    def test_constant(self, e1):
        c = 2.5
        val = weak_l1_norm(const_field(c), e1, h=0.05)
        vol = lp_norm(const_field(1.0), e1, p=1, h=0.05)
        assert val == pytest.approx(c * vol, rel=1e-9)

    def test_chebyshev_bound(self, e1):
        f = bump_field(2, r_space=0.8)
        assert weak_l1_norm(f, e1, h=0.06) <= lp_norm(f, e1, p=1, h=0.06) * (1 + 1e-9)

    def test_inverse_power_stable_under_truncation(self):
        # rho^{-(n+2)} truncated inside the resolution scale and outside at R:
        # the exact distribution function gives |{f > lambda}| = |E_1|/lambda,
        # so the weak norm is |E_1|(1 - (r_core/R)^4) ~ |E_1| at every R
        r_core = 0.15
        f = ScalarField(
            lambda pts: np.where(rho(pts) > r_core,
                                 np.maximum(rho(pts), r_core) ** -4.0, 0.0),
            2, "rho^-4 truncated")
        vals = []
        for R in (1.0, 1.5, 2.0):
            vals.append(weak_l1_norm(f, Region.ellipsoid(np.zeros(3), R), h=0.04 * R))
        for v in vals:
            assert v == pytest.approx(E1_VOL, rel=0.1)
        assert max(vals) - min(vals) <= 0.1 * max(vals)


class TestMeans:
    def test_constant_mean(self, e1):
        assert mean_integral(const_field(3.3), e1, h=0.08) == pytest.approx(3.3)

    def test_odd_coordinate_mean_zero(self, e1):
        f = ScalarField(lambda p: p[..., 0], 2, "y1")
        assert abs(mean_integral(f, e1, h=0.08)) < 1e-12

    def test_squared_coordinate_against_monte_carlo(self, e1):
        f = ScalarField(lambda p: p[..., 0] ** 2, 2, "y1^2")
        val = mean_integral(f, e1, h=0.04)
        rng = np.random.default_rng(123)
        samples = sample_in_ellipsoid(rng, np.zeros(3), 1.0, 400_000)
        mc = float(np.mean(samples[:, 0] ** 2))
        assert val == pytest.approx(mc, rel=0.01)

    def test_oscillation_constant_zero(self, e1):
        assert mean_oscillation(const_field(7.0), e1, h=0.08) <= 1e-12

    def test_oscillation_linear_against_monte_carlo(self, e1):
        f = ScalarField(lambda p: p[..., 0], 2, "y1")
        val = mean_oscillation(f, e1, p=1, h=0.04)
        rng = np.random.default_rng(42)
        samples = sample_in_ellipsoid(rng, np.zeros(3), 1.0, 400_000)
        mc = float(np.mean(np.abs(samples[:, 0] - samples[:, 0].mean())))
        assert val > 0
        assert val == pytest.approx(mc, rel=0.01)

    def test_oscillation_jensen_in_p(self, e1):
        f = log_rho_power_field(2, 0.5)
        o1 = mean_oscillation(f, e1, p=1, h=0.05)
        o2 = mean_oscillation(f, e1, p=2, h=0.05)
        assert o2 >= o1


class TestMorrey:
    def test_constant_whole_space(self):
        # phi = 1: bracket is r-independent and equals |E_1|^{1/p}
        f = const_field(1.0, support=Region.ellipsoid(np.zeros(3), 2.5))
        sampler = SupSampler(centers=np.zeros((1, 3)), radii=np.array([1.0, 2.0]),
                             description="origin, dyadic")
        rep = morrey_norm(f, 1.0, lambda x, r: 1.0, None, sampler, h=0.1)
        assert rep.value == pytest.approx(E1_VOL, rel=0.05)

    def test_indicator_sup_at_large_r(self):
        p = 2.0
        f = indicator_field(Region.ellipsoid(np.zeros(3), 1.0))
        sampler = SupSampler(centers=np.zeros((1, 3)),
                             radii=np.array([0.25, 0.5, 1.0, 2.0, 4.0, 8.0]),
                             description="origin, dyadic")
        phi = lambda x, r: r ** (-4.0 / p)
        rep = morrey_norm(f, p, phi, None, sampler, h=0.04)
        assert rep.value == pytest.approx(E1_VOL ** (1 / p), rel=0.03)
        # the bracket equals |E_min(r,1)|^{1/p}: the sup plateau starts at r = 1
        assert rep.witness_radius >= 1.0

    def test_zero_field(self):
        f = const_field(0.0, support=Region.ellipsoid(np.zeros(3), 1.0))
        sampler = SupSampler(centers=np.zeros((1, 3)), radii=np.array([1.0]),
                             description="one")
        assert morrey_norm(f, 2.0, lambda x, r: 1.0, None, sampler).value == 0.0

    def test_rejects_nonpositive_weight(self):
        f = const_field(1.0, support=Region.ellipsoid(np.zeros(3), 1.0))
        sampler = SupSampler(centers=np.zeros((1, 3)), radii=np.array([1.0]),
                             description="one")
        with pytest.raises(ValueError):
            morrey_norm(f, 2.0, lambda x, r: 0.0, None, sampler)

    def test_monotone_in_sample_set(self):
        f = bump_field(2, r_space=0.8)
        phi = lambda x, r: r ** -1.0
        small = SupSampler(centers=np.zeros((1, 3)), radii=np.array([0.5, 1.0]),
                           description="small")
        big = SupSampler(centers=np.array([[0.0, 0.0, 0.0], [0.2, 0.0, 0.0]]),
                         radii=np.array([0.25, 0.5, 1.0, 2.0]), description="big")
        v_small = morrey_norm(f, 2.0, phi, None, small, h=0.05).value
        v_big = morrey_norm(f, 2.0, phi, None, big, h=0.05).value
        assert v_big >= v_small

    def test_weak_below_strong_at_p1(self):
        f = bump_field(2, r_space=0.8)
        phi = lambda x, r: r ** -1.0
        sampler = SupSampler(centers=np.zeros((1, 3)),
                             radii=np.array([0.5, 1.0, 2.0]), description="s")
        weak = weak_morrey_norm(f, phi, None, sampler, h=0.05).value
        strong = morrey_norm(f, 1.0, phi, None, sampler, h=0.05).value
        assert weak <= strong * (1 + 1e-9)

    def test_weak_morrey_constant(self):
        c = 2.0
        f = const_field(c, support=Region.ellipsoid(np.zeros(3), 2.5))
        sampler = SupSampler(centers=np.zeros((1, 3)), radii=np.array([1.0, 2.0]),
                             description="origin")
        rep = weak_morrey_norm(f, lambda x, r: 1.0, None, sampler, h=0.1)
        assert rep.value == pytest.approx(c * E1_VOL, rel=0.05)

    def test_bounded_domain_uses_cylinder_windows(self):
        q = Region.box_cylinder([0, 0], [1, 1], 1.0)
        f = const_field(1.0, support=q)
        sampler = SupSampler(centers=np.array([[0.5, 0.5, 0.5]]),
                             radii=np.array([0.25]), description="center")
        rep = morrey_norm(f, 1.0, lambda x, r: 1.0, q, sampler, h=0.04)
        # cylinder window fully inside the box: volume = |B_r| * 2 r^2
        expected = 0.25 ** 4 * (math.pi * 2.0)
        assert rep.value == pytest.approx(expected / 0.25 ** 4, rel=0.05)

    def test_report_serializes(self):
        f = bump_field(2, r_space=0.5)
        sampler = SupSampler(centers=np.zeros((1, 3)), radii=np.array([0.5]),
                             description="one", seed=3)
        rep = morrey_norm(f, 2.0, lambda x, r: 1.0, None, sampler)
        text = rep.to_json()
        assert '"value"' in text and '"seed": 3' in text


class TestOscillationClasses:
    def test_vmo_modulus_constant(self):
        sampler = SupSampler(centers=np.zeros((1, 3)),
                             radii=0.5 ** np.arange(1, 5), description="dyadic")
        assert vmo_modulus(const_field(4.0), 1.0, sampler) == 0.0

    def test_vanishing_oscillation_trend(self):
        f = log_rho_power_field(2, 0.5)
        centers = np.vstack([np.zeros(3),
                             [[0.3, 0.0, 0.0], [0.0, -0.3, 0.0], [0.2, 0.2, 0.02]]])
        etas = []
        for k in range(1, 7):
            R = 2.0 ** -k
            sampler = SupSampler(centers=centers * R, radii=np.array([R, R / 2]),
                                 description=f"scaled k={k}")
            etas.append(vmo_modulus(f, R, sampler, resolution=12))
        assert all(b < a for a, b in zip(etas, etas[1:]))
        assert etas[-1] < 0.6 * etas[0]

    def test_log_field_oscillation_bounded_below(self):
        f = log_rho_power_field(2, 1.0)
        etas = []
        for k in range(1, 7):
            R = 2.0 ** -k
            sampler = SupSampler(centers=np.zeros((1, 3)), radii=np.array([R, R / 2]),
                                 description=f"k={k}")
            etas.append(vmo_modulus(f, R, sampler, resolution=12))
        assert min(etas) > 0.1
        # scale invariance of |log rho|: all values agree
        assert max(etas) - min(etas) < 0.02 * max(etas)

    def test_bmo_norm_constant_zero(self):
        sampler = SupSampler(centers=np.zeros((1, 3)), radii=np.array([0.5, 1.0]),
                             description="s")
        assert bmo_norm(const_field(1.0), sampler).value == 0.0

    def test_sin_f_alpha_bounded(self):
        f = sin_log_rho_power_field(2, 0.5)
        centers = np.vstack([np.zeros(3), [[0.1, 0.0, 0.0]]])
        sampler = SupSampler(centers=centers, radii=0.5 ** np.arange(0, 6),
                             description="dyadic")
        rep = bmo_norm(f, sampler, resolution=10)
        assert 0 < rep.value < 2.0

    def test_prop_bmo_dyadic_mean_growth(self):
        # |a_{E_r} - a_{E_s}| <= C (1 + ln(s/r)) ||a||_* with stable C
        a = log_rho_power_field(2, 1.0)
        sampler = SupSampler(centers=np.zeros((1, 3)), radii=0.5 ** np.arange(0, 7),
                             description="dyadic")
        star = bmo_norm(a, sampler, resolution=12).value
        cs = []
        means = {}
        for k in range(0, 7):
            r = 0.5 ** k
            means[k] = mean_integral(a, Region.ellipsoid(np.zeros(3), r), h=r / 6)
        for k in range(0, 5):
            for m in range(k + 2, 7):
                s, r = 0.5 ** k, 0.5 ** m
                c = abs(means[k] - means[m]) / ((1 + math.log(s / r)) * star)
                cs.append(c)
        # for |log rho| the dyadic mean gap is exactly ln(s/r), so every
        # measured C is below 1/||a||_* and the spread over pairs stays tight
        assert max(cs) < 1.0 / star
        assert max(cs) < 2.0 * min(cs)

    def test_john_nirenberg_growth_in_p(self):
        a = log_rho_power_field(2, 1.0)
        sampler = SupSampler(centers=np.zeros((1, 3)), radii=0.5 ** np.arange(0, 5),
                             description="dyadic")
        star = bmo_norm(a, sampler, resolution=10).value
        ratios = []
        for p in (1.0, 2.0, 4.0):
            worst = 0.0
            for k in range(0, 5):
                r = 0.5 ** k
                osc = mean_oscillation(a, Region.ellipsoid(np.zeros(3), r), p=p,
                                       h=r / 5)
                worst = max(worst, osc / star)
            ratios.append(worst)
        assert ratios == sorted(ratios)
        assert ratios[-1] < 10.0


class TestSobolevMorrey:
    def test_zero_bundle(self):
        inst = make_manufactured("identity-sine", h=0.25)
        zero = const_field(0.0, support=inst.Q)
        from morreylab.fields import DerivativeBundle
        b = DerivativeBundle(u=zero, du=[zero, zero],
                             d2u=[[zero, zero], [zero, zero]], ut=zero)
        sampler = SupSampler.for_region(inst.Q, 2, r_min=0.25, r_max=1.0)
        assert sobolev_morrey_norm(b, 2.0, lambda x, r: 1.0, inst.Q, sampler,
                                   h=0.1) == 0.0

    def test_unrolled_definition(self):
        q = Region.box_cylinder([0, 0], [1, 1], 1.0)
        zero = const_field(0.0, support=q)
        one = const_field(1.0, support=q)
        tf = ScalarField(lambda p: p[..., 2], 2, "t", support=q)
        from morreylab.fields import DerivativeBundle
        b = DerivativeBundle(u=tf, du=[zero, zero],
                             d2u=[[zero, zero], [zero, zero]], ut=one)
        sampler = SupSampler.for_region(q, 2, r_min=0.25, r_max=1.0)
        phi = lambda x, r: 1.0
        total = sobolev_morrey_norm(b, 2.0, phi, q, sampler, h=0.08)
        grid = build_grid(q, 0.08)
        expected = (morrey_norm(tf, 2.0, phi, q, sampler, grid=grid).value
                    + morrey_norm(one, 2.0, phi, q, sampler, grid=grid).value)
        assert total == pytest.approx(expected, rel=1e-12)

    def test_manufactured_recomputation(self):
        inst = make_manufactured("identity-sine", h=0.2)
        sampler = SupSampler.for_region(inst.Q, 2, r_min=0.25, r_max=1.0)
        phi = lambda x, r: r ** -1.0
        total = sobolev_morrey_norm(inst.exact, 2.0, phi, inst.Q, sampler, h=0.08)
        grid = build_grid(inst.Q, 0.08)
        parts = sum(morrey_norm(f, 2.0, phi, inst.Q, sampler, grid=grid).value
                    for _, f in inst.exact.all_fields())
        assert total == pytest.approx(parts, rel=1e-12)


class TestFieldIO:
    def test_grid_field_roundtrip_npz(self, tmp_path):
        axes = [np.linspace(0, 1, 5), np.linspace(0, 1, 4), np.linspace(0, 1, 3)]
        vals = np.arange(60, dtype=float).reshape(5, 4, 3)
        f = grid_field(axes, vals, label="demo")
        path = tmp_path / "field.npz"
        save_grid_field(f, path)
        g = load_grid_field(path)
        pts = np.array([[0.25, 1 / 3, 0.5], [1.0, 1.0, 1.0]])
        np.testing.assert_allclose(g(pts), f(pts))

    def test_grid_field_roundtrip_csv(self, tmp_path):
        axes = [np.linspace(0, 1, 3), np.linspace(0, 2, 4), np.linspace(0, 1, 3)]
        vals = np.random.default_rng(0).random((3, 4, 3))
        f = grid_field(axes, vals, label="demo")
        path = tmp_path / "field.csv"
        save_grid_field(f, path, fmt="csv")
        g = load_grid_field(path, fmt="csv")
        pts = np.array([[0.5, 1.0, 0.5]])
        np.testing.assert_allclose(g(pts), f(pts))

    def test_grid_field_exact_at_nodes(self):
        axes = [np.linspace(0, 1, 4), np.linspace(0, 1, 4), np.linspace(0, 1, 4)]
        rng = np.random.default_rng(1)
        vals = rng.random((4, 4, 4))
        f = grid_field(axes, vals)
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes = np.stack([m.ravel() for m in mesh], axis=-1)
        np.testing.assert_allclose(f(nodes), vals.ravel(), atol=1e-14)

    def test_expression_field_and_errors(self):
        f = expression_field("x1**2 + t", 2)
        assert f(np.array([2.0, 0.0, 1.0])) == pytest.approx(5.0)
        from morreylab.expressions import ExpressionError
        with pytest.raises(ExpressionError):
            expression_field("__import__('os')", 2)
        with pytest.raises(ExpressionError):
            expression_field("q + 1", 2)

    def test_battery_properties(self):
        batt = default_battery(2)
        assert len(batt) >= 12
        labels = [f.label for f in batt]
        assert len(set(labels)) == len(labels)
        pts = np.array([[0.1, 0.0, 0.05], [5.0, 5.0, 5.0]])
        for f in batt:
            vals = f(pts)
            assert np.isfinite(vals).all()
            assert vals[1] == 0.0  # compact support
            assert f.support is not None
