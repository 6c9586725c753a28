import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kdrmpc.dro import (DroInstance, LpLayout, backoff_vector, build_cvar_dro_lp, compute_backoff,
                        empirical_cvar, robust_backoff_vector)
from kdrmpc.geometry import Box

UNIT = Box([0.0], [0.1])


def cvar_oracle(z, alpha):
    """min_t t + mean((z - t)+) / alpha, scanning t over the samples (piecewise-linear objective)."""
    z = np.asarray(z, float)
    return min(t + np.maximum(z - t, 0).mean() / alpha for t in z)


def inst(samples, theta, alpha=0.1, box=UNIT, a=(1.0,)):
    return DroInstance.from_box(list(a), np.asarray(samples, float).reshape(-1, len(a)), box, alpha, theta)


class TestLpConstruction:
    def test_variable_count_single_sample(self):
        lp = build_cvar_dro_lp(inst([0.0], 0.0))
        # eta, t, lam, s_1, gamma_1 (2 support rows), v_1 (1 coordinate)
        assert lp.n == 7 == LpLayout(1, 2, 1).n_vars

    def test_two_sample_snapshot(self):
        lp = build_cvar_dro_lp(inst([0.02, -0.05], 0.01, alpha=0.2))
        # columns: eta t lam s1 s2 g1a g1b g2a g2b v1 v2
        A = np.array([
            [0, -0.2, 0.01, 0.5, 0.5, 0, 0, 0, 0, 0, 0],
            [-1, 1, 0, -1, 0, 0.08, 0.12, 0, 0, 0, 0],
            [0, 0, 0, 0, 0, -1, 1, 0, 0, -1, 0],
            [0, 0, 0, 0, 0, 1, -1, 0, 0, -1, 0],
            [0, 0, -1, 0, 0, 0, 0, 0, 0, 1, 0],
            [-1, 1, 0, 0, -1, 0, 0, 0.15, 0.05, 0, 0],
            [0, 0, 0, 0, 0, 0, 0, -1, 1, 0, -1],
            [0, 0, 0, 0, 0, 0, 0, 1, -1, 0, -1],
            [0, 0, -1, 0, 0, 0, 0, 0, 0, 0, 1],
        ])
        b = np.array([0, -0.02, -1, 1, 0, 0.05, -1, 1, 0])
        assert np.allclose(lp.A_ub, A, atol=1e-15) and np.allclose(lp.b_ub, b, atol=1e-15)
        assert lp.cost.tolist() == [1.0] + [0.0] * 10
        assert lp.bounds[0] == (0.0, np.inf) and lp.bounds[1] == (-np.inf, np.inf)
        assert all(bd == (0.0, np.inf) for bd in lp.bounds[2:])

    def test_invalid_instances(self):
        with pytest.raises(ValueError):
            inst([0.0], 0.0, alpha=1.0)
        with pytest.raises(ValueError):
            inst([0.0], -1e-3)
        with pytest.raises(ValueError):
            inst([0.5], 0.0)


class TestBackoff:
    def test_zero_samples(self):
        assert compute_backoff(inst(np.zeros(5), 0.0, alpha=0.3)).eta == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("alpha", [0.2, 0.3, 0.5])
    def test_fixed_samples_cvar(self, alpha):
        z = [-0.05, 0.0, 0.02, 0.06, 0.09]
        res = compute_backoff(inst(z, 0.0, alpha=alpha))
        assert res.eta == pytest.approx(cvar_oracle(z, alpha), abs=1e-8)
        assert empirical_cvar(z, alpha) == pytest.approx(cvar_oracle(z, alpha), abs=1e-14)

    def test_unbounded_support_reduces_to_empirical_cvar(self, rng):
        z = rng.normal(size=40)
        res = compute_backoff(inst(z, 0.0, alpha=0.15, box=Box([0.0], [1e6])))
        assert res.eta == pytest.approx(max(cvar_oracle(z, 0.15), 0.0), abs=1e-8)
        # gamma = 0 is optimal: zero it, set v = |a| and lam = |a|_1, still feasible
        lay = LpLayout(40, 2, 1)
        x = res.lp_report.x.copy()
        for l in range(40):
            x[lay.gamma(l)] = 0.0
            x[lay.v(l)] = 1.0
        x[2] = 1.0
        lp = build_cvar_dro_lp(inst(z, 0.0, alpha=0.15, box=Box([0.0], [1e6])))
        assert np.all(lp.A_ub @ x <= lp.b_ub + 1e-9)

    def test_thousand_samples_reference(self, rng):
        z = rng.uniform(-0.1, 0.1, 1000)
        assert compute_backoff(inst(z, 1e-3)).eta == pytest.approx(0.09998, abs=3e-3)
        assert compute_backoff(inst(z, 1e-4)).eta == pytest.approx(0.09098, abs=3e-3)

    def test_clamp_at_support_bound(self, rng):
        z = rng.uniform(-0.1, 0.1, 200)
        for theta in (1e-1, 1e-2):
            res = compute_backoff(inst(z, theta))
            assert res.eta == 0.1 and res.clamped and res.support_bound == pytest.approx(0.1)

    def test_slope_law(self, rng):
        z = rng.uniform(-0.1, 0.1, 100)
        etas = [compute_backoff(inst(z, th)).eta for th in (1e-7, 1e-6, 1e-5, 1e-4)]
        thetas = [1e-7, 1e-6, 1e-5, 1e-4]
        for i in range(3):
            assert etas[i + 1] - etas[i] == pytest.approx((thetas[i + 1] - thetas[i]) / 0.1, abs=1e-6)
        # and the intercept is the empirical CVaR
        assert etas[0] - 1e-6 == pytest.approx(cvar_oracle(z, 0.1), abs=1e-8)

    def test_simplex_and_highs_agree(self, rng):
        z = rng.uniform(-0.1, 0.1, 60)
        for theta in (0.0, 1e-6, 1e-4, 1e-3, 1e-2):
            e1 = compute_backoff(inst(z, theta), method="simplex").eta
            e2 = compute_backoff(inst(z, theta), method="highs").eta
            assert e1 == pytest.approx(e2, abs=1e-9)


class TestVectors:
    def test_zero_row_and_duplicates(self, rng):
        xi = rng.uniform(-0.1, 0.1, size=(50, 2))
        box = Box([0.0, 0.0], [0.1, 0.1])
        F = np.array([[0.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
        eta, res = backoff_vector(F, 0.1, xi, box, 1e-4)
        assert eta[0] == 0.0 and eta[1] == eta[2]

    def test_rows_decompose_into_scalar_problems(self, rng):
        xi = np.column_stack([rng.uniform(-1e-3, 1e-3, 80), rng.uniform(-0.1, 0.1, 80)])
        box = Box([0.0, 0.0], [1e-3, 0.1])
        eta, _ = backoff_vector(np.eye(2), [0.1, 0.2], xi, box, 1e-5)
        e0 = compute_backoff(inst(xi[:, 0], 1e-5, 0.1, Box([0.0], [1e-3]))).eta
        e1 = compute_backoff(inst(xi[:, 1], 1e-5, 0.2, Box([0.0], [0.1]))).eta
        assert eta == pytest.approx([e0, e1], abs=1e-9)

    def test_robust_dominates(self, rng):
        xi = rng.uniform(-0.1, 0.1, size=(100, 1))
        eta, _ = backoff_vector([[1.0], [-1.0]], 0.1, xi, UNIT, 1e-4)
        rob = robust_backoff_vector([[1.0], [-1.0]], UNIT)
        assert np.all(rob >= eta - 1e-12) and np.allclose(rob, 0.1)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 0.05), st.floats(0, 0.05))
def test_radius_monotone(seed, t1, t2):
    z = np.random.default_rng(seed).uniform(-0.1, 0.1, 30)
    lo, hi = sorted((t1, t2))
    assert compute_backoff(inst(z, lo)).eta <= compute_backoff(inst(z, hi)).eta + 1e-9


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.95))
def test_zero_radius_equals_sorted_tail_cvar(seed, alpha):
    z = np.random.default_rng(seed).uniform(-0.1, 0.1, 25)
    eta = compute_backoff(inst(z, 0.0, alpha=alpha)).eta
    assert eta == pytest.approx(max(empirical_cvar(z, alpha), 0.0), abs=1e-8)


def test_subnormal_scale_radius_stays_finite():
    # a radius far below the pivot tolerance used to yield a singular basis and NaN
    z = np.random.default_rng(0).uniform(-0.1, 0.1, 30)
    a, b = compute_backoff(inst(z, 0.0)), compute_backoff(inst(z, 5.574214421220302e-13))
    assert np.isfinite(b.eta) and b.eta == pytest.approx(a.eta, abs=1e-9)
