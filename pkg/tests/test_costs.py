import numpy as np
import pytest
from hypothesis import given, strategies as st

from fbmqueue.costs import (CostEstimate, CostFunctionSpec, discount_horizon, discounted_cost,
                            ergodic_cost_direct, ergodic_cost_reduced, finite_horizon_cost,
                            holding_cost_assumptions, regulator_rate)
from fbmqueue.errors import DomainError, PreconditionError, UnsupportedModelError
from fbmqueue.fgn import TimeGrid
from fbmqueue.montecarlo import EstimateWithError, EstimatorConfig, path_bank
from fbmqueue.skorokhod import ModelSpec, PositiveFunction

ZERO = CostFunctionSpec.zero()
LINEAR = CostFunctionSpec.power(1.0, 1.0)
QUADRATIC = CostFunctionSpec.power(1.0, 2.0)

DETERMINISTIC = EstimatorConfig(n_paths=2, dt=0.01, horizon=50.0, zero_noise=True)


class TestCostFunctionSpec:
    @pytest.mark.parametrize("spec, x, expected", [
        (CostFunctionSpec.constant(2.0), 3.0, 2.0),
        (CostFunctionSpec.power(2.0, 1.5, c=1.0), 4.0, 17.0),
        (CostFunctionSpec.power(1.0, 2.0, shift=1.0), 0.5, 0.0),
        (CostFunctionSpec.power(1.0, 2.0, shift=1.0), 3.0, 4.0),
        (CostFunctionSpec.polynomial(1.0, 0.0, 3.0), 2.0, 13.0),
        (CostFunctionSpec.affine_power(1.0, 2.0, 3.0, 0.5), 4.0, 15.0),
        (CostFunctionSpec.shifted_power(1.0, 1.0), 0.0, 1.0),
    ])
    def test_values(self, spec, x, expected):
        assert spec(x) == pytest.approx(expected)

    def test_vectorized(self):
        np.testing.assert_allclose(QUADRATIC(np.array([1.0, 2.0, 3.0])), [1, 4, 9])

    @pytest.mark.parametrize("spec, convex, strict, monotone, unbounded", [
        (CostFunctionSpec.constant(1.0), True, False, True, False),
        (CostFunctionSpec.power(1.0, 1.0), True, False, True, True),
        (CostFunctionSpec.power(1.0, 2.0), True, True, True, True),
        (CostFunctionSpec.power(1.0, 0.5), False, False, True, True),
        (CostFunctionSpec.power(1.0, 2.0, shift=0.5), True, False, True, True),
        (CostFunctionSpec.polynomial(0.0, 1.0), True, False, True, True),
        (CostFunctionSpec.polynomial(0.0, 0.0, 1.0), True, True, True, True),
        (CostFunctionSpec.shifted_power(1.0, 1.0), True, True, False, True),
    ])
    def test_structure_flags(self, spec, convex, strict, monotone, unbounded):
        assert spec.is_convex == convex
        assert spec.is_strictly_convex == strict
        assert spec.is_nondecreasing == monotone
        assert spec.is_unbounded == unbounded

    @given(st.sampled_from([
        CostFunctionSpec.power(2.0, 1.5, c=1.0), CostFunctionSpec.polynomial(1.0, 2.0, 0.5),
        CostFunctionSpec.affine_power(0.5, 1.0, 2.0, 2.5), CostFunctionSpec.shifted_power(1.0, 3.0, 2.0),
        CostFunctionSpec.constant(4.0),
    ]), st.floats(0.0, 1e4))
    def test_growth_bound(self, spec, x):
        K, g = spec.growth_bound()
        assert 0 <= spec(x) <= K * (1 + x**g) * (1 + 1e-12)

    def test_round_trip(self):
        for spec in (QUADRATIC, CostFunctionSpec.polynomial(1, 2), CostFunctionSpec.power(1, 2, shift=1)):
            assert CostFunctionSpec.from_dict(spec.to_dict()) == spec

    @pytest.mark.parametrize("kwargs", [
        {"kind": "cubic"}, {"kind": "power", "a": -1.0}, {"kind": "power", "gamma": 0.0},
        {"kind": "polynomial", "coeffs": (1.0, -1.0)}, {"kind": "shifted_power", "gamma": 0.5},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(DomainError):
            CostFunctionSpec(**kwargs)

    def test_holding_assumptions(self):
        assert holding_cost_assumptions(LINEAR) == []
        assert holding_cost_assumptions(CostFunctionSpec.shifted_power(1.0, 2.0))

    def test_decomposition_must_add_up(self):
        e = EstimateWithError.exact(1.0)
        with pytest.raises(DomainError):
            CostEstimate(e, {"control": e, "holding": e, "regulator": e})


class TestErgodicReduced:
    def test_quadratic_example(self, small_zu_cfg):
        est = ergodic_cost_reduced(0.5, ModelSpec(0.5, p=1.0), QUADRATIC, LINEAR, small_zu_cfg)
        assert est.mean == pytest.approx(1.75, rel=0.05)
        assert est.components["control"].mean == 0.25
        assert est.components["regulator"].mean == 0.5

    def test_zero_state_cost_is_exact(self, small_zu_cfg):
        est = ergodic_cost_reduced(0.8, ModelSpec(0.7), QUADRATIC, ZERO, small_zu_cfg)
        assert est.mean == pytest.approx(0.64, rel=1e-14) and est.stderr == 0.0

    def test_initial_workload_does_not_enter(self, small_zu_cfg):
        a = ergodic_cost_reduced(1.0, ModelSpec(0.5, x=0.0, p=1.0), QUADRATIC, LINEAR, small_zu_cfg)
        b = ergodic_cost_reduced(1.0, ModelSpec(0.5, x=5.0, p=1.0), QUADRATIC, LINEAR, small_zu_cfg)
        assert a.mean == b.mean and a.stderr == b.stderr

    def test_general_drift_enters_regulator_term(self, small_zu_cfg):
        m = ModelSpec(0.5, drift_b=PositiveFunction.power(2.0, 1.0), p=1.0)
        est = ergodic_cost_reduced(1.0, m, ZERO, ZERO, small_zu_cfg)
        assert est.mean == 2.0

    def test_domain(self, small_zu_cfg):
        with pytest.raises(DomainError):
            ergodic_cost_reduced(0.0, ModelSpec(0.5), QUADRATIC, LINEAR, small_zu_cfg)

    def test_rejects_decreasing_holding_cost(self, small_zu_cfg):
        with pytest.raises(PreconditionError):
            ergodic_cost_reduced(1.0, ModelSpec(0.5), QUADRATIC,
                                 CostFunctionSpec.shifted_power(1.0, 2.0), small_zu_cfg)


class TestErgodicDirect:
    def test_zero_state_cost_is_exact(self):
        cfg = EstimatorConfig(n_paths=5, dt=0.1, horizon=100.0)
        est = ergodic_cost_direct(1.0, ModelSpec(0.5), QUADRATIC, ZERO, cfg)
        assert est.mean == 1.0 and est.stderr == 0.0

    def test_brownian_stationary_mean(self):
        cfg = EstimatorConfig(n_paths=50, dt=5e-4, horizon=200.0)
        est = ergodic_cost_direct(1.0, ModelSpec(0.5), ZERO, LINEAR, cfg)
        assert est.mean == pytest.approx(0.5, rel=0.05)
        assert est.diagnostics["half_horizon"] == pytest.approx(est.mean, rel=0.1)

    def test_agrees_with_reduced_form(self):
        m = ModelSpec(0.7, p=1.0)
        h = CostFunctionSpec.power(1.0, 1.0)
        red = ergodic_cost_reduced(1.0, m, h, LINEAR, EstimatorConfig(zu_samples=10_000, zu_steps=2**14))
        cfg = EstimatorConfig(n_paths=100, dt=0.01, horizon=200.0)
        dire = ergodic_cost_direct(1.0, m, h, LINEAR, cfg)
        assert abs(dire.mean - red.mean) <= 3 * np.hypot(dire.stderr, red.stderr)

    def test_horizon_precondition(self):
        cfg = EstimatorConfig(n_paths=5, dt=0.1, horizon=5.0)
        with pytest.raises(PreconditionError):
            ergodic_cost_direct(0.1, ModelSpec(0.5), QUADRATIC, LINEAR, cfg)


class TestRegulatorRate:
    def test_deterministic_drain(self):
        est = regulator_rate(1.0, ModelSpec(0.5), DETERMINISTIC)
        assert est.mean == pytest.approx(1.0, abs=1e-12) and est.stderr == 0.0

    @pytest.mark.parametrize("x", [0.0, 50.0])
    def test_long_run_rate(self, x):
        H, T = 0.7, 500.0
        cfg = EstimatorConfig(n_paths=100, dt=0.05, horizon=T)
        est = regulator_rate(1.0, ModelSpec(H, x=x), cfg)
        tol = max(3 * est.stderr, 2 * T ** (H - 1)) + x / T
        assert abs(est.mean - 1.0) <= tol

    def test_general_model_gives_drift(self):
        m = ModelSpec(0.5, drift_b=PositiveFunction.affine(0.5, 1.0), sigma=PositiveFunction.constant(2.0))
        est = regulator_rate(1.0, m, DETERMINISTIC)
        assert est.mean == pytest.approx(1.5)


class TestDiscounted:
    def test_zero_state_cost(self):
        cfg = EstimatorConfig(n_paths=4, dt=0.1)
        est = discounted_cost(0.0, 1.0, 0.5, ModelSpec(0.5), QUADRATIC, ZERO, cfg)
        assert est.mean == 2.0 and est.stderr == 0.0

    def test_zero_control_is_finite(self):
        cfg = EstimatorConfig(n_paths=20, dt=0.05)
        est = discounted_cost(1.0, 0.0, 0.1, ModelSpec(0.7, p=1.0), QUADRATIC, LINEAR, cfg)
        assert np.isfinite(est.mean) and est.mean > 0
        assert est.components["regulator"].mean > 0

    def test_deterministic_value(self):
        # W = 0, x = 0, u = 1: X = 0 and L(t) = t, so alpha p int e^{-alpha t} t dt = p / alpha.
        alpha = 0.5
        cfg = DETERMINISTIC.with_(dt=1e-4)
        est = discounted_cost(0.0, 1.0, alpha, ModelSpec(0.5, p=2.0), ZERO, LINEAR, cfg)
        # Truncation drops p e^{-alpha T}(1 + alpha T) / alpha; the reported tail bound covers it.
        assert est.mean < 2.0 / alpha <= est.mean + est.diagnostics["tail_bound"]
        assert est.mean == pytest.approx(2.0 / alpha, rel=2e-3)

    def test_brownian_abelian_value(self):
        alpha = 0.01
        cfg = EstimatorConfig(n_paths=40, dt=1e-3)
        est = discounted_cost(0.0, 1.0, alpha, ModelSpec(0.5), ZERO, LINEAR, cfg)
        assert alpha * est.mean == pytest.approx(0.5, rel=0.07)
        assert est.diagnostics["truncation"] >= discount_horizon(alpha)
        assert 0 < est.diagnostics["tail_bound"] < 0.05 * est.mean

    def test_pathwise_convex_in_u(self):
        cfg = EstimatorConfig(n_paths=30, dt=0.02)
        m = ModelSpec(0.7, p=1.0, x=0.5)
        bank = path_bank(0.7, TimeGrid.covering(discount_horizon(0.2), cfg.dt), cfg)
        u1, u2, r = 0.3, 1.7, 0.375
        J = [discounted_cost(0.5, u, 0.2, m, QUADRATIC, LINEAR, cfg, bank).per_path
             for u in (u1, r * u1 + (1 - r) * u2, u2)]
        slack = 1e-12 * np.max(np.abs(J))
        assert np.all(J[1] <= r * J[0] + (1 - r) * J[2] + slack)

    def test_holding_component_decreases_in_u(self):
        cfg = EstimatorConfig(n_paths=20, dt=0.02)
        bank = path_bank(0.6, TimeGrid.covering(discount_horizon(0.3), cfg.dt), cfg)
        m = ModelSpec(0.6, p=0.0)
        hold = [discounted_cost(1.0, u, 0.3, m, ZERO, QUADRATIC, cfg, bank).per_path
                for u in (0.2, 0.5, 1.0, 2.0)]
        assert all(np.all(b <= a) for a, b in zip(hold, hold[1:]))

    def test_non_constant_sigma_rejected(self):
        m = ModelSpec(0.5, sigma=PositiveFunction.affine(1.0, 1.0))
        with pytest.raises(UnsupportedModelError):
            discounted_cost(0.0, 1.0, 0.1, m, QUADRATIC, LINEAR, EstimatorConfig())

    @pytest.mark.parametrize("alpha", [0.0, -1.0])
    def test_alpha_domain(self, alpha):
        with pytest.raises(DomainError):
            discounted_cost(0.0, 1.0, alpha, ModelSpec(0.5), QUADRATIC, LINEAR, EstimatorConfig())

    def test_short_bank_rejected(self):
        cfg = EstimatorConfig(n_paths=2, dt=0.1)
        bank = path_bank(0.5, TimeGrid(0.1, 10), cfg)
        with pytest.raises(DomainError):
            discounted_cost(0.0, 1.0, 0.1, ModelSpec(0.5), QUADRATIC, LINEAR, cfg, bank)


class TestFiniteHorizon:
    def test_one_step(self):
        cfg = EstimatorConfig(n_paths=3, dt=0.01)
        est = finite_horizon_cost(0.0, 2.0, 0.01, ModelSpec(0.5), QUADRATIC, ZERO, cfg)
        assert est.mean == pytest.approx(4.0 * 0.01)

    def test_deterministic_regulator(self):
        est = finite_horizon_cost(0.0, 1.0, 5.0, ModelSpec(0.5, p=1.0), ZERO, ZERO, DETERMINISTIC)
        assert est.mean == pytest.approx(5.0)
        assert est.components["regulator"].mean == pytest.approx(5.0)

    def test_brownian_time_average(self):
        cfg = EstimatorConfig(n_paths=50, dt=5e-4)
        est = finite_horizon_cost(0.0, 1.0, 200.0, ModelSpec(0.5), ZERO, LINEAR, cfg)
        assert est.mean / 200.0 == pytest.approx(0.5, rel=0.05)

    def test_decomposition_sums(self):
        cfg = EstimatorConfig(n_paths=10, dt=0.05)
        est = finite_horizon_cost(1.0, 0.7, 20.0, ModelSpec(0.6, p=2.0), QUADRATIC, LINEAR, cfg)
        total = sum(c.mean for c in est.components.values())
        assert total == pytest.approx(est.mean, rel=1e-12)

    def test_long_bank_is_used_through_its_prefix(self):
        cfg = EstimatorConfig(n_paths=8, dt=0.05)
        long_bank = path_bank(0.6, TimeGrid.covering(40.0, cfg.dt), cfg)
        a = finite_horizon_cost(0.5, 1.0, 10.0, ModelSpec(0.6), ZERO, LINEAR, cfg, long_bank)
        b = finite_horizon_cost(0.5, 1.0, 10.0, ModelSpec(0.6), ZERO, LINEAR, cfg, long_bank.prefix(200))
        np.testing.assert_allclose(a.per_path, b.per_path, rtol=1e-12)
