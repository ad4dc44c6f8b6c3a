import numpy as np
import pytest

from fbmqueue.errors import DomainError
from fbmqueue.onoff import (OnOffSpec, dyadic_lags, hurst_from_tails, increment_variances,
                            pareto_scale, simulate_onoff_queue, variance_exponent)


class TestTailIndices:
    @pytest.mark.parametrize("a1, a2, H", [(1.4, 1.8, 0.8), (1.6, 1.6, 0.7), (1.999, 1.999, 0.5005)])
    def test_hurst(self, a1, a2, H):
        assert hurst_from_tails(a1, a2) == pytest.approx(H)

    @pytest.mark.parametrize("a1, a2", [(1.0, 1.5), (1.5, 2.0), (0.5, 1.5)])
    def test_domain(self, a1, a2):
        with pytest.raises(DomainError):
            hurst_from_tails(a1, a2)

    @pytest.mark.parametrize("mean, alpha", [(1.0, 1.4), (3.0, 1.8)])
    def test_pareto_mean(self, mean, alpha):
        xm = pareto_scale(mean, alpha)
        assert alpha * xm / (alpha - 1) == pytest.approx(mean)


class TestSpec:
    def test_rates(self):
        spec = OnOffSpec(1.4, 1.8, m1=1.0, m2=3.0, n_sources=100, tau=50.0, u=0.7)
        assert spec.lam == 0.25
        assert spec.mu == pytest.approx(25 + 0.7 * 50 ** -0.2 * 10)
        assert spec.scaled_drift() == pytest.approx(0.7)

    def test_service_override(self):
        spec = OnOffSpec(1.5, 1.5, n_sources=4, service_rate=3.0)
        assert spec.mu == 3.0

    @pytest.mark.parametrize("kwargs", [
        {"m1": 0.0}, {"m2": -1.0}, {"n_sources": 0}, {"n_sources": 2.5}, {"tau": 0.0},
        {"u": -1.0}, {"x0": -1.0}, {"service_rate": -0.1},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(DomainError):
            OnOffSpec(1.5, 1.5, **kwargs)


class TestSimulation:
    def test_balanced_always_on_source_keeps_queue_fixed(self):
        spec = OnOffSpec(1.5, 1.5, m2=0.0, n_sources=1, x0=2.0, service_rate=1.0)
        run = simulate_onoff_queue(spec, 50.0, seed=1, dt=0.5)
        np.testing.assert_allclose(run.queue.values, 2.0, atol=1e-12)
        assert np.all(run.regulator.values == 0)

    @pytest.mark.parametrize("seed", [0, 1])
    def test_long_run_on_fraction(self, seed):
        spec = OnOffSpec(1.8, 1.8, m1=1.0, m2=3.0, n_sources=100, u=0.0)
        run = simulate_onoff_queue(spec, 20_000.0, seed=seed, dt=10.0)
        assert run.on_fraction == pytest.approx(0.25, rel=0.02)

    def test_queue_is_reflected(self):
        spec = OnOffSpec(1.5, 1.7, n_sources=20, tau=10.0, u=0.5)
        run = simulate_onoff_queue(spec, 20.0, seed=3, dt=0.05)
        Q, L = run.queue.values, run.regulator.values
        assert np.all(Q >= 0) and np.all(np.diff(L) >= 0)
        rises = np.flatnonzero(np.diff(L) > 0) + 1
        assert np.all(Q[rises] == 0)
        assert run.report["scaled_drift"] == pytest.approx(0.5)

    def test_same_seed_same_run(self):
        spec = OnOffSpec(1.5, 1.7, n_sources=40, tau=5.0)
        a = simulate_onoff_queue(spec, 5.0, seed=7, dt=0.1)
        b = simulate_onoff_queue(spec, 5.0, seed=7, dt=0.1, workers=2)
        c = simulate_onoff_queue(spec, 5.0, seed=8, dt=0.1)
        assert np.array_equal(a.queue.values, b.queue.values)
        assert not np.array_equal(a.queue.values, c.queue.values)

    def test_horizon_domain(self):
        with pytest.raises(DomainError):
            simulate_onoff_queue(OnOffSpec(1.5, 1.5), 0.0, seed=0)


class TestVarianceExponent:
    def test_lags(self):
        assert dyadic_lags(100) == [1, 2, 4, 8]
        assert dyadic_lags(1000, min_lag=4) == [4, 8, 16, 32, 64]

    def test_increment_variances_of_random_walk(self):
        rng = np.random.default_rng(0)
        paths = np.cumsum(rng.standard_normal((50, 2000)), axis=1)
        v = increment_variances(paths, [1, 4, 16])
        np.testing.assert_allclose(v, [1, 4, 16], rtol=0.05)

    def test_moderate_population(self):
        spec = OnOffSpec(1.4, 1.4, n_sources=50, tau=100.0)
        fit = variance_exponent(spec, 10.0, seed=11, n_replicas=4, dt=0.05)
        assert fit.target == pytest.approx(1.6)
        assert fit.error < 0.2

    def test_needs_three_lags(self):
        with pytest.raises(DomainError):
            variance_exponent(OnOffSpec(1.5, 1.5), 1.0, seed=0, n_replicas=1, dt=0.5)
