import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fbmqueue import fgn
from fbmqueue.errors import DomainError
from fbmqueue.fgn import (EmbeddingFallbackWarning, SamplePath, SeedSpec, TimeGrid,
                          embedding_eigenvalues, embedding_size, fbm_covariance, fbm_matrix,
                          fbm_path, fgn_autocovariance, generate_fgn, resolve_method, unit_fgn)
from fbmqueue.montecarlo import map_chunks


class _BasisRng:
    """Stands in for a Generator: the draws are the j-th unit vector."""

    def __init__(self, j):
        self.j = j

    def standard_normal(self, n):
        z = np.zeros(n)
        z[self.j] = 1.0
        return z


def _implied_covariance(sampler, n, H, n_inputs):
    cols = np.column_stack([sampler(n, H, _BasisRng(j)) for j in range(n_inputs)])
    return cols @ cols.T


def _rows(lo, hi):
    # module level so that worker processes can unpickle it
    return fbm_matrix(TimeGrid(0.1, 40), 0.7, 11, range(lo, hi))


def _toeplitz(n, H):
    k = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    return fgn_autocovariance(k, H)


class TestCovariances:
    def test_brownian_case_is_min(self):
        s, t = np.meshgrid([0.5, 1.0, 3.0], [0.25, 2.0, 3.0])
        np.testing.assert_allclose(fbm_covariance(s, t, 0.5), np.minimum(s, t), atol=1e-15)

    def test_known_value(self):
        # (2^1.5 + 1 - 1) / 2
        assert fbm_covariance(1.0, 2.0, 0.75) == pytest.approx(np.sqrt(2.0), rel=1e-14)

    @pytest.mark.parametrize("H, lag1", [(0.5, 0.0), (0.75, np.sqrt(2) - 1), (0.25, 1 / np.sqrt(2) - 1)])
    def test_fgn_lag_one(self, H, lag1):
        assert fgn_autocovariance(0, H) == pytest.approx(1.0)
        assert fgn_autocovariance(1, H) == pytest.approx(lag1, abs=1e-14)

    def test_increment_identity(self):
        # Var(W(k+1) - W(k)) and Cov of unit increments from the fBM covariance.
        H = 0.7
        k = np.arange(1, 6)
        cov = (fbm_covariance(k + 1, 1, H) - fbm_covariance(k, 1, H)
               - fbm_covariance(k + 1, 0, H) + fbm_covariance(k, 0, H))
        np.testing.assert_allclose(cov, fgn_autocovariance(k, H), rtol=1e-12)

    def test_negative_time_rejected(self):
        with pytest.raises(DomainError):
            fbm_covariance(-1.0, 1.0, 0.5)

    @pytest.mark.parametrize("H", [0.0, 1.0, -0.2, 1.5])
    def test_hurst_domain(self, H):
        with pytest.raises(DomainError):
            fgn_autocovariance(1, H)


class TestEmbedding:
    @pytest.mark.parametrize("n, size", [(1, 2), (5, 16), (8, 16), (1000, 2048)])
    def test_size_is_power_of_two_at_least_2n(self, n, size):
        assert embedding_size(n) == size

    @settings(max_examples=30, deadline=None)
    @given(H=st.floats(0.02, 0.98), n=st.integers(2, 3000))
    def test_eigenvalues_non_negative(self, H, n):
        assert fgn.embedding_is_valid(n, H)
        assert np.all(embedding_eigenvalues(n, H) >= 0)

    @pytest.mark.parametrize("H", [0.2, 0.5, 0.75, 0.95])
    def test_circulant_covariance_exact(self, H):
        n = 12
        size = embedding_size(n)
        cov = _implied_covariance(fgn._circulant_unit_fgn, n, H, size)
        np.testing.assert_allclose(cov, _toeplitz(n, H), atol=1e-12)

    @pytest.mark.parametrize("H", [0.3, 0.75])
    def test_hosking_covariance_exact(self, H):
        n = 10
        cov = _implied_covariance(fgn._hosking_unit_fgn, n, H, n)
        np.testing.assert_allclose(cov, _toeplitz(n, H), atol=1e-12)


class TestGeneration:
    def test_empirical_lag_covariances(self):
        H, n, reps = 0.75, 16, 20_000
        rng = np.random.default_rng(3)
        x = np.array([unit_fgn(n, H, rng) for _ in range(reps)])
        emp = np.array([np.mean(x[:, : n - k] * x[:, k:]) for k in range(4)])
        np.testing.assert_allclose(emp, fgn_autocovariance(np.arange(4), H), atol=0.03)

    def test_same_seed_same_path(self):
        grid = TimeGrid(0.01, 100)
        a = fbm_path(grid, 0.7, SeedSpec(9, 4)).values
        b = fbm_path(grid, 0.7, SeedSpec(9, 4)).values
        c = fbm_path(grid, 0.7, SeedSpec(9, 5)).values
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)
        assert a[0] == 0.0

    @pytest.mark.parametrize("H", [0.3, 0.5, 0.8])
    def test_step_scaling(self, H):
        seed = SeedSpec(1, 2)
        a = generate_fgn(TimeGrid(0.01, 64), H, seed)
        b = generate_fgn(TimeGrid(0.04, 64), H, seed)
        np.testing.assert_allclose(b, a * 4.0**H, rtol=1e-12)

    def test_matrix_rows_match_single_paths(self):
        grid = TimeGrid(0.1, 50)
        M = fbm_matrix(grid, 0.6, 5, [3, 7])
        np.testing.assert_allclose(M[1], fbm_path(grid, 0.6, SeedSpec(5, 7)).values, rtol=1e-13)

    def test_worker_count_does_not_change_output(self):
        one = map_chunks(_rows, 37, workers=1, chunk=5)
        two = map_chunks(_rows, 37, workers=2, chunk=5)
        assert np.array_equal(one, two)

    def test_white_noise_path_at_one_half(self):
        assert resolve_method(100, 0.5) == "white"
        assert resolve_method(100, 0.7) == "circulant"

    def test_fallback_warns_and_still_generates(self, monkeypatch):
        monkeypatch.setattr(fgn, "embedding_is_valid", lambda n, H: False)
        with pytest.warns(EmbeddingFallbackWarning):
            x = unit_fgn(32, 0.8, np.random.default_rng(0))
        assert x.shape == (32,)

    def test_explicit_method_does_not_warn(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            unit_fgn(16, 0.8, np.random.default_rng(0), method="hosking")


class TestGridAndPath:
    def test_covering(self):
        g = TimeGrid.covering(1.0, 0.3)
        assert g.n_steps == 4 and g.horizon == pytest.approx(1.2)
        assert TimeGrid.covering(1.0, 0.25).n_steps == 4

    def test_single_node_grid(self):
        g = TimeGrid(0.5, 0)
        assert g.times.tolist() == [0.0]

    @pytest.mark.parametrize("dt, n", [(0.0, 3), (-1.0, 3), (np.inf, 3), (0.1, -1), (0.1, 2.5)])
    def test_bad_grid(self, dt, n):
        with pytest.raises(DomainError):
            TimeGrid(dt, n)

    def test_path_length_checked_and_read_only(self):
        g = TimeGrid(1.0, 2)
        with pytest.raises(DomainError):
            SamplePath(g, [0.0, 1.0])
        p = SamplePath(g, [0.0, 1.0, 2.0])
        with pytest.raises(ValueError):
            p.values[0] = 3.0

    def test_seed_range(self):
        with pytest.raises(DomainError):
            SeedSpec(-1, 0)
