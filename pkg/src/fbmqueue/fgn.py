"""Exact-covariance fractional Gaussian noise and fractional Brownian motion.

Increments are drawn by circulant embedding of the fGN autocovariance
(Davies-Harte / Wood-Chan). When the embedding is not non-negative definite
beyond round-off, generation falls back to the Durbin-Levinson (Hosking)
recursion and says so through :class:`EmbeddingFallbackWarning`.

Every path is keyed by a :class:`SeedSpec`. Normal variates come from a
Philox counter-based generator whose 128-bit key is
``(master_seed, stream_index)``; the counter plays the role of the draw index.
A path therefore depends only on its own key, never on how the ensemble was
split across workers.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError

log = logging.getLogger(__name__)

#: Relative size below which negative circulant eigenvalues are treated as round-off.
CLIP_RTOL = 1e-10

#: Stream namespaces. The namespace occupies the bits above ``NAMESPACE_SHIFT``
#: of the stream index so that draws for different purposes never share a key.
NAMESPACE_SHIFT = 40
NS_PATHS = 0
NS_ZU = 1
NS_Z0 = 2
NS_ONOFF = 3


class EmbeddingFallbackWarning(UserWarning):
    """Circulant embedding was invalid and the recursive method was used."""


def check_hurst(H: float) -> float:
    H = float(H)
    if not 0.0 < H < 1.0:
        raise DomainError(f"Hurst parameter must lie in (0, 1), got {H}")
    return H


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = k*dt, k = 0..n_steps.

    ``n_steps == 0`` is accepted and describes the single node t = 0.
    """

    dt: float
    n_steps: int

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise DomainError(f"dt must be a positive finite number, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 0:
            raise DomainError(f"n_steps must be a non-negative integer, got {self.n_steps}")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "dt", float(self.dt))

    @classmethod
    def covering(cls, horizon: float, dt: float) -> "TimeGrid":
        """Smallest grid with step ``dt`` whose last node is at or beyond ``horizon``."""
        return cls(dt, max(1, int(np.ceil(horizon / dt - 1e-9))))

    @property
    def horizon(self) -> float:
        return self.dt * self.n_steps

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)


@dataclass(frozen=True, eq=False)
class SamplePath:
    """Values of a real function of time on the nodes of a :class:`TimeGrid`."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.n_steps + 1,):
            raise DomainError(
                f"path has {values.shape} values, grid needs {self.grid.n_steps + 1}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def __len__(self):
        return len(self.values)

    @classmethod
    def zeros(cls, grid: TimeGrid) -> "SamplePath":
        return cls(grid, np.zeros(grid.n_steps + 1))


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    stream_index: int

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise DomainError("master_seed must be an unsigned 64-bit integer")
        if not 0 <= int(self.stream_index) < 2**64:
            raise DomainError("stream_index must be a non-negative 64-bit integer")

    def generator(self) -> np.random.Generator:
        return philox(self.master_seed, self.stream_index)


def stream_index(namespace: int, index: int) -> int:
    return (int(namespace) << NAMESPACE_SHIFT) + int(index)


def philox(master_seed: int, stream: int) -> np.random.Generator:
    key = np.array([master_seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


# ---------------------------------------------------------------------------
# Covariances
# ---------------------------------------------------------------------------


def fbm_covariance(s, t, H: float):
    """Cov(W_H(s), W_H(t)) = (t^2H + s^2H - |t-s|^2H) / 2."""
    H = check_hurst(H)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise DomainError("fBM covariance is defined for non-negative times only")
    out = 0.5 * (t ** (2 * H) + s ** (2 * H) - np.abs(t - s) ** (2 * H))
    return float(out) if out.ndim == 0 else out


def fgn_autocovariance(k, H: float):
    """Lag-k autocovariance of unit-step fGN: (|k+1|^2H + |k-1|^2H - 2|k|^2H) / 2."""
    H = check_hurst(H)
    k = np.abs(np.asarray(k, dtype=float))
    out = 0.5 * ((k + 1) ** (2 * H) + np.abs(k - 1) ** (2 * H) - 2 * k ** (2 * H))
    return float(out) if out.ndim == 0 else out


def embedding_size(n: int) -> int:
    """Next power of two that is at least 2*n."""
    return 1 << max(1, int(np.ceil(np.log2(2 * max(n, 1)))))


@lru_cache(maxsize=32)
def _embedding(n: int, H: float):
    size = embedding_size(n)
    half = size // 2
    row = fgn_autocovariance(np.arange(half + 1), H)
    eig = np.fft.rfft(np.concatenate([row, row[-2:0:-1]])).real
    lo, hi = eig.min(), eig.max()
    valid = lo >= -CLIP_RTOL * hi
    eig = np.clip(eig, 0.0, None)
    eig.setflags(write=False)
    return size, eig, bool(valid), float(lo / hi)


def embedding_eigenvalues(n: int, H: float) -> np.ndarray:
    """Circulant eigenvalues of the fGN embedding, with round-off negatives clipped to 0."""
    return _embedding(n, check_hurst(H))[1]


def embedding_is_valid(n: int, H: float) -> bool:
    return _embedding(n, check_hurst(H))[2]


def _circulant_unit_fgn(n: int, H: float, rng: np.random.Generator) -> np.ndarray:
    size, eig, _, _ = _embedding(n, H)
    half = size // 2
    z = rng.standard_normal(size)
    w = np.empty(half + 1, dtype=complex)
    w[0] = np.sqrt(eig[0] / size) * z[0]
    w[half] = np.sqrt(eig[half] / size) * z[1]
    scale = np.sqrt(eig[1:half] / (2 * size))
    w[1:half] = scale * (z[2::2] + 1j * z[3::2])
    return np.fft.irfft(w, n=size)[:n] * size


@lru_cache(maxsize=8)
def _levinson(n: int, H: float):
    """Prediction coefficients and innovation std devs for the Hosking recursion."""
    gamma = fgn_autocovariance(np.arange(n + 1), H)
    phis = []
    sig = np.empty(n)
    sig2 = gamma[0]
    sig[0] = np.sqrt(sig2)
    phi = np.zeros(0)
    for k in range(1, n):
        kappa = (gamma[k] - phi @ gamma[1:k][::-1]) / sig2 if k > 1 else gamma[1] / sig2
        phi = np.concatenate([phi - kappa * phi[::-1], [kappa]])
        sig2 *= 1.0 - kappa * kappa
        sig[k] = np.sqrt(max(sig2, 0.0))
        phis.append(phi)
    return phis, sig


def _hosking_unit_fgn(n: int, H: float, rng: np.random.Generator) -> np.ndarray:
    phis, sig = _levinson(n, H)
    z = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = sig[0] * z[0]
    for k in range(1, n):
        # phis[k-1][j] multiplies x[k-1-j]
        x[k] = phis[k - 1] @ x[k - 1 :: -1][:k] + sig[k] * z[k]
    return x


def resolve_method(n: int, H: float, method: str = "auto") -> str:
    """Generation method actually used for ``n`` increments at Hurst index ``H``."""
    if method not in ("auto", "circulant", "hosking"):
        raise DomainError(f"unknown fGN method {method!r}")
    if method != "auto":
        return method
    if H == 0.5:
        return "white"
    return "circulant" if embedding_is_valid(n, H) else "hosking"


def unit_fgn(n: int, H: float, rng: np.random.Generator, method: str = "auto") -> np.ndarray:
    """``n`` increments of fGN with unit step (lag-0 variance 1)."""
    H = check_hurst(H)
    if n == 0:
        return np.zeros(0)
    used = resolve_method(n, H, method)
    if used == "white":
        # At H = 1/2 the embedding is the identity; the normals are the increments.
        return rng.standard_normal(n)
    if used == "circulant":
        if not embedding_is_valid(n, H):
            raise DomainError(f"circulant embedding is not valid for n={n}, H={H}")
        return _circulant_unit_fgn(n, H, rng)
    if method == "auto":
        ratio = _embedding(n, H)[3]
        msg = (f"circulant embedding has eigenvalue ratio {ratio:.3g} for n={n}, H={H}; "
               "using the recursive conditional-mean method")
        log.warning(msg)
        warnings.warn(msg, EmbeddingFallbackWarning, stacklevel=3)
    return _hosking_unit_fgn(n, H, rng)


def generate_fgn(grid: TimeGrid, H: float, seed: SeedSpec, method: str = "auto") -> np.ndarray:
    """Increments W_H(t_{k+1}) - W_H(t_k) on ``grid``; lag-k covariance gamma(k) dt^2H."""
    H = check_hurst(H)
    return unit_fgn(grid.n_steps, H, seed.generator(), method) * grid.dt**H


def fbm_path(grid: TimeGrid, H: float, seed: SeedSpec, method: str = "auto") -> SamplePath:
    incr = generate_fgn(grid, H, seed, method)
    values = np.concatenate([[0.0], np.cumsum(incr)])
    return SamplePath(grid, values)


def fbm_matrix(grid: TimeGrid, H: float, master_seed: int, streams, method: str = "auto") -> np.ndarray:
    """Stack of fBM paths, one row per stream index (no parallelism here)."""
    streams = list(streams)
    out = np.zeros((len(streams), grid.n_steps + 1))
    scale = grid.dt ** check_hurst(H)
    for row, s in enumerate(streams):
        incr = unit_fgn(grid.n_steps, H, philox(master_seed, s), method)
        np.cumsum(incr * scale, out=out[row, 1:])
    return out
