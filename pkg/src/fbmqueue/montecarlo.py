"""Monte Carlo plumbing: estimator configuration, estimates, path banks, workers."""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
import multiprocessing as mp

import numpy as np

from .errors import DomainError
from .fgn import NS_PATHS, TimeGrid, check_hurst, fbm_matrix, stream_index

#: Environment variable that overrides the default number of worker processes.
WORKERS_ENV = "FBMQUEUE_WORKERS"


@dataclass(frozen=True)
class EstimatorConfig:
    """Knobs shared by every Monte Carlo estimator.

    ``dt``/``horizon``/``n_paths`` describe workload simulations in model time.
    ``zu_samples``/``zu_steps`` describe the Z_u sampler, whose grid is laid out
    in the natural time scale of the drift (see :mod:`fbmqueue.stationary`).
    """

    n_paths: int = 200
    dt: float = 0.01
    horizon: float = 200.0
    master_seed: int = 2024
    common_random_numbers: bool = True
    zu_samples: int = 20_000
    zu_steps: int = 2**16
    horizon_factor: float = 4.0
    horizon_quantile: float = 0.999
    zero_noise: bool = False
    workers: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.n_paths < 2:
            raise DomainError("n_paths must be at least 2")
        if not self.dt > 0:
            raise DomainError("dt must be positive")
        if not self.horizon > 0:
            raise DomainError("horizon must be positive")
        if self.zu_samples < 2 or self.zu_steps < 1:
            raise DomainError("zu_samples must be >= 2 and zu_steps >= 1")
        if not 0.5 < self.horizon_quantile < 1 or self.horizon_factor <= 0:
            raise DomainError("horizon_quantile must lie in (0.5, 1) and horizon_factor > 0")
        if not 0 <= int(self.master_seed) < 2**64:
            raise DomainError("master_seed must be an unsigned 64-bit integer")

    def with_(self, **changes) -> "EstimatorConfig":
        return replace(self, **changes)

    def fingerprint(self) -> str:
        payload = asdict(self)
        payload.pop("workers")
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class EstimateWithError:
    mean: float
    stderr: float
    n: int
    fingerprint: str = ""

    def __post_init__(self):
        if self.stderr < 0 or self.n < 2:
            raise DomainError("an estimate needs stderr >= 0 and n >= 2")

    @classmethod
    def from_samples(cls, samples, fingerprint: str = "") -> "EstimateWithError":
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        mean = float(np.mean(samples))
        stderr = float(np.std(samples, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return cls(mean, stderr, n, fingerprint)

    @classmethod
    def exact(cls, value: float, n: int = 2, fingerprint: str = "") -> "EstimateWithError":
        return cls(float(value), 0.0, max(n, 2), fingerprint)

    def __add__(self, other: "EstimateWithError") -> "EstimateWithError":
        # Independent sources: variances add.
        return EstimateWithError(self.mean + other.mean,
                                 float(np.hypot(self.stderr, other.stderr)),
                                 min(self.n, other.n), self.fingerprint)

    def shift(self, value: float) -> "EstimateWithError":
        return replace(self, mean=self.mean + float(value))

    def scale(self, factor: float) -> "EstimateWithError":
        return replace(self, mean=self.mean * factor, stderr=self.stderr * abs(factor))


# ---------------------------------------------------------------------------
# Workers
# ---------------------------------------------------------------------------


def default_workers(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise DomainError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return 1


def _chunks(n: int, parts: int):
    bounds = np.linspace(0, n, parts + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def map_chunks(func, n: int, args: tuple = (), workers: int | None = None, chunk: int = 4096):
    """Evaluate ``func(lo, hi, *args)`` over [0, n) and concatenate results in order.

    The split only decides who computes what; results are a function of the
    index range alone, so any worker count gives bit-identical output.
    """
    workers = default_workers(workers)
    parts = max(workers, int(np.ceil(n / chunk)))
    spans = _chunks(n, parts)
    if workers == 1 or len(spans) == 1:
        pieces = [func(lo, hi, *args) for lo, hi in spans]
    else:
        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            futures = [pool.submit(func, lo, hi, *args) for lo, hi in spans]
            pieces = [f.result() for f in futures]
    return np.concatenate(pieces, axis=0)


# ---------------------------------------------------------------------------
# Path banks
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PathBank:
    """A frozen ensemble of fBM paths sharing one grid (common random numbers)."""

    H: float
    grid: TimeGrid
    master_seed: int
    W: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.W.shape[0]

    @property
    def stream_range(self) -> tuple[int, int]:
        return stream_index(NS_PATHS, 0), stream_index(NS_PATHS, self.n_paths)

    def prefix(self, n_steps: int) -> "PathBank":
        """Restriction to the first ``n_steps`` steps; still a valid fBM ensemble."""
        if n_steps > self.grid.n_steps:
            raise DomainError("prefix longer than the bank")
        return PathBank(self.H, TimeGrid(self.grid.dt, n_steps), self.master_seed,
                        self.W[:, : n_steps + 1])

    def covering(self, horizon: float) -> "PathBank":
        return self.prefix(min(self.grid.n_steps, TimeGrid.covering(horizon, self.grid.dt).n_steps))


def _bank_rows(lo, hi, grid, H, master_seed):
    return fbm_matrix(grid, H, master_seed, (stream_index(NS_PATHS, i) for i in range(lo, hi)))


_BANKS: dict = {}
_BANK_SLOTS = 3


def path_bank(H: float, grid: TimeGrid, cfg: EstimatorConfig) -> PathBank:
    """fBM ensemble of ``cfg.n_paths`` paths on ``grid``; cached per configuration."""
    H = check_hurst(H)
    key = (H, grid.dt, grid.n_steps, cfg.n_paths, cfg.master_seed, cfg.zero_noise)
    bank = _BANKS.get(key)
    if bank is None:
        if cfg.zero_noise:
            W = np.zeros((cfg.n_paths, grid.n_steps + 1))
        else:
            W = map_chunks(_bank_rows, cfg.n_paths, (grid, H, cfg.master_seed),
                           workers=cfg.workers, chunk=64)
        W.setflags(write=False)
        bank = PathBank(H, grid, cfg.master_seed, W)
        while len(_BANKS) >= _BANK_SLOTS:
            _BANKS.pop(next(iter(_BANKS)))
        _BANKS[key] = bank
    return bank


def clear_caches() -> None:
    _BANKS.clear()
