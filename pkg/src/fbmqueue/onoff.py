"""Superposed heavy-tailed ON-OFF sources feeding a constant-rate server.

Each source alternates ON periods (input at unit rate) and OFF periods, both
Pareto distributed. Under the heavy-traffic service rate

    mu = n * lam + u * tau**(H - 1) * sqrt(n)

the queue rescaled by ``tau**-H * n**-0.5`` on the time scale ``tau * t`` is
the prelimit version of the reflected fBM workload with drift u.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError
from .fgn import NS_ONOFF, SamplePath, TimeGrid, philox, stream_index
from .montecarlo import map_chunks
from .skorokhod import reflect_array


def hurst_from_tails(alpha1: float, alpha2: float) -> float:
    """H = (3 - min(alpha1, alpha2)) / 2."""
    for a in (alpha1, alpha2):
        if not 1.0 < a < 2.0:
            raise DomainError(f"tail indices must lie in (1, 2), got {a}")
    return (3.0 - min(alpha1, alpha2)) / 2.0


def pareto_scale(mean: float, alpha: float) -> float:
    """x_min of the Pareto law with survival (x / x_min)^-alpha and the given mean."""
    return mean * (alpha - 1.0) / alpha


@dataclass(frozen=True)
class OnOffSpec:
    """Source population and server.

    ``m2 = 0`` is accepted as the degenerate always-ON source. ``service_rate``
    overrides the heavy-traffic rate when given. ``x0`` is the unscaled
    initial queue.
    """

    alpha1: float
    alpha2: float
    m1: float = 1.0
    m2: float = 1.0
    n_sources: int = 1
    tau: float = 1.0
    u: float = 1.0
    x0: float = 0.0
    service_rate: float | None = None
    burn_in_factor: float = 10.0

    def __post_init__(self):
        hurst_from_tails(self.alpha1, self.alpha2)
        if not self.m1 > 0 or self.m2 < 0:
            raise DomainError("mean ON duration must be > 0 and mean OFF duration >= 0")
        if int(self.n_sources) != self.n_sources or self.n_sources < 1:
            raise DomainError("n_sources must be a positive integer")
        if not self.tau > 0:
            raise DomainError("tau must be positive")
        if self.u < 0 or self.x0 < 0 or self.burn_in_factor < 0:
            raise DomainError("u, x0 and burn_in_factor must be non-negative")
        if self.service_rate is not None and self.service_rate < 0:
            raise DomainError("service rate must be non-negative")

    def with_(self, **changes) -> "OnOffSpec":
        return replace(self, **changes)

    @property
    def H(self) -> float:
        return hurst_from_tails(self.alpha1, self.alpha2)

    @property
    def lam(self) -> float:
        """Long-run ON fraction m1 / (m1 + m2), the mean input rate of one source."""
        return self.m1 / (self.m1 + self.m2)

    @property
    def always_on(self) -> bool:
        return self.m2 == 0

    @property
    def mu(self) -> float:
        if self.service_rate is not None:
            return float(self.service_rate)
        n = self.n_sources
        return n * self.lam + self.u * self.tau ** (self.H - 1.0) * math.sqrt(n)

    @property
    def burn_in(self) -> float:
        return self.burn_in_factor * (self.m1 + self.m2)

    @property
    def space_scale(self) -> float:
        return self.tau ** (-self.H) / math.sqrt(self.n_sources)

    def scaled_drift(self) -> float:
        """(mu - n lam) tau^(1-H) / sqrt(n): the drift of the scaled net input."""
        return (self.mu - self.n_sources * self.lam) * self.tau * self.space_scale


def _on_time(s: np.ndarray, spec: OnOffSpec, rng: np.random.Generator) -> np.ndarray:
    """Cumulative ON time of one source at prelimit times ``burn_in + s``, minus its value at burn_in."""
    start = spec.burn_in
    end = start + float(s[-1])
    if spec.always_on:
        return s.copy()
    xm1 = pareto_scale(spec.m1, spec.alpha1)
    xm2 = pareto_scale(spec.m2, spec.alpha2)
    batch = max(16, int(1.2 * end / (spec.m1 + spec.m2)) + 16)
    ons, offs, total = [], [], 0.0
    while total <= end:
        on = xm1 * (1.0 + rng.pareto(spec.alpha1, batch))
        off = xm2 * (1.0 + rng.pareto(spec.alpha2, batch))
        ons.append(on)
        offs.append(off)
        total += on.sum() + off.sum()
    on = np.concatenate(ons)
    off = np.concatenate(offs)
    # Breakpoints: ON starts at b[2j], OFF starts at b[2j+1]; cumulative ON time is
    # piecewise linear between them.
    durations = np.empty(2 * on.size)
    durations[0::2] = on
    durations[1::2] = off
    b = np.concatenate([[0.0], np.cumsum(durations)])
    gained = np.zeros_like(durations)
    gained[0::2] = on
    cum = np.concatenate([[0.0], np.cumsum(gained)])
    a = np.interp(start + s, b, cum)
    return a - np.interp(start, b, cum)


SOURCE_BLOCK = 16


def _source_blocks(lo, hi, s, spec, master_seed):
    """One row per block of SOURCE_BLOCK sources; fixed blocks keep the summation order worker-free."""
    out = np.zeros((hi - lo, s.size))
    for row, b in enumerate(range(lo, hi)):
        for i in range(b * SOURCE_BLOCK, min((b + 1) * SOURCE_BLOCK, spec.n_sources)):
            out[row] += _on_time(s, spec, philox(master_seed, stream_index(NS_ONOFF, i)))
    return out


@dataclass(frozen=True, eq=False)
class OnOffRun:
    spec: OnOffSpec
    queue: SamplePath        # scaled queue on model time t
    regulator: SamplePath    # scaled regulator
    input: SamplePath        # scaled centred cumulative input tau^-H n^-1/2 (A(tau t) - n lam tau t)
    on_fraction: float
    seed: int
    report: dict = field(default_factory=dict)


def simulate_onoff_queue(spec: OnOffSpec, horizon: float, seed: int, dt: float = 0.01,
                         workers: int | None = None) -> OnOffRun:
    """Scaled queue tau^-H n^-1/2 Q(tau t) for t on a grid of step ``dt`` up to ``horizon``.

    The queue is the reflection of x0 + A(s) - mu s, with A the superposed
    cumulative input observed after the burn-in period.
    """
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    grid = TimeGrid.covering(horizon, dt)
    s = spec.tau * grid.times
    n_blocks = -(-spec.n_sources // SOURCE_BLOCK)
    sums = map_chunks(_source_blocks, n_blocks, (s, spec, seed), workers=workers, chunk=1)
    A = np.zeros(s.size)
    for row in sums:
        A += row
    net = spec.x0 + A - spec.mu * s
    Q, L = reflect_array(net)
    c = spec.space_scale
    n = spec.n_sources
    on_fraction = float(A[-1] / (n * s[-1]))
    report = {"H": spec.H, "lam": spec.lam, "mu": spec.mu, "scaled_drift": spec.scaled_drift(),
              "u": spec.u, "space_scale": c, "burn_in": spec.burn_in,
              "stream_lo": stream_index(NS_ONOFF, 0), "stream_hi": stream_index(NS_ONOFF, n)}
    return OnOffRun(spec, SamplePath(grid, c * Q), SamplePath(grid, c * L),
                    SamplePath(grid, c * (A - n * spec.lam * s)), on_fraction, seed, report)


@dataclass(frozen=True)
class VarianceExponentFit:
    exponent: float
    target: float
    lags: tuple
    variances: tuple
    n_replicas: int

    @property
    def error(self) -> float:
        return abs(self.exponent - self.target)


def dyadic_lags(n_steps: int, min_lag: int = 1, max_fraction: float = 0.125) -> list[int]:
    top = max(min_lag, int(n_steps * max_fraction))
    lags = []
    k = min_lag
    while k <= top:
        lags.append(k)
        k *= 2
    return lags


def increment_variances(paths: np.ndarray, lags) -> np.ndarray:
    """Mean squared increment of the centred input at each lag, pooled over rows and start times."""
    paths = np.atleast_2d(paths)
    return np.array([np.mean((paths[:, k:] - paths[:, :-k]) ** 2) for k in lags])


def variance_exponent(spec: OnOffSpec, horizon: float, seed: int, n_replicas: int = 8,
                      dt: float = 0.01, min_lag: int = 1, max_fraction: float = 0.125,
                      workers: int | None = None) -> VarianceExponentFit:
    """Log-log slope of the increment variance of the scaled input over dyadic lags.

    Replica r uses master seed ``seed + r``. The centring uses the exact mean
    rate, so the variances include no estimated-mean correction.
    """
    runs = [simulate_onoff_queue(spec, horizon, seed + r, dt, workers).input.values
            for r in range(n_replicas)]
    paths = np.vstack(runs)
    lags = dyadic_lags(paths.shape[1] - 1, min_lag, max_fraction)
    if len(lags) < 3:
        raise DomainError("horizon too short for a fit over at least three dyadic lags")
    v = increment_variances(paths, lags)
    slope = np.polyfit(np.log(np.array(lags) * dt), np.log(v), 1)[0]
    return VarianceExponentFit(float(slope), 2 * spec.H, tuple(float(k * dt) for k in lags),
                               tuple(float(x) for x in v), n_replicas)
