"""The all-time supremum Z_u, the stationary workload, and the coupling time.

Sampling layout
---------------
Z_u = max_{s>=0} (W_H(s) - u s) is approximated by the maximum over the nodes
of a uniform grid on [0, T_max]. Both the horizon and the step are laid out in
the natural time scale ``tau_u = u**(-1/(1-H))`` of the drift:

    T_max = c_h * (q / u)**(1/(1-H)) = c_h * q**(1/(1-H)) * tau_u
    dt_u  = T_max / zu_steps

On that grid ``W_H(k dt_u) - u k dt_u`` equals ``tau_u**H`` times the same
expression at u = 1 (fGN increments scale as dt**H), so a single bank of
unit-scale maxima keyed by the seed serves every u. The samples for two
controls are then ordered and convex in u path by path, exactly as for the
continuous supremum.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .errors import DomainError, PreconditionError
from .fgn import NS_Z0, NS_ZU, SamplePath, SeedSpec, TimeGrid, check_hurst, philox, stream_index, unit_fgn
from .montecarlo import EstimateWithError, EstimatorConfig, map_chunks, path_bank

log = logging.getLogger(__name__)


def _check_control(u: float) -> float:
    u = float(u)
    if not u > 0:
        raise DomainError(f"Z_u requires u > 0 (Z_0 is infinite), got {u}")
    return u


def natural_time_scale(u: float, H: float) -> float:
    return _check_control(u) ** (-1.0 / (1.0 - check_hurst(H)))


def natural_horizon(H: float, cfg: EstimatorConfig) -> float:
    """T_max at u = 1."""
    q = norm.ppf(cfg.horizon_quantile)
    return cfg.horizon_factor * q ** (1.0 / (1.0 - check_hurst(H)))


def zu_horizon(u: float, H: float, cfg: EstimatorConfig) -> float:
    return natural_horizon(H, cfg) * natural_time_scale(u, H)


def theta_star(u: float, H: float) -> float:
    """Tail constant: u^2H / (2 H^2H (1-H)^(2(1-H)))."""
    u = _check_control(u)
    H = check_hurst(H)
    return u ** (2 * H) / (2 * H ** (2 * H) * (1 - H) ** (2 * (1 - H)))


# ---------------------------------------------------------------------------
# Unit-scale banks
# ---------------------------------------------------------------------------


def _unit_sups(lo, hi, H, n_steps, dt, master_seed, namespace, pilot):
    scale = dt**H
    out = np.empty((hi - lo, 3 if pilot else 1))
    for row, i in enumerate(range(lo, hi)):
        rng = philox(master_seed, stream_index(namespace, i))
        s = unit_fgn(n_steps, H, rng)
        s *= scale
        s -= dt
        np.cumsum(s, out=s)
        out[row, 0] = max(0.0, s.max())
        if pilot:
            # cumsum index j holds node j+1: odd indices are the even nodes.
            out[row, 1] = max(0.0, s[1::2].max()) if n_steps > 1 else 0.0
            out[row, 2] = max(0.0, s[: n_steps // 2].max()) if n_steps > 1 else 0.0
    return out


_UNIT_BANKS: dict = {}
_UNIT_BANK_SLOTS = 16


def unit_sup_bank(H: float, cfg: EstimatorConfig, n: int | None = None,
                  namespace: int = NS_ZU) -> np.ndarray:
    """Grid maxima of W_H(s) - s over [0, natural_horizon] with ``cfg.zu_steps`` steps."""
    H = check_hurst(H)
    n = cfg.zu_samples if n is None else int(n)
    dt = natural_horizon(H, cfg) / cfg.zu_steps
    key = (H, cfg.zu_steps, dt, cfg.master_seed, namespace, n)
    sups = _UNIT_BANKS.get(key)
    if sups is None:
        # Row i depends only on stream i, so a larger cached bank serves a prefix.
        for other, bank in _UNIT_BANKS.items():
            if other[:-1] == key[:-1] and other[-1] >= n:
                return bank[:n]
        sups = map_chunks(_unit_sups, n, (H, cfg.zu_steps, dt, cfg.master_seed, namespace, False),
                          workers=cfg.workers, chunk=2048)[:, 0]
        sups.setflags(write=False)
        while len(_UNIT_BANKS) >= _UNIT_BANK_SLOTS:
            _UNIT_BANKS.pop(next(iter(_UNIT_BANKS)))
        _UNIT_BANKS[key] = sups
    return sups


def clear_zu_cache() -> None:
    _UNIT_BANKS.clear()


@dataclass(frozen=True, eq=False)
class ZuSampleSet:
    u: float
    H: float
    samples: np.ndarray
    horizon_used: float
    dt_used: float
    seed: SeedSpec
    n_steps: int

    def __post_init__(self):
        if np.any(self.samples < 0):
            raise DomainError("Z_u samples must be non-negative")

    @property
    def n(self) -> int:
        return self.samples.size


def sample_Zu(u: float, H: float, cfg: EstimatorConfig, n: int | None = None,
              namespace: int = NS_ZU) -> ZuSampleSet:
    """i.i.d. draws of Z_u, one per stream index, as grid maxima over [0, T_max]."""
    u = _check_control(u)
    H = check_hurst(H)
    scale = natural_time_scale(u, H)
    unit = unit_sup_bank(H, cfg, n, namespace)
    samples = unit * scale**H
    samples.setflags(write=False)
    horizon = natural_horizon(H, cfg) * scale
    return ZuSampleSet(u, H, samples, horizon, horizon / cfg.zu_steps,
                       SeedSpec(cfg.master_seed, stream_index(namespace, 0)), cfg.zu_steps)


def estimate_G(u: float, C, H: float, cfg: EstimatorConfig) -> EstimateWithError:
    """G(u) = E C(Z_u) by the sample mean over :func:`sample_Zu`."""
    _check_control(u)
    if getattr(C, "is_zero", False):
        return EstimateWithError.exact(0.0, cfg.zu_samples, cfg.fingerprint())
    zs = sample_Zu(u, H, cfg)
    return EstimateWithError.from_samples(C(zs.samples), cfg.fingerprint())


# ---------------------------------------------------------------------------
# Grid and horizon diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridCheck:
    n_steps: int
    shift: float
    stderr: float
    passed: bool


@dataclass(frozen=True)
class ZuGridReport:
    """Outcome of the step-halving and horizon-doubling bias checks (natural units)."""

    H: float
    chosen_steps: int
    refinement: list = field(default_factory=list)
    horizon_check: GridCheck | None = None

    @property
    def refined(self) -> bool:
        return bool(self.refinement) and self.refinement[-1].passed


def _pilot(H, n_steps, dt, cfg, n_pilot):
    return map_chunks(_unit_sups, n_pilot, (H, n_steps, dt, cfg.master_seed, NS_ZU, True),
                      workers=cfg.workers, chunk=512)


def refine_zu_grid(H: float, cfg: EstimatorConfig, n_pilot: int = 2000,
                   max_halvings: int = 6, check_horizon: bool = True) -> ZuGridReport:
    """Halve the Z_u grid step until the pilot mean moves by < 0.5 standard errors.

    Each round simulates pilot paths on the halved step and compares the
    maximum over all nodes with the maximum over every second node of the same
    path. The horizon check simulates the doubled horizon at the chosen step
    and requires the mean to move by at most one standard error.
    """
    H = check_hurst(H)
    T = natural_horizon(H, cfg)
    steps = cfg.zu_steps
    rounds = []
    for _ in range(max_halvings):
        fine = 2 * steps
        stats = _pilot(H, fine, T / fine, cfg, n_pilot)
        shift = float(np.mean(stats[:, 0] - stats[:, 1]))
        se = float(np.std(stats[:, 0], ddof=1) / np.sqrt(n_pilot))
        ok = shift < 0.5 * se
        rounds.append(GridCheck(fine, shift, se, ok))
        log.info("Z_u grid H=%s steps=%d shift=%.3g stderr=%.3g", H, fine, shift, se)
        steps = fine
        if ok:
            break
    horizon = None
    if check_horizon:
        stats = _pilot(H, 2 * steps, T / steps, cfg, n_pilot)
        shift = float(np.mean(stats[:, 0] - stats[:, 2]))
        se = float(np.std(stats[:, 0], ddof=1) / np.sqrt(n_pilot))
        horizon = GridCheck(2 * steps, shift, se, shift <= se)
    return ZuGridReport(H, steps, rounds, horizon)


def check_zu_horizon(H: float, cfg: EstimatorConfig, n_pilot: int = 2000) -> GridCheck:
    """Doubling-horizon check at the configured step."""
    H = check_hurst(H)
    T = natural_horizon(H, cfg)
    stats = _pilot(H, 2 * cfg.zu_steps, T / cfg.zu_steps, cfg, n_pilot)
    shift = float(np.mean(stats[:, 0] - stats[:, 2]))
    se = float(np.std(stats[:, 0], ddof=1) / np.sqrt(n_pilot))
    return GridCheck(2 * cfg.zu_steps, shift, se, shift <= se)


# ---------------------------------------------------------------------------
# Tail asymptotics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TailFit:
    slope: float | None
    intercept: float | None
    n_points: int
    window: tuple[float, float]
    r2: float | None
    reference: float
    ok: bool
    message: str = ""

    @property
    def relative_error(self) -> float | None:
        if self.slope is None:
            return None
        return abs(self.slope - self.reference) / abs(self.reference)


def tail_slope(zs: ZuSampleSet, quantiles=(0.5, 0.995), min_samples: int = 10_000,
               min_points: int = 50) -> TailFit:
    """Least-squares slope of log P(Z >= z) against z^(2-2H) over a quantile window.

    The reference value is -theta*(u); the two agree in the large-z limit.
    """
    if zs.n < min_samples:
        raise PreconditionError(f"tail fit needs at least {min_samples} samples, got {zs.n}")
    z = np.sort(zs.samples)
    n = z.size
    lo, hi = np.quantile(z, quantiles)
    surv = (n - np.arange(n)) / n  # P(Z >= z_(i)) for the i-th order statistic
    # Ties (e.g. the atom at 0) keep only their first, largest survival value.
    first = np.concatenate([[True], z[1:] > z[:-1]])
    sel = first & (z >= lo) & (z <= hi) & (z > 0)
    reference = -theta_star(zs.u, zs.H)
    window = (float(lo), float(hi))
    if sel.sum() < min_points:
        return TailFit(None, None, int(sel.sum()), window, None, reference, False,
                       "too few distinct tail points in the window")
    x = z[sel] ** (2 - 2 * zs.H)
    y = np.log(surv[sel])
    A = np.column_stack([x, np.ones_like(x)])
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ np.array([slope, icpt])
    r2 = 1.0 - resid @ resid / np.sum((y - y.mean()) ** 2)
    return TailFit(float(slope), float(icpt), int(sel.sum()), window, float(r2), reference, True)


# ---------------------------------------------------------------------------
# Stationary path and coupling
# ---------------------------------------------------------------------------


def regulator_from_zero(u: float, W: np.ndarray, times: np.ndarray) -> np.ndarray:
    """L_0^u(t) = max(0, max_{s<=t} (u s - W(s))) along the last axis."""
    return np.maximum(np.maximum.accumulate(u * times - W, axis=-1), 0.0)


def workload_lagrange(x: float, u: float, W: np.ndarray, times: np.ndarray,
                      L0: np.ndarray | None = None) -> np.ndarray:
    """X_x^u(t) = W(t) - u t + max(x, L_0^u(t)); equals the reflected path."""
    if L0 is None:
        L0 = regulator_from_zero(u, W, times)
    x = np.asarray(x, dtype=float)
    if x.ndim:
        x = x[..., None]
    return W - u * times + np.maximum(x, L0)


def stationary_path(u: float, H: float, W: SamplePath, z0: float) -> SamplePath:
    """X*(t) = W(t) - u t + max(z0, L_0^u(t)) with X*(0) = z0 drawn from the law of Z_u."""
    _check_control(u)
    check_hurst(H)
    if z0 < 0:
        raise DomainError(f"stationary initial value must be >= 0, got {z0}")
    if W.values[0] != 0:
        raise DomainError("driving path must start at 0")
    return SamplePath(W.grid, workload_lagrange(z0, u, W.values, W.times))


@dataclass(frozen=True)
class CouplingReport:
    tau0: float
    coupled: bool
    max_post_coupling_gap: float
    index: int = -1
    message: str = ""


def coupling_time(x: float, u: float, H: float, W: SamplePath, z0: float) -> CouplingReport:
    """First node where L_0^u exceeds x + z0, and the gap between X_x^u and X* afterwards."""
    _check_control(u)
    check_hurst(H)
    if x < 0 or z0 < 0:
        raise DomainError("x and z0 must be non-negative")
    times = W.times
    L0 = regulator_from_zero(u, W.values, times)
    return _coupling_row(x, u, W.values, times, L0, z0)


def _coupling_row(x, u, W, times, L0, z0) -> CouplingReport:
    hit = np.flatnonzero(L0 > x + z0)
    if hit.size == 0:
        return CouplingReport(float("inf"), False, float("nan"), -1,
                              "horizon too short: regulator never exceeded x + X*(0)")
    k = int(hit[0])
    Xx = workload_lagrange(x, u, W[k:], times[k:], L0[k:])
    Xs = workload_lagrange(z0, u, W[k:], times[k:], L0[k:])
    return CouplingReport(float(times[k]), True, float(np.max(np.abs(Xx - Xs))), k)


@dataclass(frozen=True, eq=False)
class CouplingStudy:
    x: float
    u: float
    H: float
    horizon: float
    reports: list
    reports_half: list

    @staticmethod
    def _summary(reports):
        taus = np.array([r.tau0 for r in reports if r.coupled])
        frac = taus.size / len(reports)
        return frac, (float(taus.mean()) if taus.size else float("inf"))

    @property
    def fraction_coupled(self) -> float:
        return self._summary(self.reports)[0]

    @property
    def mean_tau(self) -> float:
        return self._summary(self.reports)[1]

    @property
    def fraction_coupled_half(self) -> float:
        return self._summary(self.reports_half)[0]

    @property
    def mean_tau_half(self) -> float:
        return self._summary(self.reports_half)[1]

    @property
    def max_gap(self) -> float:
        gaps = [r.max_post_coupling_gap for r in self.reports + self.reports_half if r.coupled]
        return max(gaps) if gaps else float("nan")


def coupling_study(x: float, u: float, H: float, cfg: EstimatorConfig,
                   horizon: float | None = None) -> CouplingStudy:
    """Coupling times over ``cfg.n_paths`` paths simulated on twice ``horizon``.

    ``reports_half`` looks only at the first half of each path, so comparing
    the two lists shows what doubling the horizon changes. X*(0) comes from
    an independent Z_u draw.
    """
    _check_control(u)
    horizon = cfg.horizon if horizon is None else horizon
    grid = TimeGrid.covering(2 * horizon, cfg.dt)
    bank = path_bank(H, grid, cfg)
    z0 = sample_Zu(u, H, cfg, n=cfg.n_paths, namespace=NS_Z0).samples
    half = grid.n_steps // 2
    times = grid.times
    full, short = [], []
    for i in range(bank.n_paths):
        W = bank.W[i]
        L0 = regulator_from_zero(u, W, times)
        full.append(_coupling_row(x, u, W, times, L0, z0[i]))
        short.append(_coupling_row(x, u, W[: half + 1], times[: half + 1], L0[: half + 1], z0[i]))
    return CouplingStudy(x, u, H, grid.horizon, full, short)


__all__ = [
    "ZuSampleSet", "sample_Zu", "estimate_G", "theta_star", "tail_slope",
    "stationary_path", "coupling_time", "coupling_study", "refine_zu_grid",
]
