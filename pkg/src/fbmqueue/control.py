"""Optimal constant controls for the ergodic, constrained, discounted and finite-horizon problems."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .costs import (CostFunctionSpec, discount_horizon, discounted_cost, ergodic_cost_reduced,
                    finite_horizon_cost)
from .errors import BracketError, DomainError, PreconditionError, UnsupportedModelError
from .fgn import TimeGrid
from .montecarlo import EstimateWithError, EstimatorConfig, PathBank, path_bank
from .skorokhod import ModelSpec, rate_limit_at_zero

log = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5) - 1) / 2
DEFAULT_U_RANGE = (1e-3, 50.0)
DEFAULT_GRID_POINTS = 25
MIN_TOL = 1e-3


class MultimodalityWarning(UserWarning):
    """The objective is not known to be convex; the grid argmin is returned."""


class BoundaryOptimumWarning(UserWarning):
    """The grid argmin sits at the lower end of the search range."""


def log_grid(lo: float = DEFAULT_U_RANGE[0], hi: float = DEFAULT_U_RANGE[1],
             n: int = DEFAULT_GRID_POINTS, include_zero: bool = False) -> np.ndarray:
    grid = np.geomspace(lo, hi, n)
    return np.concatenate([[0.0], grid]) if include_zero else grid


@dataclass(frozen=True, eq=False)
class OptimizationResult:
    u_star: float
    value: EstimateWithError
    history: tuple
    bracket: tuple[float, float]
    convexity_assumed: bool
    fingerprint: str
    warnings: tuple = ()
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        lo, hi = self.bracket
        if not lo <= self.u_star <= hi:
            raise DomainError("u_star must lie in the final bracket")


def probe_config(cfg: EstimatorConfig, k: int) -> EstimatorConfig:
    """Configuration for the k-th probe: the same seeds under CRN, fresh ones otherwise."""
    if cfg.common_random_numbers:
        return cfg
    return cfg.with_(master_seed=(cfg.master_seed + 7919 * (k + 1)) % 2**64)


class _Objective:
    """Memoized objective ``func(u, k)``, k being the probe number; probes are recorded in order."""

    def __init__(self, func):
        self.func = func
        self.cache: dict[float, EstimateWithError] = {}
        self.history: list[tuple[float, float]] = []

    def __call__(self, u: float) -> EstimateWithError:
        u = float(u)
        est = self.cache.get(u)
        if est is None:
            est = self.func(u, len(self.history))
            if hasattr(est, "value"):
                est = est.value
            self.cache[u] = est
            self.history.append((u, est.mean))
        return est


def _noise_floor(obj: _Objective, a: float, m: float, b: float) -> float:
    """Bracket width below which the objective change is within one stderr."""
    fa, fm, fb = obj(a).mean, obj(m).mean, obj(b).mean
    se = max(obj(a).stderr, obj(m).stderr, obj(b).stderr)
    if se == 0:
        return 0.0
    ha, hb = m - a, b - m
    curv = 2 * ((fb - fm) / hb - (fm - fa) / ha) / (ha + hb) if ha > 0 and hb > 0 else 0.0
    if curv <= 0:
        return b - a
    return 2 * math.sqrt(se / curv)


def _golden(obj: _Objective, a: float, b: float, tol: float) -> tuple[float, float, float]:
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = obj(c).mean, obj(d).mean
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = obj(c).mean
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = obj(d).mean
    best = min((a, c, d, b), key=lambda u: obj(u).mean)
    return best, a, b


def minimize_on_grid(func, grid, convex: bool, tol: float = MIN_TOL, noisy: bool = False,
                     fingerprint: str = "", label: str = "objective") -> OptimizationResult:
    """Grid scan to bracket the minimum, then golden-section refinement if ``convex``.

    ``func(u, k)`` evaluates probe number k. With ``noisy`` (independent seeds
    per probe) the refinement stops at the width where the objective change
    drops below one standard error; with frozen seeds the objective is a
    deterministic function of u and only ``tol`` applies.
    Raises :class:`BracketError` if the grid argmin is the upper end.
    """
    grid = np.asarray(sorted(set(float(g) for g in grid)))
    if grid.size < 3:
        raise DomainError("the search grid needs at least three points")
    obj = _Objective(func)
    values = np.array([obj(u).mean for u in grid])
    i = int(np.argmin(values))
    notes = []
    if i == grid.size - 1:
        raise BracketError(f"{label} still decreasing at u_hi = {grid[-1]:g}; "
                           "widen the search range", list(obj.history))
    if i == 0 and grid[0] > 0:
        msg = (f"{label} is smallest at u_lo = {grid[0]:g}; the infimum may lie "
               "below the search range")
        warnings.warn(msg, BoundaryOptimumWarning, stacklevel=3)
        log.warning(msg)
        notes.append(msg)
    lo, hi = grid[max(i - 1, 0)], grid[i + 1]
    if not convex:
        msg = f"{label} is not known to be convex; returning the grid argmin"
        warnings.warn(msg, MultimodalityWarning, stacklevel=3)
        notes.append(msg)
        u_star = float(grid[i])
    else:
        floor = _noise_floor(obj, lo, grid[i], hi) if noisy and i > 0 else 0.0
        u_star, lo, hi = _golden(obj, lo, hi, max(tol, floor))
    return OptimizationResult(float(u_star), obj(u_star), tuple(obj.history), (float(lo), float(hi)),
                              convex, fingerprint, tuple(notes))


# ---------------------------------------------------------------------------
# Structural checks
# ---------------------------------------------------------------------------


def _drift_is_affine_increasing(model: ModelSpec) -> bool:
    b = model.drift_b
    return b.beta == 1 and b.c1 > 0


def ergodic_is_convex(model: ModelSpec, h: CostFunctionSpec, C: CostFunctionSpec) -> bool:
    """h, C convex and u -> p b(u) + G(f(u)) convex for the drift/volatility family at hand.

    G is convex and decreasing for convex non-decreasing C, so G o f is convex
    when f is concave; with constant sigma that means b concave (beta <= 1),
    and p b(u) needs beta >= 1 unless p = 0.
    """
    if not (h.is_convex and C.is_convex and model.sigma.is_constant):
        return False
    beta = model.drift_b.beta
    return beta == 1 or (beta < 1 and model.p == 0)


def pathwise_is_convex(model: ModelSpec, h: CostFunctionSpec, C: CostFunctionSpec) -> bool:
    """Discounted and finite-horizon costs are convex in u path by path for affine drift."""
    return h.is_convex and C.is_convex and model.sigma.is_constant and _drift_is_affine_increasing(model)


def _check_rate_at_zero(model: ModelSpec):
    f0 = rate_limit_at_zero(model)
    if f0 != 0:
        raise PreconditionError(f"the time-change rate must vanish as u -> 0+, got f(0+) = {f0}")


def _rate_is_convex_increasing(model: ModelSpec, u_hi: float, n: int = 2001) -> bool:
    u = np.linspace(0, u_hi, n)[1:]
    f = model.drift_b(u) / model.sigma(u) ** (1.0 / model.H)
    d1 = np.diff(f)
    d2 = np.diff(f, 2)
    scale = np.max(np.abs(f))
    return bool(np.all(d1 > 0) and np.all(d2 >= -1e-12 * scale))


# ---------------------------------------------------------------------------
# Problems
# ---------------------------------------------------------------------------


def optimize_ergodic(model: ModelSpec, h: CostFunctionSpec, C: CostFunctionSpec,
                     cfg: EstimatorConfig, u_grid=None, tol: float = MIN_TOL) -> OptimizationResult:
    """Minimize the reduced ergodic cost over u > 0; the result does not depend on model.x."""
    _check_rate_at_zero(model)
    grid = log_grid() if u_grid is None else u_grid
    if np.min(grid) <= 0:
        raise DomainError("the ergodic problem needs u > 0 on the whole grid")
    convex = ergodic_is_convex(model, h, C)
    return minimize_on_grid(lambda u, k: ergodic_cost_reduced(u, model, h, C, probe_config(cfg, k)),
                            grid, convex, tol, not cfg.common_random_numbers, cfg.fingerprint(),
                            "ergodic cost")


def constrained_assumptions(model: ModelSpec, h: CostFunctionSpec, C: CostFunctionSpec,
                            u_hi: float = DEFAULT_U_RANGE[1]) -> list[str]:
    bad = []
    if not h.is_strictly_convex:
        bad.append("h must be strictly convex")
    if not C.is_convex:
        bad.append("C must be convex")
    if rate_limit_at_zero(model) != 0:
        bad.append("f(0+) must be 0")
    if not _rate_is_convex_increasing(model, u_hi):
        bad.append("f must be convex and increasing")
    return bad


def optimize_constrained(model: ModelSpec, h: CostFunctionSpec, C: CostFunctionSpec, m: float,
                         cfg: EstimatorConfig, u_grid=None, tol: float = MIN_TOL) -> OptimizationResult:
    """u*(m) = min(m, u0*) where u0* is the unconstrained optimum with p = 0."""
    if not m > 0:
        raise DomainError(f"budget m must be positive, got {m}")
    bad = constrained_assumptions(model, h, C)
    if bad:
        raise PreconditionError("constrained problem: " + "; ".join(bad))
    free = model.with_(p=0.0)
    base = optimize_ergodic(free, h, C, cfg, u_grid, tol)
    u_star = min(float(m), base.u_star)
    value = ergodic_cost_reduced(u_star, free, h, C, cfg).value
    lo, hi = base.bracket
    bracket = (min(lo, u_star), max(hi, u_star)) if u_star < base.u_star else base.bracket
    return OptimizationResult(u_star, value, base.history, bracket, base.convexity_assumed,
                              base.fingerprint, base.warnings,
                              {"m": float(m), "u0_star": base.u_star, "binding": u_star < base.u_star})


def constrained_grid_scan(model: ModelSpec, h: CostFunctionSpec, C: CostFunctionSpec, m: float,
                          cfg: EstimatorConfig, n: int = 200) -> tuple[float, float]:
    """Brute-force argmin of the p = 0 reduced cost over n equally spaced points in (0, m].

    Returns (argmin, grid resolution).
    """
    free = model.with_(p=0.0)
    us = np.linspace(m / n, m, n)
    vals = [ergodic_cost_reduced(u, free, h, C, cfg).mean for u in us]
    return float(us[int(np.argmin(vals))]), float(m / n)


def _require_constant_sigma(model: ModelSpec):
    if not model.sigma.is_constant:
        raise UnsupportedModelError("the discounted problem is only available for constant sigma")


def optimize_discounted(x: float, alpha: float, model: ModelSpec, h: CostFunctionSpec,
                        C: CostFunctionSpec, cfg: EstimatorConfig, u_grid=None,
                        tol: float = MIN_TOL, bank: PathBank | None = None) -> OptimizationResult:
    """Minimize J_alpha(x, u) over u >= 0 with one frozen path bank for every probe."""
    if not alpha > 0:
        raise DomainError(f"discount rate must be positive, got {alpha}")
    _require_constant_sigma(model)
    if bank is None and cfg.common_random_numbers:
        bank = path_bank(model.H, TimeGrid.covering(discount_horizon(alpha), cfg.dt), cfg)
    grid = log_grid(include_zero=True) if u_grid is None else u_grid

    def probe(u, k):
        if cfg.common_random_numbers:
            return discounted_cost(x, u, alpha, model, h, C, cfg, bank)
        return discounted_cost(x, u, alpha, model, h, C, probe_config(cfg, k))

    res = minimize_on_grid(probe, grid, pathwise_is_convex(model, h, C), tol,
                           not cfg.common_random_numbers, cfg.fingerprint(), "discounted cost")
    res.info.update({"x": float(x), "alpha": float(alpha)})
    return res


def optimize_finite_horizon(x: float, T: float, model: ModelSpec, h: CostFunctionSpec,
                            C: CostFunctionSpec, cfg: EstimatorConfig, u_grid=None,
                            tol: float = MIN_TOL, bank: PathBank | None = None) -> OptimizationResult:
    """Minimize I(u, x, T) over u >= 0 with one frozen path bank for every probe."""
    if not T > 0:
        raise DomainError(f"horizon must be positive, got {T}")
    if bank is None and cfg.common_random_numbers:
        bank = path_bank(model.H, TimeGrid.covering(T, cfg.dt), cfg)
    grid = log_grid(include_zero=True) if u_grid is None else u_grid

    def probe(u, k):
        if cfg.common_random_numbers:
            return finite_horizon_cost(x, u, T, model, h, C, cfg, bank)
        return finite_horizon_cost(x, u, T, model, h, C, probe_config(cfg, k))

    res = minimize_on_grid(probe, grid, pathwise_is_convex(model, h, C), tol,
                           not cfg.common_random_numbers, cfg.fingerprint(), "finite-horizon cost")
    res.info.update({"x": float(x), "T": float(T)})
    return res


# ---------------------------------------------------------------------------
# Abelian limits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AbelianRow:
    param: float
    scaled_value: float
    stderr: float
    u_star: float
    deviation: float


@dataclass(frozen=True, eq=False)
class AbelianReport:
    alpha_rows: list
    T_rows: list
    reference: EstimateWithError
    u_star_ergodic: float | None
    fixed_u: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        a = [r.param for r in self.alpha_rows]
        t = [r.param for r in self.T_rows]
        if any(x <= y for x, y in zip(a, a[1:])) or any(x >= y for x, y in zip(t, t[1:])):
            raise DomainError("alpha rows must decrease and T rows must increase")

    @staticmethod
    def _shrinking(rows) -> bool:
        devs = [abs(r.deviation) for r in rows]
        return all(b < a for a, b in zip(devs, devs[1:]))

    @property
    def alpha_trend_ok(self) -> bool:
        return self._shrinking(self.alpha_rows)

    @property
    def T_trend_ok(self) -> bool:
        return self._shrinking(self.T_rows)

    def final_relative_deviation(self, which: str) -> float:
        rows = self.alpha_rows if which == "alpha" else self.T_rows
        return abs(rows[-1].deviation) / abs(self.reference.mean)


def abelian_check(x: float, model: ModelSpec, h: CostFunctionSpec, C: CostFunctionSpec,
                  alpha_seq, T_seq, cfg: EstimatorConfig, fixed_u: float | None = None,
                  u_grid=None, tol: float = MIN_TOL) -> AbelianReport:
    """alpha V_alpha(x) and V(x,T)/T against the ergodic value, all rows on one path bank.

    With ``fixed_u`` the inner optimizations are skipped and the rows compare
    alpha J_alpha(x, u) and I(u, x, T)/T with the reduced ergodic cost I(u).
    """
    alpha_seq = [float(a) for a in alpha_seq]
    T_seq = [float(t) for t in T_seq]
    if any(a <= 0 for a in alpha_seq) or any(t <= 0 for t in T_seq):
        raise DomainError("discount rates and horizons must be positive")
    if any(a <= b for a, b in zip(alpha_seq, alpha_seq[1:])):
        raise DomainError("alpha_seq must be strictly decreasing")
    if any(a >= b for a, b in zip(T_seq, T_seq[1:])):
        raise DomainError("T_seq must be strictly increasing")
    _require_constant_sigma(model)
    longest = max([discount_horizon(a) for a in alpha_seq] + T_seq)
    bank = path_bank(model.H, TimeGrid.covering(longest, cfg.dt), cfg)

    if fixed_u is None:
        erg_grid = None if u_grid is None else [g for g in u_grid if g > 0]
        erg = optimize_ergodic(model, h, C, cfg, erg_grid, tol)
        reference, u_erg = erg.value, erg.u_star
    else:
        reference, u_erg = ergodic_cost_reduced(fixed_u, model, h, C, cfg).value, None

    alpha_rows = []
    for a in alpha_seq:
        if fixed_u is None:
            r = optimize_discounted(x, a, model, h, C, cfg, u_grid, tol, bank)
            est, u = r.value, r.u_star
        else:
            est, u = discounted_cost(x, fixed_u, a, model, h, C, cfg, bank).value, fixed_u
        alpha_rows.append(AbelianRow(a, a * est.mean, a * est.stderr, u, a * est.mean - reference.mean))
        log.info("abelian alpha=%g value=%.5g u=%.4g", a, a * est.mean, u)

    T_rows = []
    for T in T_seq:
        if fixed_u is None:
            r = optimize_finite_horizon(x, T, model, h, C, cfg, u_grid, tol, bank)
            est, u = r.value, r.u_star
        else:
            est, u = finite_horizon_cost(x, fixed_u, T, model, h, C, cfg, bank).value, fixed_u
        T_rows.append(AbelianRow(T, est.mean / T, est.stderr / T, u, est.mean / T - reference.mean))
        log.info("abelian T=%g value=%.5g u=%.4g", T, est.mean / T, u)

    grid = np.asarray(log_grid() if u_grid is None else u_grid)
    us = [r.u_star for r in alpha_rows + T_rows]
    diag = {"u_bounded": bool(all(0 <= u <= grid.max() for u in us)),
            "u_range": (min(us), max(us)), "bank_horizon": bank.grid.horizon,
            "n_paths": bank.n_paths}
    report = AbelianReport(alpha_rows, T_rows, reference, u_erg, fixed_u, diag)
    diag["alpha_trend_ok"] = report.alpha_trend_ok
    diag["T_trend_ok"] = report.T_trend_ok
    if not (report.alpha_trend_ok and report.T_trend_ok):
        log.warning("abelian deviations are not monotone across rows")
    return report
