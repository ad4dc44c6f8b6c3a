"""Cost descriptors and the ergodic, discounted and finite-horizon cost estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import DomainError, PreconditionError, UnsupportedModelError
from .fgn import TimeGrid
from .montecarlo import EstimateWithError, EstimatorConfig, PathBank, path_bank
from .skorokhod import ModelSpec, reflect_array, time_change_rate
from .stationary import estimate_G

#: Discount-integral truncation: the neglected weight e^{-alpha T} equals this.
DISCOUNT_TAIL_EPS = 1e-4

_KINDS = ("constant", "power", "polynomial", "affine_power", "shifted_power")


@dataclass(frozen=True)
class CostFunctionSpec:
    """Closed-form cost function on [0, inf).

    kinds and parameters:

    * ``constant``      -- c
    * ``power``         -- a * max(0, x - shift)**gamma + c   (shift > 0: flat on [0, shift])
    * ``polynomial``    -- sum_i coeffs[i] * x**i, coeffs >= 0
    * ``affine_power``  -- c + b * x + a * x**gamma
    * ``shifted_power`` -- a * |x - shift|**gamma + c          (convex, not monotone)
    """

    kind: str = "constant"
    c: float = 0.0
    a: float = 0.0
    b: float = 0.0
    gamma: float = 1.0
    shift: float = 0.0
    coeffs: tuple = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown cost kind {self.kind!r}; expected one of {_KINDS}")
        object.__setattr__(self, "coeffs", tuple(float(v) for v in self.coeffs))
        if min(self.c, self.a, self.b) < 0 or any(v < 0 for v in self.coeffs):
            raise DomainError("cost coefficients must be non-negative")
        if self.gamma <= 0:
            raise DomainError("cost exponent gamma must be positive")
        if self.kind == "shifted_power" and self.gamma < 1:
            raise DomainError("shifted_power needs gamma >= 1")
        if self.shift < 0 and self.kind == "power":
            raise DomainError("power cost shift must be >= 0")

    # constructors -----------------------------------------------------------

    @classmethod
    def zero(cls) -> "CostFunctionSpec":
        return cls("constant", c=0.0)

    @classmethod
    def constant(cls, c: float) -> "CostFunctionSpec":
        return cls("constant", c=c)

    @classmethod
    def power(cls, a: float = 1.0, gamma: float = 1.0, c: float = 0.0, shift: float = 0.0):
        return cls("power", a=a, gamma=gamma, c=c, shift=shift)

    @classmethod
    def polynomial(cls, *coeffs: float) -> "CostFunctionSpec":
        return cls("polynomial", coeffs=tuple(coeffs))

    @classmethod
    def affine_power(cls, c: float, b: float, a: float, gamma: float) -> "CostFunctionSpec":
        return cls("affine_power", c=c, b=b, a=a, gamma=gamma)

    @classmethod
    def shifted_power(cls, a: float, shift: float, gamma: float = 2.0, c: float = 0.0):
        return cls("shifted_power", a=a, shift=shift, gamma=gamma, c=c)

    @classmethod
    def from_dict(cls, data: dict) -> "CostFunctionSpec":
        data = dict(data)
        if "coeffs" in data:
            data["coeffs"] = tuple(data["coeffs"])
        return cls(**data)

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        defaults = CostFunctionSpec()
        for name in ("c", "a", "b", "gamma", "shift"):
            if getattr(self, name) != getattr(defaults, name):
                out[name] = getattr(self, name)
        if self.coeffs:
            out["coeffs"] = list(self.coeffs)
        return out

    # evaluation -------------------------------------------------------------

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k = self.kind
        if k == "constant":
            out = np.full_like(x, self.c)
        elif k == "power":
            base = np.maximum(x - self.shift, 0.0) if self.shift else x
            out = self.c + self.a * base**self.gamma if self.a else np.full_like(x, self.c)
        elif k == "polynomial":
            out = np.zeros_like(x)
            for coef in reversed(self.coeffs):
                out = out * x + coef
        elif k == "affine_power":
            out = self.c + self.b * x + self.a * x**self.gamma
        else:
            out = self.c + self.a * np.abs(x - self.shift) ** self.gamma
        return float(out) if out.ndim == 0 else out

    # structure --------------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        if self.kind == "polynomial":
            return not any(self.coeffs)
        if self.kind == "affine_power":
            return self.c == 0 and self.b == 0 and self.a == 0
        return self.c == 0 and self.a == 0

    @property
    def is_convex(self) -> bool:
        if self.kind in ("constant", "polynomial", "shifted_power"):
            return True
        return self.a == 0 or self.gamma >= 1

    @property
    def is_strictly_convex(self) -> bool:
        k = self.kind
        if k == "constant":
            return False
        if k == "polynomial":
            return any(c > 0 for c in self.coeffs[2:])
        if k == "power":
            return self.a > 0 and self.gamma > 1 and self.shift == 0
        return self.a > 0 and self.gamma > 1

    @property
    def is_nondecreasing(self) -> bool:
        return self.kind != "shifted_power" or self.shift <= 0 or self.a == 0

    @property
    def is_unbounded(self) -> bool:
        if self.kind == "constant":
            return False
        if self.kind == "polynomial":
            return any(c > 0 for c in self.coeffs[1:])
        if self.kind == "affine_power":
            return self.b > 0 or self.a > 0
        return self.a > 0

    def growth_bound(self) -> tuple[float, float]:
        """(K, gamma) with 0 <= C(x) <= K (1 + x^gamma) on [0, inf)."""
        k = self.kind
        if k == "constant":
            return max(self.c, 1e-300), 1.0
        if k == "polynomial":
            deg = max((i for i, c in enumerate(self.coeffs) if c > 0), default=1)
            return max(sum(self.coeffs), 1e-300), float(max(deg, 1))
        if k == "power":
            return max(self.a, self.c, 1e-300), self.gamma
        if k == "affine_power":
            return max(self.c + self.b + self.a, 1e-300), max(1.0, self.gamma)
        g = self.gamma  # |x-s|^g <= 2^(g-1) (x^g + s^g)
        K = 2 ** (g - 1) * self.a
        return max(K, self.c + K * self.shift**g, 1e-300), g


def holding_cost_assumptions(C: CostFunctionSpec) -> list[str]:
    """Violated holding-cost assumptions (non-negative, non-decreasing, polynomial growth)."""
    bad = []
    if not C.is_nondecreasing:
        bad.append("C must be non-decreasing")
    if C(0.0) < 0:
        bad.append("C must be non-negative")
    return bad


def control_cost_assumptions(h: CostFunctionSpec) -> list[str]:
    bad = []
    if not h.is_nondecreasing:
        bad.append("h must be non-decreasing")
    if not h.is_unbounded:
        bad.append("h(u) must tend to infinity")
    return bad


def _require_holding(C: CostFunctionSpec):
    bad = holding_cost_assumptions(C)
    if bad:
        raise PreconditionError("; ".join(bad))


# ---------------------------------------------------------------------------
# Estimates
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CostEstimate:
    value: EstimateWithError
    components: dict
    diagnostics: dict = field(default_factory=dict)
    per_path: np.ndarray | None = None

    def __post_init__(self):
        total = sum(c.mean for c in self.components.values())
        if not math.isclose(total, self.value.mean, rel_tol=1e-9, abs_tol=1e-12):
            raise DomainError("cost components do not add up to the total")

    @property
    def mean(self) -> float:
        return self.value.mean

    @property
    def stderr(self) -> float:
        return self.value.stderr


@dataclass(frozen=True, eq=False)
class _PathSums:
    holding: np.ndarray     # sum_k w_k C(X_k)
    reg_weighted: np.ndarray  # sum_k w_k L_k
    reg_final: np.ndarray   # L at the last node


def _path_sums(bank: PathBank, model: ModelSpec, x: float, u: float, C: CostFunctionSpec,
               weights: np.ndarray, rows_per_chunk: int = 32) -> _PathSums:
    times = bank.grid.times
    drift = float(model.drift_b(u)) * times
    vol = float(model.sigma(u))
    n = bank.n_paths
    hold = np.zeros(n)
    regw = np.zeros(n)
    regT = np.zeros(n)
    skip_c = C.is_zero
    for lo in range(0, n, rows_per_chunk):
        hi = min(n, lo + rows_per_chunk)
        f = vol * bank.W[lo:hi]
        f += x
        f -= drift
        X, L = reflect_array(f)
        if not skip_c:
            hold[lo:hi] = C(X[:, :-1]) @ weights
        regw[lo:hi] = L[:, :-1] @ weights
        regT[lo:hi] = L[:, -1]
    return _PathSums(hold, regw, regT)


def _bank_for(model: ModelSpec, horizon: float, cfg: EstimatorConfig, bank: PathBank | None):
    if bank is None:
        return path_bank(model.H, TimeGrid.covering(horizon, cfg.dt), cfg)
    if bank.H != model.H:
        raise DomainError("path bank was simulated with a different Hurst index")
    needed = TimeGrid.covering(horizon, bank.grid.dt).n_steps
    if needed > bank.grid.n_steps:
        raise DomainError(f"path bank covers {bank.grid.horizon}, need {horizon}")
    return bank.prefix(needed)


def _check_u(u, strict):
    if (strict and not u > 0) or u < 0:
        raise DomainError(f"control must be {'>' if strict else '>='} 0, got {u}")
    return float(u)


def ergodic_cost_reduced(u: float, model: ModelSpec, h: CostFunctionSpec, C: CostFunctionSpec,
                         cfg: EstimatorConfig) -> CostEstimate:
    """I(u) = h(u) + p b(u) + G(f(u)); only G is estimated by simulation.

    The initial workload does not enter.
    """
    u = _check_u(u, strict=True)
    _require_holding(C)
    fp = cfg.fingerprint()
    n = cfg.zu_samples
    control = EstimateWithError.exact(h(u), n, fp)
    regulator = EstimateWithError.exact(model.p * float(model.drift_b(u)), n, fp)
    holding = estimate_G(time_change_rate(model, u), C, model.H, cfg)
    value = EstimateWithError(control.mean + regulator.mean + holding.mean, holding.stderr, holding.n, fp)
    return CostEstimate(value, {"control": control, "holding": holding, "regulator": regulator},
                        {"rate": time_change_rate(model, u)})


def ergodic_horizon_floor(model: ModelSpec, u: float) -> float:
    """Smallest horizon accepted by :func:`ergodic_cost_direct`: 10 natural time units."""
    return 10.0 * time_change_rate(model, u) ** (-1.0 / (1.0 - model.H))


def ergodic_cost_direct(u: float, model: ModelSpec, h: CostFunctionSpec, C: CostFunctionSpec,
                        cfg: EstimatorConfig, bank: PathBank | None = None) -> CostEstimate:
    """h(u) + (1/T) [sum_k C(X_k) dt + p L(T)], averaged over simulated paths.

    ``diagnostics['half_horizon']`` repeats the estimate on [0, T/2] of the
    same paths; a large difference means T is too short for the limit.
    """
    u = _check_u(u, strict=True)
    _require_holding(C)
    T = cfg.horizon
    floor = ergodic_horizon_floor(model, u)
    if T < floor:
        raise PreconditionError(f"horizon {T} is below 10 natural time units ({floor:.4g})")
    bank = _bank_for(model, T, cfg, bank)
    fp = cfg.fingerprint()

    def average(b):
        T_eff = b.grid.horizon
        sums = _path_sums(b, model, model.x, u, C, np.full(b.grid.n_steps, b.grid.dt))
        return sums.holding / T_eff, model.p * sums.reg_final / T_eff

    hold, reg = average(bank)
    half_hold, half_reg = average(bank.prefix(max(1, bank.grid.n_steps // 2)))
    hu = float(h(u))
    per_path = hu + hold + reg
    value = EstimateWithError.from_samples(per_path, fp)
    comps = {"control": EstimateWithError.exact(hu, bank.n_paths, fp),
             "holding": EstimateWithError.from_samples(hold, fp),
             "regulator": EstimateWithError.from_samples(reg, fp)}
    diag = {"horizon": bank.grid.horizon,
            "half_horizon": float(np.mean(hu + half_hold + half_reg))}
    return CostEstimate(value, comps, diag, per_path)


def regulator_rate(u: float, model: ModelSpec, cfg: EstimatorConfig,
                   bank: PathBank | None = None) -> EstimateWithError:
    """E[L(T)] / T; tends to b(u)."""
    u = _check_u(u, strict=True)
    bank = _bank_for(model, cfg.horizon, cfg, bank)
    sums = _path_sums(bank, model, model.x, u, CostFunctionSpec.zero(),
                      np.zeros(bank.grid.n_steps))
    return EstimateWithError.from_samples(sums.reg_final / bank.grid.horizon, cfg.fingerprint())


def discount_horizon(alpha: float, eps: float = DISCOUNT_TAIL_EPS) -> float:
    return -math.log(eps) / alpha


def _discount_tail_bound(alpha, T, x, u, model, C, bank) -> float:
    """Upper bound on the neglected part of the discounted integral beyond T.

    Uses X(t) <= 2 (x + sup_{s<=t} |sigma W(s)|), C <= K (1 + x^g) and
    E sup_{s<=t}|W|^g = t^(gH) E sup_{s<=1}|W|^g, the last moment taken from
    the simulated paths by self-similarity.
    """
    K, g = C.growth_bound()
    H = model.H
    sig = float(model.sigma(u))
    Tb = bank.grid.horizon
    sup_unit = np.max(np.abs(bank.W), axis=1) / Tb**H
    m_g = float(np.mean(sup_unit ** g))
    m_1 = float(np.mean(sup_unit))
    cg = max(1.0, 2 ** (g - 1))

    def integrand(t):
        hold = 0.0 if C.is_zero else K * (1 + 2**g * cg * (x**g + sig**g * m_g * t ** (g * H)))
        reg = alpha * model.p * (float(model.drift_b(u)) * t + 2 * x + 2 * sig * m_1 * t**H)
        return math.exp(-alpha * t) * (hold + reg)

    val, _ = integrate.quad(integrand, T, np.inf, limit=200)
    return float(val)


def discounted_cost(x: float, u: float, alpha: float, model: ModelSpec, h: CostFunctionSpec,
                    C: CostFunctionSpec, cfg: EstimatorConfig,
                    bank: PathBank | None = None) -> CostEstimate:
    """J_alpha = h(u)/alpha + E int e^{-alpha t} [C(X) + alpha p L] dt, truncated at T_alpha.

    The regulator enters through alpha * int e^{-alpha t} L dt rather than a
    Stieltjes sum against dL. Requires constant volatility.
    """
    if not alpha > 0:
        raise DomainError(f"discount rate must be positive, got {alpha}")
    if x < 0:
        raise DomainError("initial workload must be >= 0")
    u = _check_u(u, strict=False)
    if not model.sigma.is_constant:
        raise UnsupportedModelError("the discounted problem is only available for constant sigma")
    _require_holding(C)
    T = discount_horizon(alpha)
    bank = _bank_for(model, T, cfg, bank)
    times = bank.grid.times[:-1]
    w = bank.grid.dt * np.exp(-alpha * times)
    sums = _path_sums(bank, model, x, u, C, w)
    fp = cfg.fingerprint()
    hu = float(h(u)) / alpha
    reg = alpha * model.p * sums.reg_weighted
    per_path = hu + sums.holding + reg
    comps = {"control": EstimateWithError.exact(hu, bank.n_paths, fp),
             "holding": EstimateWithError.from_samples(sums.holding, fp),
             "regulator": EstimateWithError.from_samples(reg, fp)}
    diag = {"truncation": bank.grid.horizon,
            "tail_bound": _discount_tail_bound(alpha, bank.grid.horizon, x, u, model, C, bank)}
    return CostEstimate(EstimateWithError.from_samples(per_path, fp), comps, diag, per_path)


def finite_horizon_cost(x: float, u: float, T: float, model: ModelSpec, h: CostFunctionSpec,
                        C: CostFunctionSpec, cfg: EstimatorConfig,
                        bank: PathBank | None = None) -> CostEstimate:
    """I(u, x, T) = h(u) T + p E L(T) + E int_0^T C(X) dt (not divided by T)."""
    if not T > 0:
        raise DomainError(f"horizon must be positive, got {T}")
    if x < 0:
        raise DomainError("initial workload must be >= 0")
    u = _check_u(u, strict=False)
    _require_holding(C)
    bank = _bank_for(model, T, cfg, bank)
    sums = _path_sums(bank, model, x, u, C, np.full(bank.grid.n_steps, bank.grid.dt))
    fp = cfg.fingerprint()
    hu = float(h(u)) * T
    reg = model.p * sums.reg_final
    per_path = hu + sums.holding + reg
    comps = {"control": EstimateWithError.exact(hu, bank.n_paths, fp),
             "holding": EstimateWithError.from_samples(sums.holding, fp),
             "regulator": EstimateWithError.from_samples(reg, fp)}
    return CostEstimate(EstimateWithError.from_samples(per_path, fp), comps,
                        {"grid_horizon": bank.grid.horizon}, per_path)
