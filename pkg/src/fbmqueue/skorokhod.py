"""One-sided reflection map, regulator, and the controlled workload process."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError
from .fgn import SamplePath, check_hurst

#: Relative slack for the discrete complementarity check.
COMPL_RTOL = 1e-9


@dataclass(frozen=True)
class PositiveFunction:
    """g(u) = c0 + c1 * u**beta with c0, c1 >= 0 and beta > 0.

    Covers constants (c1 = 0), affine maps (beta = 1) and pure powers (c0 = 0).
    """

    c0: float = 1.0
    c1: float = 0.0
    beta: float = 1.0

    def __post_init__(self):
        if self.c0 < 0 or self.c1 < 0 or self.beta <= 0:
            raise DomainError("PositiveFunction needs c0 >= 0, c1 >= 0, beta > 0")
        if self.c0 == 0 and self.c1 == 0:
            raise DomainError("PositiveFunction must not vanish identically")

    @classmethod
    def constant(cls, c: float = 1.0) -> "PositiveFunction":
        return cls(c0=c, c1=0.0)

    @classmethod
    def power(cls, a: float = 1.0, beta: float = 1.0) -> "PositiveFunction":
        return cls(c0=0.0, c1=a, beta=beta)

    @classmethod
    def affine(cls, c0: float, c1: float) -> "PositiveFunction":
        return cls(c0=c0, c1=c1, beta=1.0)

    @property
    def is_constant(self) -> bool:
        return self.c1 == 0

    def __call__(self, u):
        return self.c0 + self.c1 * np.asarray(u, dtype=float) ** self.beta

    def leading_power_at_zero(self) -> tuple[float, float]:
        """(coefficient, exponent) of the leading term as u -> 0+."""
        return (self.c0, 0.0) if self.c0 > 0 else (self.c1, self.beta)

    def to_dict(self) -> dict:
        return {"c0": self.c0, "c1": self.c1, "beta": self.beta}


@dataclass(frozen=True)
class ModelSpec:
    """X = Gamma(x - b(u) e + sigma(u) W_H) with regulator penalty p."""

    H: float
    sigma: PositiveFunction = field(default_factory=PositiveFunction.constant)
    drift_b: PositiveFunction = field(default_factory=PositiveFunction.power)
    x: float = 0.0
    p: float = 0.0

    def __post_init__(self):
        check_hurst(self.H)
        if self.x < 0:
            raise DomainError(f"initial workload x must be >= 0, got {self.x}")
        if self.p < 0:
            raise DomainError(f"regulator penalty p must be >= 0, got {self.p}")

    def with_(self, **changes) -> "ModelSpec":
        return replace(self, **changes)

    @property
    def is_simple(self) -> bool:
        """sigma is constant and b(u) = u."""
        b = self.drift_b
        return self.sigma.is_constant and b.c0 == 0 and b.c1 == 1 and b.beta == 1


@dataclass(frozen=True, eq=False)
class WorkloadPath:
    X: SamplePath
    L: SamplePath
    u: float


def _running_regulator(f: np.ndarray) -> np.ndarray:
    return np.maximum(np.maximum.accumulate(-f, axis=-1), 0.0)


def reflect_array(f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Discrete reflection along the last axis; returns (Gamma(f), regulator)."""
    f = np.asarray(f, dtype=float)
    reg = _running_regulator(f)
    return f + reg, reg


def reflect(f: SamplePath) -> tuple[SamplePath, SamplePath]:
    """Gamma(f)_k = f_k + max(0, max_{j<=k} -f_j) and the regulator Gamma(f) - f."""
    gamma, reg = reflect_array(f.values)
    return SamplePath(f.grid, gamma), SamplePath(f.grid, reg)


def net_input(model: ModelSpec, u: float, W: np.ndarray, times: np.ndarray) -> np.ndarray:
    return model.x - float(model.drift_b(u)) * times + float(model.sigma(u)) * W


def workload(model: ModelSpec, u: float, W: SamplePath) -> WorkloadPath:
    if u < 0:
        raise DomainError(f"control u must be >= 0, got {u}")
    if W.values[0] != 0:
        raise DomainError("driving path must start at 0")
    X, L = reflect(SamplePath(W.grid, net_input(model, u, W.values, W.times)))
    return WorkloadPath(X, L, float(u))


def time_change_rate(model: ModelSpec, u: float) -> float:
    """f(u) = b(u) / sigma(u)^(1/H): the drift of the time-changed constant-volatility model."""
    if u <= 0:
        raise DomainError(f"time change needs u > 0, got {u}")
    return float(model.drift_b(u) / model.sigma(u) ** (1.0 / model.H))


def rate_limit_at_zero(model: ModelSpec) -> float:
    """lim_{u->0+} f(u), computed from the leading terms of b and sigma."""
    bc, be = model.drift_b.leading_power_at_zero()
    sc, se = model.sigma.leading_power_at_zero()
    expo = be - se / model.H
    if expo > 0:
        return 0.0
    if expo < 0:
        return float("inf")
    return bc / sc ** (1.0 / model.H)


def complementarity_violations(path: WorkloadPath, tol: float | None = None) -> np.ndarray:
    """Steps where L increases although X stayed away from zero at both ends."""
    X, L = path.X.values, path.L.values
    if tol is None:
        scale = max(1.0, float(np.max(np.abs(X))), float(np.max(np.abs(L))))
        tol = COMPL_RTOL * scale
    grew = np.diff(L) > 0
    low = np.minimum(X[:-1], X[1:]) < tol
    return np.flatnonzero(grew & ~low) + 1
