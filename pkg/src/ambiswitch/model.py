"""Problem data model for optimal switching under drift ambiguity.

Regimes are 0-based in the Python API. File formats (CSV/JSON outputs)
label them 1..I.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np


# ---------------------------------------------------------------------------
# Dynamics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GBM:
    """dX = b X dt + sigma X dW."""

    b: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("GBM sigma must be positive")

    def drift(self, x):
        return self.b * np.asarray(x, dtype=float)

    def vol(self, x):
        return self.sigma * np.asarray(x, dtype=float)

    @property
    def positive_state(self) -> bool:
        return True


@dataclass(frozen=True)
class OU:
    """dX = a (mean - X) dt + sigma dW."""

    a: float
    mean: float
    sigma: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("OU requires a > 0")
        if not self.sigma > 0:
            raise ValueError("OU requires sigma > 0")

    def drift(self, x):
        return self.a * (self.mean - np.asarray(x, dtype=float))

    def vol(self, x):
        return np.full(np.shape(x), self.sigma, dtype=float)

    @property
    def stationary_std(self) -> float:
        return self.sigma / np.sqrt(2.0 * self.a)

    @property
    def positive_state(self) -> bool:
        return False


@dataclass(frozen=True)
class AffineDynamics:
    """b(x) = b0 + b1 x, sigma(x) = s0 + s1 x."""

    b0: float
    b1: float
    s0: float
    s1: float = 0.0

    def drift(self, x):
        return self.b0 + self.b1 * np.asarray(x, dtype=float)

    def vol(self, x):
        return self.s0 + self.s1 * np.asarray(x, dtype=float)

    @property
    def positive_state(self) -> bool:
        return self.b0 == 0.0 and self.s0 == 0.0


Dynamics = Union[GBM, OU, AffineDynamics]


# ---------------------------------------------------------------------------
# Rewards and ambiguity premium
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ZeroFn:
    def __call__(self, x):
        return np.zeros(np.shape(x), dtype=float)

    def is_nondecreasing(self) -> bool:
        return True


@dataclass(frozen=True)
class PowerFn:
    """x**p on x >= 0, 0 < p < 1."""

    p: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError("power exponent must lie in (0, 1)")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.power(np.maximum(x, 0.0), self.p)

    def is_nondecreasing(self) -> bool:
        return True


@dataclass(frozen=True)
class AffineFn:
    c0: float
    c1: float = 0.0

    def __call__(self, x):
        return self.c0 + self.c1 * np.asarray(x, dtype=float)

    def is_nondecreasing(self) -> bool:
        return self.c1 >= 0.0


RewardFn = Union[ZeroFn, PowerFn, AffineFn]


@dataclass(frozen=True)
class RewardSpec:
    """Running reward psi and ambiguity premium phi, one entry per regime."""

    psi: tuple
    phi: tuple

    def __post_init__(self):
        if len(self.psi) != len(self.phi):
            raise ValueError("psi and phi must have one entry per regime")
        for f in self.phi:
            if isinstance(f, PowerFn):
                raise ValueError("phi must be zero or affine")


@dataclass(frozen=True)
class AmbiguitySpec:
    """Box priors [-kappa_i, kappa_i] per regime."""

    kappa: tuple

    def __post_init__(self):
        k = np.asarray(self.kappa, dtype=float)
        if np.any(~np.isfinite(k)) or np.any(k < 0):
            raise ValueError("kappa must be finite and non-negative")

    @classmethod
    def none(cls, regimes: int) -> "AmbiguitySpec":
        return cls(tuple([0.0] * regimes))


# ---------------------------------------------------------------------------
# Switching costs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantCosts:
    matrix: tuple  # tuple of tuples, I x I

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("cost matrix must be square")
        if np.any(np.diag(m) != 0.0):
            raise ValueError("cost matrix diagonal must be zero")

    @property
    def regimes(self) -> int:
        return len(self.matrix)

    def cost(self, i: int, j: int, x):
        return np.full(np.shape(x), float(self.matrix[i][j]))

    def is_nonincreasing(self) -> bool:
        return True


@dataclass(frozen=True)
class SlippageCosts:
    """Buy at e^x (1+K) from regime 0, sell at e^x (1-K) from regime 1."""

    K: float

    def __post_init__(self):
        if not 0.0 < self.K < 1.0:
            raise ValueError("slippage K must lie in (0, 1)")

    @property
    def regimes(self) -> int:
        return 2

    def cost(self, i: int, j: int, x):
        x = np.asarray(x, dtype=float)
        if i == j:
            return np.zeros(x.shape)
        if (i, j) == (0, 1):
            return np.exp(x) * (1.0 + self.K)
        if (i, j) == (1, 0):
            return -np.exp(x) * (1.0 - self.K)
        raise IndexError("slippage costs are defined for two regimes only")

    def is_nonincreasing(self) -> bool:
        return False


CostSpec = Union[ConstantCosts, SlippageCosts]


def cost_tensor(costs: CostSpec, x) -> np.ndarray:
    """Costs c[i, j, k] at state values x[k]."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = costs.regimes
    out = np.empty((n, n, x.size))
    for i in range(n):
        for j in range(n):
            out[i, j] = costs.cost(i, j, x)
    return out


# ---------------------------------------------------------------------------
# Horizon and terminal payoff
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Finite:
    T: float

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("finite horizon requires T > 0")


@dataclass(frozen=True)
class Infinite:
    pass


Horizon = Union[Finite, Infinite]


@dataclass(frozen=True)
class ZeroTerminal:
    def value(self, x, i):
        return np.zeros(np.shape(x))

    def grad(self, x, i):
        return np.zeros(np.shape(x))

    def hess(self, x, i):
        return np.zeros(np.shape(x))


@dataclass(frozen=True)
class ConstantTerminal:
    values: tuple

    def value(self, x, i):
        return np.full(np.shape(x), float(self.values[i]))

    def grad(self, x, i):
        return np.zeros(np.shape(x))

    def hess(self, x, i):
        return np.zeros(np.shape(x))


@dataclass(frozen=True)
class BuyLowTerminal:
    """g(x, i) = -1{i = first regime} e^x (1 - K) - C."""

    K: float
    C: float

    def value(self, x, i):
        x = np.asarray(x, dtype=float)
        return (-np.exp(x) * (1.0 - self.K) if i == 0 else np.zeros(x.shape)) - self.C

    def grad(self, x, i):
        x = np.asarray(x, dtype=float)
        return -np.exp(x) * (1.0 - self.K) if i == 0 else np.zeros(x.shape)

    hess = grad


@dataclass(frozen=True)
class GridTerminal:
    """Piecewise-linear terminal payoff tabulated on state values x."""

    x: tuple
    values: tuple  # per regime, same length as x

    def value(self, x, i):
        return np.interp(x, self.x, self.values[i])

    def grad(self, x, i):
        d = np.gradient(np.asarray(self.values[i], float), np.asarray(self.x, float))
        return np.interp(x, self.x, d)

    def hess(self, x, i):
        xs = np.asarray(self.x, float)
        d = np.gradient(np.asarray(self.values[i], float), xs)
        return np.interp(x, xs, np.gradient(d, xs))


TerminalSpec = Union[ZeroTerminal, ConstantTerminal, BuyLowTerminal, GridTerminal]


# ---------------------------------------------------------------------------
# The problem
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SwitchingProblem:
    regime_count: int
    dynamics: tuple
    reward: RewardSpec
    ambiguity: AmbiguitySpec
    costs: CostSpec
    discount: float
    horizon: Horizon
    terminal: TerminalSpec = field(default_factory=ZeroTerminal)
    name: str = ""

    def __post_init__(self):
        n = self.regime_count
        if n < 1:
            raise ValueError("need at least one regime")
        for label, seq in (("dynamics", self.dynamics), ("reward.psi", self.reward.psi),
                           ("kappa", self.ambiguity.kappa)):
            if len(seq) != n:
                raise ValueError(f"{label} must have {n} entries, got {len(seq)}")
        if self.costs.regimes != n:
            raise ValueError("cost specification does not match regime count")
        if self.discount < 0:
            raise ValueError("discount rate must be non-negative")
        if isinstance(self.horizon, Infinite) and not self.discount > 0:
            raise ValueError("infinite horizon requires a positive discount rate")
        for i, (dyn, psi) in enumerate(zip(self.dynamics, self.reward.psi)):
            if isinstance(psi, PowerFn) and not isinstance(dyn, GBM):
                raise ValueError(f"power reward in regime {i} needs GBM dynamics")
        if isinstance(self.terminal, ConstantTerminal) and len(self.terminal.values) != n:
            raise ValueError("constant terminal needs one value per regime")

    @property
    def is_infinite(self) -> bool:
        return isinstance(self.horizon, Infinite)

    @property
    def kappa(self) -> np.ndarray:
        return np.asarray(self.ambiguity.kappa, dtype=float)

    @property
    def positive_state(self) -> bool:
        return all(d.positive_state for d in self.dynamics)

    def psi(self, x, i):
        return self.reward.psi[i](x)

    def phi(self, x, i):
        return self.reward.phi[i](x)

    def cost(self, i, j, x):
        return self.costs.cost(i, j, x)

    def drift(self, x, i):
        return self.dynamics[i].drift(x)

    def vol(self, x, i):
        return self.dynamics[i].vol(x)

    def with_horizon(self, horizon: Horizon) -> "SwitchingProblem":
        return replace(self, horizon=horizon)

    def with_kappa(self, kappa: Sequence[float]) -> "SwitchingProblem":
        return replace(self, ambiguity=AmbiguitySpec(tuple(float(k) for k in kappa)))


def sigma_support(problem: SwitchingProblem, regime: int, x, z):
    """Support function of the box prior and its maximiser.

    Returns ``(value, theta)`` with ``value = kappa_i |phi(x, i) + z|`` and
    ``theta = kappa_i sign(phi + z)``, where sign(0) is taken as +1.
    """
    kappa = float(problem.ambiguity.kappa[regime])
    s = problem.phi(x, regime) + np.asarray(z, dtype=float)
    theta = kappa * np.where(s >= 0.0, 1.0, -1.0)
    value = kappa * np.abs(s)
    if np.ndim(value) == 0:
        return float(value), float(theta)
    return value, theta
