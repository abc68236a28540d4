"""Uniform 1-D grids, optionally in log-state coordinates."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import GBM, OU, SwitchingProblem


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid over ``[x_min, x_max]`` in the solver coordinate.

    With ``coord="log"`` the nodes are y = log(x) and the state values are
    ``exp(nodes)``; this is what keeps GBM problems whose thresholds span
    several decades resolvable on a few hundred nodes.
    """

    x_min: float
    x_max: float
    nx: int = 801
    coord: str = "x"
    nt: Optional[int] = None
    T: Optional[float] = None

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError("grid requires x_min < x_max")
        if self.nx < 3:
            raise ValueError("grid requires at least 3 nodes")
        if self.coord not in ("x", "log"):
            raise ValueError("coord must be 'x' or 'log'")
        if self.nt is not None and self.nt < 1:
            raise ValueError("nt must be positive")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def states(self) -> np.ndarray:
        n = self.nodes
        return np.exp(n) if self.coord == "log" else n

    def to_coord(self, x):
        x = np.asarray(x, dtype=float)
        return np.log(x) if self.coord == "log" else x

    def to_state(self, y):
        y = np.asarray(y, dtype=float)
        return np.exp(y) if self.coord == "log" else y

    def times(self) -> np.ndarray:
        if self.nt is None or self.T is None:
            raise ValueError("grid has no time axis")
        return np.linspace(0.0, self.T, self.nt + 1)

    def refined(self) -> "Grid1D":
        """Same domain with the spacing halved."""
        return Grid1D(self.x_min, self.x_max, 2 * self.nx - 1, self.coord, self.nt, self.T)


def coefficients(problem: SwitchingProblem, grid: Grid1D, regime: int):
    """Drift and (signed) volatility of the state in the grid coordinate."""
    x = grid.states
    b = problem.drift(x, regime)
    s = problem.vol(x, regime)
    if grid.coord == "log":
        # Ito: d log X = (b/x - s^2 / (2 x^2)) dt + (s/x) dW
        return b / x - 0.5 * (s / x) ** 2, s / x
    return b, s


def default_grid(problem: SwitchingProblem, nx: int = 801, x0: float = 1.0,
                 nt: Optional[int] = None) -> Grid1D:
    """Default solver domain.

    OU: long-run mean +/- 6 stationary standard deviations (widest regime).
    GBM: log grid centred on ``x0`` spanning 6 sigma sqrt(T) with T the
    horizon, or 1/rho for infinite horizons.
    """
    dyn = problem.dynamics
    T = None if problem.is_infinite else problem.horizon.T
    if all(isinstance(d, OU) for d in dyn):
        lo = min(d.mean - 6.0 * d.stationary_std for d in dyn)
        hi = max(d.mean + 6.0 * d.stationary_std for d in dyn)
        return Grid1D(lo, hi, nx, "x", nt, T)
    if all(isinstance(d, GBM) for d in dyn):
        horizon = T if T is not None else 1.0 / problem.discount
        half = 6.0 * max(d.sigma for d in dyn) * np.sqrt(horizon)
        c = np.log(x0)
        return Grid1D(c - half, c + half, nx, "log", nt, T)
    return Grid1D(-6.0, 6.0, nx, "x", nt, T)
