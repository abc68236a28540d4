"""Finite-difference solver for the coupled switching variational inequalities.

For regime i the stationary system reads

    min{ rho u - L_i u - psi_i + kappa_i |phi_i + sigma_i u_x|,
         u - max_{j != i} (u_j - c_ij) } = 0

and the finite-horizon one adds -u_t with u(T) = g. Since
kappa |phi + sigma u_x| = max over theta in {-kappa, +kappa} of
theta (phi + sigma u_x), each regime is a max over two linear operators
with drift b - theta sigma and source psi - theta phi.

The regimes are coupled only through the obstacle. Picard iteration starts
from the obstacle-free solve and rebuilds every obstacle from the previous
iterate, giving a nondecreasing sequence. Each single-obstacle problem is
solved either by policy iteration (default) or by projected SOR.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from .grid import Grid1D, coefficients, default_grid
from .model import PowerFn, SwitchingProblem, cost_tensor

log = logging.getLogger(__name__)


class NonConvergence(RuntimeError):
    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class SolverConfig:
    """Solver controls.

    ``tol_picard`` is applied to the sup-norm change between Picard iterates
    relative to ``max(1, sup |v|)``. ``method`` picks the inner obstacle
    solver: ``"howard"`` (policy iteration with tridiagonal solves) or
    ``"psor"``.
    """

    tol_picard: float = 1e-8
    tol_psor: float = 1e-12
    max_picard: int = 200
    max_psor: int = 200000
    omega: float = 1.5
    method: str = "howard"
    max_howard: int = 200
    nt: int = 200
    keep_iterates: bool = False

    def __post_init__(self):
        if not (self.tol_picard > 0 and self.tol_psor > 0):
            raise ValueError("tolerances must be positive")
        if not 1.0 <= self.omega < 2.0:
            raise ValueError("omega must lie in [1, 2)")
        if self.max_picard < 1 or self.max_psor < 1 or self.max_howard < 1:
            raise ValueError("iteration caps must be positive")
        if self.method not in ("howard", "psor"):
            raise ValueError("method must be 'howard' or 'psor'")
        if self.nt < 1:
            raise ValueError("nt must be positive")


# ---------------------------------------------------------------------------
# Spatial operators
# ---------------------------------------------------------------------------

@dataclass
class _Tridiag:
    lower: np.ndarray  # coefficient on u[k-1]
    diag: np.ndarray
    upper: np.ndarray  # coefficient on u[k+1]
    source: np.ndarray

    def apply(self, u: np.ndarray) -> np.ndarray:
        out = self.diag * u
        out[1:] += self.lower[1:] * u[:-1]
        out[:-1] += self.upper[:-1] * u[1:]
        return out


def _thetas(kappa: float):
    return (0.0,) if kappa == 0.0 else (-kappa, kappa)


def boundary_weight(problem: SwitchingProblem, grid: Grid1D, regime: int, y: np.ndarray) -> np.ndarray:
    """Growth profile w used for the boundary extrapolation of u / w.

    For a power reward the value grows like x^p, so extrapolating u / x^p
    linearly keeps the truncation error local; otherwise w = 1, which is the
    plain zero-second-derivative condition.
    """
    psi = problem.reward.psi[regime]
    if isinstance(psi, PowerFn) and problem.positive_state:
        return np.power(grid.to_state(y), psi.p)
    return np.ones_like(y)


def build_operators(problem: SwitchingProblem, grid: Grid1D, regime: int) -> list:
    """One tridiagonal operator rho - L_theta per extreme prior theta.

    Central differences where the diffusion dominates (coefficients stay
    nonnegative), one-sided upwind differences elsewhere.
    """
    h = grid.dx
    y = grid.nodes
    x = grid.states
    mu0, s = coefficients(problem, grid, regime)
    D = 0.5 * s * s
    psi = problem.psi(x, regime)
    phi = problem.phi(x, regime)
    rho = problem.discount
    w = boundary_weight(problem, grid, regime, np.array([y[0] - h, y[0], y[1], y[-2], y[-1], y[-1] + h]))
    a_left, b_left = 2.0 * w[0] / w[1], w[0] / w[2]
    a_right, b_right = 2.0 * w[5] / w[4], w[5] / w[3]

    ops = []
    for theta in _thetas(float(problem.kappa[regime])):
        mu = mu0 - theta * s
        central = D >= 0.5 * np.abs(mu) * h
        lo = np.where(central, D / h**2 - mu / (2 * h), D / h**2 + np.maximum(-mu, 0.0) / h)
        up = np.where(central, D / h**2 + mu / (2 * h), D / h**2 + np.maximum(mu, 0.0) / h)
        diag = rho + lo + up
        lower = -lo.copy()
        upper = -up.copy()
        # ghost nodes from linear extrapolation of u / w
        diag[0] -= lo[0] * a_left
        upper[0] += lo[0] * b_left
        diag[-1] -= up[-1] * a_right
        lower[-1] += up[-1] * b_right
        lower[0] = 0.0
        upper[-1] = 0.0
        ops.append(_Tridiag(lower, diag, upper, psi - theta * phi))
    return ops


# ---------------------------------------------------------------------------
# Single-obstacle solvers
# ---------------------------------------------------------------------------

def _banded(lower, diag, upper):
    n = diag.size
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return ab


def _residuals(ops, u, shift, extra):
    return np.stack([op.apply(u) + shift * u - op.source - extra for op in ops])


def _howard(ops, shift, extra, obstacle, u0, max_iter):
    """Policy iteration for min(max_theta(A_theta u - f_theta), u - obstacle) = 0.

    The policy is the pair (theta, binding) per node; near-ties (relative to
    the size of the terms in each row) keep the previous choice so the
    iteration cannot cycle on round-off.
    """
    n = u0.size
    idx = np.arange(n)
    u = u0.copy()
    pol = np.zeros(n, dtype=int)
    bind = np.zeros(n, dtype=bool)
    width = np.max([np.abs(op.lower) + np.abs(op.diag) + np.abs(op.upper) for op in ops], axis=0) + abs(shift)
    src = np.max([np.abs(op.source) for op in ops], axis=0)
    for it in range(max_iter):
        res = _residuals(ops, u, shift, extra)
        ua = np.abs(u)
        near = np.maximum(ua, np.maximum(np.roll(ua, 1), np.roll(ua, -1)))
        tol = 1e-12 * (width * near + src + np.abs(extra))
        if len(ops) > 1:
            best = np.argmax(res, axis=0)
            tie = np.abs(res[0] - res[1]) <= tol
            new_pol = np.where(tie, pol, best)
        else:
            new_pol = pol
        a = res[new_pol, idx]
        if obstacle is not None:
            c = u - obstacle
            tol_b = tol + 1e-12 * np.abs(obstacle)
            new_bind = np.where(c < a - tol_b, True, np.where(c > a + tol_b, False, bind))
        else:
            new_bind = bind
        if it > 0 and np.array_equal(new_pol, pol) and np.array_equal(new_bind, bind):
            return u, bind, pol, it
        pol, bind = new_pol, new_bind
        lower = np.choose(pol, [op.lower for op in ops])
        diag = np.choose(pol, [op.diag for op in ops]) + shift
        upper = np.choose(pol, [op.upper for op in ops])
        rhs = np.choose(pol, [op.source for op in ops]) + extra
        if obstacle is not None and bind.any():
            lower = np.where(bind, 0.0, lower)
            upper = np.where(bind, 0.0, upper)
            diag = np.where(bind, 1.0, diag)
            rhs = np.where(bind, obstacle, rhs)
        u_new = solve_banded((1, 1), _banded(lower, diag, upper), rhs)
        if np.max(np.abs(u_new - u)) <= 1e-15 * max(1.0, np.max(np.abs(u_new))) and it > 0:
            u = u_new
            return u, bind, pol, it
        u = u_new
    raise NonConvergence("policy iteration did not settle", float("nan"), max_iter)


def _psor(ops, shift, extra, obstacle, u0, omega, tol, max_iter):
    """Projected SOR on the max-over-theta rows.

    At node k each theta-row is increasing in u_k, so the root of their
    maximum is the smallest of the per-theta roots; the relaxed update is
    then projected onto the obstacle.
    """
    u = u0.copy()
    n = u.size
    lowers = [op.lower for op in ops]
    diags = [op.diag + shift for op in ops]
    uppers = [op.upper for op in ops]
    rhss = [op.source + extra for op in ops]
    scale = max(1.0, float(np.max(np.abs(u0))))
    for it in range(max_iter):
        change = 0.0
        for k in range(n):
            left = u[k - 1] if k > 0 else 0.0
            right = u[k + 1] if k < n - 1 else 0.0
            root = min((rhss[m][k] - lowers[m][k] * left - uppers[m][k] * right) / diags[m][k]
                       for m in range(len(ops)))
            new = u[k] + omega * (root - u[k])
            if obstacle is not None and new < obstacle[k]:
                new = obstacle[k]
            change = max(change, abs(new - u[k]))
            u[k] = new
        scale = max(scale, float(np.max(np.abs(u))))
        if change <= tol * scale:
            break
    else:
        raise NonConvergence("projected SOR hit its iteration cap", change, max_iter)
    res = _residuals(ops, u, shift, extra)
    pol = np.argmax(res, axis=0)
    bind = np.zeros(n, dtype=bool) if obstacle is None else (u - obstacle) <= res.max(axis=0)
    return u, bind, pol, it + 1


def _solve_obstacle(ops, shift, extra, obstacle, u0, config: SolverConfig):
    if config.method == "psor":
        return _psor(ops, shift, extra, obstacle, u0, config.omega, config.tol_psor, config.max_psor)
    return _howard(ops, shift, extra, obstacle, u0, config.max_howard)


def _obstacles(v: np.ndarray, costs: np.ndarray):
    """max_{j != i}(v_j - c_ij) and its argmax (lowest index on ties)."""
    I = v.shape[0]
    obs = np.full(v.shape, -np.inf)
    tgt = np.full(v.shape, -1, dtype=int)
    for i in range(I):
        for j in range(I):
            if j == i:
                continue
            cand = v[j] - costs[i, j]
            better = cand > obs[i]
            obs[i] = np.where(better, cand, obs[i])
            tgt[i] = np.where(better, j, tgt[i])
    return obs, tgt


# ---------------------------------------------------------------------------
# Value surface
# ---------------------------------------------------------------------------

@dataclass
class ValueSurface:
    """Discrete value function on a grid.

    ``values``, ``switch_mask`` and ``targets`` have shape
    ``(n_times, regimes, nx)``; a stationary solve has one time slice.
    ``targets`` holds the argmax regime of the obstacle (-1 where the
    obstacle is not binding).
    """

    grid: Grid1D
    times: np.ndarray
    values: np.ndarray
    switch_mask: np.ndarray
    targets: np.ndarray
    picard_iterations: int
    residual: float
    stationary: bool
    iterates: Optional[list] = None
    obstacle: Optional[np.ndarray] = None
    pde_residual: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def x(self) -> np.ndarray:
        return self.grid.states

    @property
    def regime_count(self) -> int:
        return self.values.shape[1]

    def time_index(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))

    def value(self, x, regime: int, t_index: int = 0):
        y = self.grid.to_coord(x)
        return np.interp(y, self.grid.nodes, self.values[t_index, regime])

    def gradient(self, x, regime: int, t_index: int = 0):
        """d v / d(state), interpolated from central node differences."""
        g = np.gradient(self.values[t_index, regime], self.grid.nodes)
        y = self.grid.to_coord(x)
        gy = np.interp(y, self.grid.nodes, g)
        if self.grid.coord == "log":
            return gy / np.asarray(x, dtype=float)
        return gy


def _pde_residual(ops_all, v, shift=0.0, extra=None):
    out = np.empty_like(v)
    for i, ops in enumerate(ops_all):
        e = 0.0 if extra is None else extra[i]
        out[i] = _residuals(ops, v[i], shift, e).max(axis=0)
    return out


def _check_problem(problem: SwitchingProblem, infinite: bool):
    if problem.is_infinite != infinite:
        kind = "infinite" if infinite else "finite"
        raise ValueError(f"problem horizon is not {kind}")


def solve_infinite_horizon(problem: SwitchingProblem, grid: Optional[Grid1D] = None,
                           config: Optional[SolverConfig] = None) -> ValueSurface:
    """Stationary Picard obstacle iteration."""
    _check_problem(problem, infinite=True)
    config = config or SolverConfig()
    grid = grid or default_grid(problem)
    I = problem.regime_count
    ops_all = [build_operators(problem, grid, i) for i in range(I)]
    costs = cost_tensor(problem.costs, grid.states)
    nx = grid.nx

    v = np.empty((I, nx))
    bind = np.zeros((I, nx), dtype=bool)
    for i in range(I):
        v[i] = _solve_obstacle(ops_all[i], 0.0, 0.0, None, np.zeros(nx), config)[0]
    iterates = [v.copy()] if config.keep_iterates else None
    delta = 0.0
    n = 0
    obs = np.full((I, nx), -np.inf)
    tgt = np.full((I, nx), -1)
    if I > 1:
        for n in range(1, config.max_picard + 1):
            obs, tgt = _obstacles(v, costs)
            new = np.empty_like(v)
            for i in range(I):
                new[i], bind[i], _, _ = _solve_obstacle(ops_all[i], 0.0, 0.0, obs[i], v[i], config)
            delta = float(np.max(np.abs(new - v)))
            v = new
            if iterates is not None:
                iterates.append(v.copy())
            if delta <= config.tol_picard * max(1.0, float(np.max(np.abs(v)))):
                break
        else:
            raise NonConvergence(f"Picard iteration did not converge in {config.max_picard} steps "
                                 f"(last change {delta:.3e})", delta, config.max_picard)
        obs, tgt = _obstacles(v, costs)
    tgt = np.where(bind, tgt, -1)
    return ValueSurface(
        grid=grid, times=np.array([0.0]), values=v[None], switch_mask=bind[None], targets=tgt[None],
        picard_iterations=n, residual=delta, stationary=True, iterates=iterates,
        obstacle=obs[None], pde_residual=_pde_residual(ops_all, v)[None],
    )


def solve_finite_horizon(problem: SwitchingProblem, grid: Optional[Grid1D] = None,
                         config: Optional[SolverConfig] = None) -> ValueSurface:
    """Implicit Euler in time, Picard iteration over whole time surfaces.

    Iterate n solves, for every regime independently and backward in time,
    the obstacle problem whose obstacle is built from iterate n - 1 at the
    same time level. The terminal row is g exactly.
    """
    _check_problem(problem, infinite=False)
    config = config or SolverConfig()
    T = problem.horizon.T
    if grid is None:
        grid = default_grid(problem, nt=config.nt)
    nt = grid.nt if grid.nt is not None else config.nt
    if grid.T is not None and abs(grid.T - T) > 1e-12 * T:
        raise ValueError("grid time axis does not match the problem horizon")
    dt = T / nt
    times = np.linspace(0.0, T, nt + 1)
    I = problem.regime_count
    nx = grid.nx
    x = grid.states
    ops_all = [build_operators(problem, grid, i) for i in range(I)]
    costs = cost_tensor(problem.costs, x)
    g = np.stack([np.asarray(problem.terminal.value(x, i), dtype=float) * np.ones(nx) for i in range(I)])
    shift = 1.0 / dt

    def sweep(obstacle, warm):
        V = np.empty((nt + 1, I, nx))
        B = np.zeros((nt + 1, I, nx), dtype=bool)
        V[nt] = g
        for k in range(nt - 1, -1, -1):
            for i in range(I):
                obs = None if obstacle is None else obstacle[k, i]
                u0 = V[k + 1, i] if warm is None else warm[k, i]
                V[k, i], B[k, i], _, _ = _solve_obstacle(ops_all[i], shift, V[k + 1, i] * shift, obs, u0, config)
        return V, B

    V, B = sweep(None, None)
    iterates = [V.copy()] if config.keep_iterates else None
    delta = 0.0
    n = 0
    O = np.full(V.shape, -np.inf)
    TG = np.full(V.shape, -1)
    if I > 1:
        for n in range(1, config.max_picard + 1):
            O, TG = _obstacles(V.transpose(1, 0, 2), costs)
            O, TG = O.transpose(1, 0, 2), TG.transpose(1, 0, 2)
            newV, B = sweep(O, V)
            delta = float(np.max(np.abs(newV - V)))
            V = newV
            if iterates is not None:
                iterates.append(V.copy())
            if delta <= config.tol_picard * max(1.0, float(np.max(np.abs(V)))):
                break
        else:
            raise NonConvergence(f"Picard iteration did not converge in {config.max_picard} steps "
                                 f"(last change {delta:.3e})", delta, config.max_picard)
        O, TG = _obstacles(V.transpose(1, 0, 2), costs)
        O, TG = O.transpose(1, 0, 2), TG.transpose(1, 0, 2)
    B[nt] = False
    TG = np.where(B, TG, -1)
    res = np.empty_like(V)
    for k in range(nt):
        res[k] = _pde_residual(ops_all, V[k], shift, V[k + 1] * shift)
    res[nt] = 0.0
    return ValueSurface(
        grid=Grid1D(grid.x_min, grid.x_max, nx, grid.coord, nt, T), times=times, values=V,
        switch_mask=B, targets=TG, picard_iterations=n, residual=delta, stationary=False,
        iterates=iterates, obstacle=O, pde_residual=res,
    )


def solve(problem: SwitchingProblem, grid: Optional[Grid1D] = None,
          config: Optional[SolverConfig] = None) -> ValueSurface:
    if problem.is_infinite:
        return solve_infinite_horizon(problem, grid, config)
    return solve_finite_horizon(problem, grid, config)


# ---------------------------------------------------------------------------
# Diagnostics and extraction
# ---------------------------------------------------------------------------

def complementarity_report(surface: ValueSurface, tol: float = 1e-8) -> dict:
    """Obstacle dominance and complementarity over every stored node.

    Tolerances are relative to ``max(1, sup |v|)``. The terminal slice of a
    finite-horizon surface is g itself and is skipped.
    """
    v = surface.values
    stop = v.shape[0] if surface.stationary else v.shape[0] - 1
    scale = max(1.0, float(np.max(np.abs(v))))
    obs = surface.obstacle[:stop]
    gap = v[:stop] - obs
    finite = np.isfinite(obs)
    dominance = float(np.min(np.where(finite, gap, np.inf))) if finite.any() else np.inf
    res = surface.pde_residual[:stop]
    free = ~surface.switch_mask[:stop]
    comp_free = float(np.max(np.abs(np.where(free, res, 0.0))))
    comp_bind = float(np.min(np.where(~free, res, np.inf))) if (~free).any() else np.inf
    return {
        "dominance_margin": dominance,
        "free_residual": comp_free,
        "binding_residual_min": comp_bind,
        "ok": dominance >= -tol * scale and comp_free <= tol * scale and comp_bind >= -tol * scale,
    }


@dataclass(frozen=True)
class SwitchRegion:
    """Maximal run of binding nodes, reported in state units.

    ``lower`` / ``upper`` are midpoints to the neighbouring free nodes, or
    the domain edge when the run touches it (then ``open_lower`` /
    ``open_upper`` is set).
    """

    regime: int
    lower: float
    upper: float
    target: int
    open_lower: bool
    open_upper: bool


def extract_switching_regions(surface: ValueSurface, problem: Optional[SwitchingProblem] = None,
                              t_index: int = 0) -> dict:
    grid = surface.grid
    y = grid.nodes
    out = {}
    for i in range(surface.regime_count):
        mask = surface.switch_mask[t_index, i]
        regions = []
        k = 0
        n = mask.size
        while k < n:
            if not mask[k]:
                k += 1
                continue
            start = k
            while k < n and mask[k]:
                k += 1
            stop = k - 1
            lo = y[0] if start == 0 else 0.5 * (y[start - 1] + y[start])
            hi = y[-1] if stop == n - 1 else 0.5 * (y[stop] + y[stop + 1])
            tg = surface.targets[t_index, i, start:stop + 1]
            target = int(np.bincount(tg[tg >= 0]).argmax()) if (tg >= 0).any() else -1
            regions.append(SwitchRegion(i, float(grid.to_state(lo)), float(grid.to_state(hi)), target,
                                        start == 0, stop == n - 1))
        out[i] = regions
    return out


def thresholds(surface: ValueSurface, t_index: int = 0) -> dict:
    """Interior boundary of the switching region per regime.

    Returns ``{regime: level or None}``; None means the regime never
    switches. A region touching one edge contributes its inner boundary;
    regimes with several regions or with both edges free give the inner
    boundary of the first region.
    """
    out = {}
    for i, regions in extract_switching_regions(surface, t_index=t_index).items():
        if not regions:
            out[i] = None
            continue
        r = regions[0]
        if r.open_lower and not r.open_upper:
            out[i] = r.upper
        elif r.open_upper and not r.open_lower:
            out[i] = r.lower
        elif r.open_lower and r.open_upper:
            out[i] = None
        else:
            out[i] = r.lower
    return out


def horizon_cross_check(problem: SwitchingProblem, horizons, grid: Optional[Grid1D] = None,
                        config: Optional[SolverConfig] = None, tol: float = 1e-8) -> dict:
    """Finite-horizon solves with the temporary terminal for increasing T.

    Verifies that v^T(0, ., .) is nondecreasing in T and reports its distance
    to the stationary solve.
    """
    if not problem.is_infinite:
        raise ValueError("cross-check needs an infinite-horizon problem")
    from .model import Finite

    config = config or SolverConfig()
    horizons = sorted(float(t) for t in horizons)
    grid = grid or default_grid(problem)
    stat = solve_infinite_horizon(problem, grid, config)
    scale = max(1.0, float(np.max(np.abs(stat.values))))
    prev = None
    gaps = []
    monotone = True
    worst = 0.0
    for T in horizons:
        g = Grid1D(grid.x_min, grid.x_max, grid.nx, grid.coord, config.nt, T)
        surf = solve_finite_horizon(problem.with_horizon(Finite(T)), g, config)
        v0 = surf.values[0]
        if prev is not None:
            drop = float(np.max(prev - v0))
            worst = max(worst, drop)
            if drop > tol * scale:
                monotone = False
        gaps.append(float(np.max(np.abs(stat.values[0] - v0))))
        prev = v0
    if not monotone:
        raise AssertionError(f"finite-horizon values decrease in T by up to {worst:.3e}")
    return {"horizons": horizons, "sup_gap_to_stationary": gaps, "max_decrease": worst,
            "monotone": monotone, "stationary": stat}
