"""Backward predictor-corrector solver for the leading-order worst-case
price and its first correction.

The leading-order equation has no z-derivatives, so each variance slice
is an independent 1D problem and one time step is a batch of tridiagonal
solves. The control field is bang-bang: the upper band slope wherever the
scaled second difference is nonnegative (deadband ties included), the
lower slope where it is negative. A predictor pass evaluates the control
on the known time level; corrector passes re-evaluate it on the weighted
average of the two levels and re-solve.

The correction term solves a linear equation with the same diffusion
operator, frozen control, and an explicit cross-derivative source built
from the leading-order surfaces of the step; its terminal condition is
zero. The source is proportional to the correlation, so it vanishes
identically when rho = 0.

The first backward step can be split into fully implicit sub-steps
(``rannacher_steps``) to damp the oscillation a trapezoidal scheme
develops from kinked payoffs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import GridSpec, ModelParams, SolverConfig, SolverError, Surface, validate_params
from .linsolve import LinearSolveError, solve_tridiag_batch
from .payoff import PayoffSpec, terminal_surface
from .stencils import lxx_values, lxz_values, sign_with_deadband

__all__ = [
    "P0P1Solution",
    "step_p0_predictor",
    "step_p0_corrector",
    "step_p1",
    "solve_p0p1",
]


@dataclass(frozen=True)
class P0P1Solution:
    """Output of the backward sweep at t = 0.

    ``q_star0[n]`` is the control field (values in {d, u}) used stepping
    from time level n+1 down to level n. Full surface histories are kept
    only on request; index = time level, so history[0] is t = 0 and
    history[n_t] the terminal condition.
    """

    p0: Surface
    p1: Surface
    q_star0: np.ndarray
    params: ModelParams
    grid: GridSpec
    config: SolverConfig
    payoff: PayoffSpec
    p0_history: Optional[list[Surface]] = None
    p1_history: Optional[list[Surface]] = None


def _diffusion_coeff(q: np.ndarray, params: ModelParams, grid: GridSpec) -> np.ndarray:
    """0.5 * q^2 * z * x^2, zeroed on the x-boundary rows (zero-gamma BC)."""
    x = grid.x_nodes()[:, None]
    z = grid.z_nodes()[None, :]
    a = 0.5 * q * q * z * x * x
    a[0, :] = 0.0
    a[-1, :] = 0.0
    return a


def _apply_diffusion(a: np.ndarray, v: np.ndarray, grid: GridSpec) -> np.ndarray:
    out = np.zeros_like(v)
    out[1:-1] = a[1:-1] * (v[2:] + v[:-2] - 2.0 * v[1:-1]) / grid.dx ** 2
    return out


def _solve_slicewise(a: np.ndarray, v_next: np.ndarray, source: Optional[np.ndarray],
                     grid: GridSpec, dt: float, theta: float, lin_tol: float) -> np.ndarray:
    """One weighted implicit step of dv/dt + a*d_xx v + source = 0, per slice.

    Solves (I - theta*dt*A) v_new = (I + (1-theta)*dt*A) v_next + dt*source
    with A = a * d_xx, batched over the z-slices.
    """
    rhs = v_next + (1.0 - theta) * dt * _apply_diffusion(a, v_next, grid)
    if source is not None:
        src = source.copy()
        src[0, :] = 0.0   # x-boundary rows evolve as identity
        src[-1, :] = 0.0
        rhs = rhs + dt * src

    c = theta * dt * a / grid.dx ** 2  # (n_x, n_z)
    # batch axis = slice: transpose to (n_z, n_x)
    main = (1.0 + 2.0 * c).T.copy()
    lower = (-c[1:, :]).T.copy()
    upper = (-c[:-1, :]).T.copy()
    out = solve_tridiag_batch(lower, main, upper, rhs.T.copy(), lin_tol=lin_tol)
    return np.ascontiguousarray(out.T)


def _select_q(working: np.ndarray, params: ModelParams, grid: GridSpec,
              gamma_eps: float) -> np.ndarray:
    branch = sign_with_deadband(lxx_values(working, grid), gamma_eps)
    return np.where(branch > 0, params.u, params.d)


def _advance_p0(v_next: np.ndarray, params: ModelParams, grid: GridSpec,
                config: SolverConfig, dt: float, theta: float,
                gamma_eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Predictor plus corrector passes for one (sub-)step; returns (v_new, q)."""
    q = _select_q(v_next, params, grid, gamma_eps)
    v_new = _solve_slicewise(_diffusion_coeff(q, params, grid), v_next, None,
                             grid, dt, theta, config.lin_tol)
    for _ in range(config.corrector_passes):
        working = theta * v_new + (1.0 - theta) * v_next
        q_new = _select_q(working, params, grid, gamma_eps)
        if np.array_equal(q_new, q):
            break  # same control, same linear system: solution already exact
        q = q_new
        v_new = _solve_slicewise(_diffusion_coeff(q, params, grid), v_next, None,
                                 grid, dt, theta, config.lin_tol)
    return v_new, q


def _advance_p1(p1_next: np.ndarray, q: np.ndarray, p0_new: np.ndarray,
                p0_next: np.ndarray, params: ModelParams, grid: GridSpec,
                config: SolverConfig, dt: float, theta: float) -> np.ndarray:
    p0_avg = theta * p0_new + (1.0 - theta) * p0_next
    source = params.rho * q * lxz_values(p0_avg, grid)
    return _solve_slicewise(_diffusion_coeff(q, params, grid), p1_next, source,
                            grid, dt, theta, config.lin_tol)


def _check_inputs(params: ModelParams, grid: GridSpec) -> None:
    violations = validate_params(params)
    if violations:
        raise ValueError("invalid model parameters: " + "; ".join(violations))
    if grid.n_x < 3:
        raise ValueError("solver grids need n_x >= 3")


# -- public step operations --------------------------------------------------

def step_p0_predictor(next_surface: Surface, params: ModelParams, grid: GridSpec,
                      config: SolverConfig, *, dt: Optional[float] = None,
                      theta: Optional[float] = None) -> tuple[Surface, np.ndarray]:
    """Predictor half of one backward step for the leading-order price.

    The control is evaluated on the known (later) time level. Returns the
    provisional surface one level earlier and the control field used.
    """
    _check_inputs(params, grid)
    dt = grid.dt(params.T) if dt is None else dt
    theta = config.cn_weight if theta is None else theta
    geps = config.resolve_gamma_eps(params)
    v_next = np.asarray(next_surface.values, float)
    q = _select_q(v_next, params, grid, geps)
    try:
        v_new = _solve_slicewise(_diffusion_coeff(q, params, grid), v_next, None,
                                 grid, dt, theta, config.lin_tol)
    except LinearSolveError as exc:
        raise SolverError(f"predictor step into level "
                          f"{next_surface.time_index - 1}: {exc}") from exc
    return Surface(v_new, grid, next_surface.time_index - 1), q


def step_p0_corrector(next_surface: Surface, provisional: Surface,
                      params: ModelParams, grid: GridSpec, config: SolverConfig, *,
                      dt: Optional[float] = None,
                      theta: Optional[float] = None) -> tuple[Surface, np.ndarray]:
    """Corrector half: re-evaluate the control on the weighted average of
    the two levels and re-solve the step with it."""
    _check_inputs(params, grid)
    dt = grid.dt(params.T) if dt is None else dt
    theta = config.cn_weight if theta is None else theta
    geps = config.resolve_gamma_eps(params)
    v_next = np.asarray(next_surface.values, float)
    working = theta * np.asarray(provisional.values, float) + (1.0 - theta) * v_next
    q = _select_q(working, params, grid, geps)
    try:
        v_new = _solve_slicewise(_diffusion_coeff(q, params, grid), v_next, None,
                                 grid, dt, theta, config.lin_tol)
    except LinearSolveError as exc:
        raise SolverError(f"corrector step into level "
                          f"{next_surface.time_index - 1}: {exc}") from exc
    return Surface(v_new, grid, next_surface.time_index - 1), q


def step_p1(p1_next: Surface, q_field: np.ndarray, p0_new: Surface,
            p0_next: Surface, params: ModelParams, grid: GridSpec,
            config: SolverConfig, *, dt: Optional[float] = None,
            theta: Optional[float] = None) -> Surface:
    """One backward step of the linear correction equation.

    Uses the frozen control of the completed leading-order step and the
    cross-derivative source evaluated on the weighted average of the two
    leading-order levels.
    """
    _check_inputs(params, grid)
    dt = grid.dt(params.T) if dt is None else dt
    theta = config.cn_weight if theta is None else theta
    try:
        v_new = _advance_p1(np.asarray(p1_next.values, float), np.asarray(q_field, float),
                            np.asarray(p0_new.values, float),
                            np.asarray(p0_next.values, float),
                            params, grid, config, dt, theta)
    except LinearSolveError as exc:
        raise SolverError(f"correction step into level "
                          f"{p1_next.time_index - 1}: {exc}") from exc
    return Surface(v_new, grid, p1_next.time_index - 1)


def solve_p0p1(payoff: PayoffSpec, params: ModelParams, grid: GridSpec,
               config: Optional[SolverConfig] = None,
               keep_history: bool = False) -> P0P1Solution:
    """Full backward sweep for the leading-order price and first correction.

    Terminal conditions are the payoff and zero. Each step runs the
    predictor, the corrector pass(es), then the correction step with the
    corrected control; the first step optionally splits into fully
    implicit sub-steps.
    """
    config = config or SolverConfig()
    _check_inputs(params, grid)
    geps = config.resolve_gamma_eps(params)
    dt = grid.dt(params.T)

    term = terminal_surface(payoff, grid)
    u = np.asarray(term.values, float).copy()
    v = np.zeros_like(u)
    q_hist = np.empty((grid.n_t, grid.n_x, grid.n_z))
    u_hist = [term] if keep_history else None
    v_hist = [Surface(v, grid, grid.n_t)] if keep_history else None

    for n in range(grid.n_t - 1, -1, -1):
        first = n == grid.n_t - 1
        if first and config.rannacher_steps > 0:
            substeps, theta = config.rannacher_steps, 1.0
        else:
            substeps, theta = 1, config.cn_weight
        dt_sub = dt / substeps
        try:
            for _ in range(substeps):
                u_new, q = _advance_p0(u, params, grid, config, dt_sub, theta, geps)
                v = _advance_p1(v, q, u_new, u, params, grid, config, dt_sub, theta)
                u = u_new
        except LinearSolveError as exc:
            raise SolverError(f"backward step into time level {n} failed: {exc}") from exc
        q_hist[n] = q
        if keep_history:
            u_hist.insert(0, Surface(u, grid, n))
            v_hist.insert(0, Surface(v, grid, n))

    q_hist.setflags(write=False)
    return P0P1Solution(
        p0=Surface(u, grid, 0),
        p1=Surface(v, grid, 0),
        q_star0=q_hist,
        params=params,
        grid=grid,
        config=config,
        payoff=payoff,
        p0_history=u_hist,
        p1_history=v_hist,
    )
