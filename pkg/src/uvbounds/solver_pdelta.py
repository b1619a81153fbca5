"""Predictor-corrector solver for the full 2D worst-case price.

Each backward step freezes the pointwise optimal control field, assembles
the weighted implicit system on the flattened (x, z) grid (a 9-point
footprint: axial neighbors from the two diffusions and the drift, corner
neighbors from the cross term), and solves it with the banded kernel. The
corrector re-evaluates the control on the weighted average of the two
time levels and re-solves.

Control selection at a node compares three candidate values of the
quadratic q -> 0.5*q^2*Gxx + q*rho*sqrt(delta)*Gxz, where Gxx and Gxz are
the scaled second-difference fields of the working surface:

* the upper endpoint u,
* the lower endpoint d,
* the interior stationary point q_hat = -rho*sqrt(delta)*Gxz/Gxx.

In the default guarded mode the interior candidate competes only where it
genuinely is the supremum over [d, u]: Gxx strictly negative (beyond the
deadband) and q_hat inside the band. ``paper_exact=True`` runs the
unconditional three-way comparison instead (any node with usable curvature
lets the interior value compete); when that candidate wins with q_hat
outside the band, the applied control is clamped back into [d, u].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .core import GridSpec, ModelParams, SolverConfig, SolverError, Surface, validate_params
from .linsolve import BandedSystem, LinearSolveError, solve_banded
from .payoff import PayoffSpec, terminal_surface
from .stencils import dxx_matrix, dxz_matrix, dz_matrix, dzz_matrix, \
    lxx_values, lxz_values

__all__ = [
    "PdeltaSolution",
    "TAG_A", "TAG_B", "TAG_C", "TAG_NAMES",
    "select_q",
    "step_pdelta",
    "solve_pdelta",
]

# candidate tags: A = upper endpoint, B = lower endpoint, C = interior point
TAG_A, TAG_B, TAG_C = 0, 1, 2
TAG_NAMES = ("A", "B", "C")


@dataclass(frozen=True)
class PdeltaSolution:
    """Backward-sweep output for the 2D worst-case price.

    ``q_star_delta[n]`` and ``candidate_tags[n]`` are the control field
    and winning-candidate tags used stepping into time level n.
    """

    p_delta: Surface
    q_star_delta: np.ndarray
    candidate_tags: np.ndarray
    params: ModelParams
    grid: GridSpec
    config: SolverConfig
    payoff: PayoffSpec
    paper_exact: bool = False
    history: Optional[list[Surface]] = None

    def tag_fraction(self, tag: int) -> float:
        """Fraction of (level, node) entries whose winner carries ``tag``."""
        return float(np.mean(self.candidate_tags == tag))


def select_q(lxx, lxz, params: ModelParams, gamma_eps: float,
             paper_exact: bool = False):
    """Pointwise optimal control from the two stencil fields.

    Vectorized; returns (q, tag) with tags in {TAG_A, TAG_B, TAG_C}. Exact
    ties prefer the upper endpoint, then the lower one, so the selection
    is deterministic. The interior candidate needs |Gxx| above the
    deadband in either mode (division guard); the guarded mode further
    requires Gxx < 0 and q_hat inside [d, u].
    """
    scalar = np.isscalar(lxx) and np.isscalar(lxz)
    a = np.asarray(lxx, dtype=float)
    # curvature below the deadband counts as zero, so a flat node with no
    # cross term ties and resolves to the upper endpoint
    a = np.where(np.abs(a) < gamma_eps, 0.0, a)
    b = params.rho * np.sqrt(params.delta) * np.asarray(lxz, dtype=float)
    d, u = params.d, params.u

    f_u = 0.5 * u * u * a + u * b
    f_d = 0.5 * d * d * a + d * b

    safe = np.abs(a) >= gamma_eps
    with np.errstate(divide="ignore", invalid="ignore"):
        q_hat = np.where(safe, -b / np.where(safe, a, 1.0), 0.0)
        f_c = np.where(safe, -b * b / (2.0 * np.where(safe, a, 1.0)), -np.inf)
    if paper_exact:
        eligible = safe
        # the unguarded comparison can pick a stationary point outside the
        # band; the applied control is clamped back into it
        q_c = np.clip(q_hat, d, u)
    else:
        eligible = (a <= -gamma_eps) & (q_hat >= d) & (q_hat <= u)
        q_c = q_hat
    f_c = np.where(eligible, f_c, -np.inf)

    endpoint_up = f_u >= f_d
    q = np.where(endpoint_up, u, d)
    tag = np.where(endpoint_up, TAG_A, TAG_B).astype(np.int8)
    f_best = np.maximum(f_u, f_d)

    take_c = f_c > f_best
    q = np.where(take_c, q_c, q)
    tag = np.where(take_c, TAG_C, tag).astype(np.int8)
    if scalar:
        return float(q), int(tag)
    return q, tag


class _Assembler:
    """Grid-fixed pieces of the implicit operator, built once per solve."""

    def __init__(self, grid: GridSpec):
        self.grid = grid
        self.dxx = dxx_matrix(grid)
        self.dxz = dxz_matrix(grid)
        self.dzz = dzz_matrix(grid)
        self.dz = dz_matrix(grid)
        self.eye = sp.identity(grid.n_x * grid.n_z, format="csr")
        x = grid.x_nodes()[:, None]
        z = grid.z_nodes()[None, :]
        self.xz = np.broadcast_to(x * z, (grid.n_x, grid.n_z)).ravel()
        self.zx2 = np.broadcast_to(z * x * x, (grid.n_x, grid.n_z)).ravel()
        self.z = np.broadcast_to(z, (grid.n_x, grid.n_z)).ravel()

    def generator(self, q: np.ndarray, params: ModelParams) -> sp.csr_matrix:
        """Spatial operator with the control field frozen at ``q``."""
        qf = q.ravel()
        sqd = np.sqrt(params.delta)
        a = sp.diags(0.5 * qf * qf * self.zx2) @ self.dxx
        a = a + sp.diags(params.rho * sqd * qf * self.xz) @ self.dxz
        if params.delta > 0.0 and self.grid.n_z > 1:
            a = a + params.delta * (
                sp.diags(0.5 * self.z) @ self.dzz
                + sp.diags(params.kappa * (params.theta - self.z)) @ self.dz
            )
        return a.tocsr()


def _implicit_step(w_next: np.ndarray, gen: sp.csr_matrix, eye: sp.csr_matrix,
                   dt: float, theta: float, lin_tol: float) -> np.ndarray:
    flat = w_next.ravel()
    rhs = flat + (1.0 - theta) * dt * (gen @ flat)
    system = BandedSystem((eye - theta * dt * gen).tocsr(), rhs)
    return solve_banded(system, lin_tol=lin_tol).reshape(w_next.shape)


def _select_field(w: np.ndarray, params: ModelParams, grid: GridSpec,
                  gamma_eps: float, paper_exact: bool):
    return select_q(lxx_values(w, grid), lxz_values(w, grid), params,
                    gamma_eps, paper_exact)


def _advance(w_next: np.ndarray, asm: _Assembler, params: ModelParams,
             config: SolverConfig, dt: float, theta: float, gamma_eps: float,
             paper_exact: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    grid = asm.grid
    q, tags = _select_field(w_next, params, grid, gamma_eps, paper_exact)
    w_new = _implicit_step(w_next, asm.generator(q, params), asm.eye, dt, theta,
                           config.lin_tol)
    for _ in range(config.corrector_passes):
        working = theta * w_new + (1.0 - theta) * w_next
        q_new, tags_new = _select_field(working, params, grid, gamma_eps, paper_exact)
        if np.array_equal(q_new, q):
            tags = tags_new
            break
        q, tags = q_new, tags_new
        w_new = _implicit_step(w_next, asm.generator(q, params), asm.eye, dt, theta,
                               config.lin_tol)
    return w_new, q, tags


def _check_inputs(params: ModelParams, grid: GridSpec) -> None:
    violations = validate_params(params)
    if violations:
        raise ValueError("invalid model parameters: " + "; ".join(violations))
    if grid.n_x < 3:
        raise ValueError("solver grids need n_x >= 3")


def step_pdelta(next_surface: Surface, params: ModelParams, grid: GridSpec,
                config: SolverConfig, *, paper_exact: bool = False,
                dt: Optional[float] = None,
                theta: Optional[float] = None) -> Surface:
    """One full predictor-corrector step of the 2D scheme."""
    _check_inputs(params, grid)
    dt = grid.dt(params.T) if dt is None else dt
    theta = config.cn_weight if theta is None else theta
    asm = _Assembler(grid)
    try:
        w_new, _, _ = _advance(np.asarray(next_surface.values, float), asm, params,
                               config, dt, theta, config.resolve_gamma_eps(params),
                               paper_exact)
    except LinearSolveError as exc:
        raise SolverError(f"2D step into level {next_surface.time_index - 1}: "
                          f"{exc}") from exc
    return Surface(w_new, grid, next_surface.time_index - 1)


def solve_pdelta(payoff: PayoffSpec, params: ModelParams, grid: GridSpec,
                 config: Optional[SolverConfig] = None, *,
                 paper_exact: bool = False,
                 keep_history: bool = False) -> PdeltaSolution:
    """Full backward sweep of the 2D worst-case pricing scheme."""
    config = config or SolverConfig()
    _check_inputs(params, grid)
    geps = config.resolve_gamma_eps(params)
    dt = grid.dt(params.T)
    asm = _Assembler(grid)

    term = terminal_surface(payoff, grid)
    w = np.asarray(term.values, float).copy()
    q_hist = np.empty((grid.n_t, grid.n_x, grid.n_z))
    tag_hist = np.empty((grid.n_t, grid.n_x, grid.n_z), dtype=np.int8)
    hist = [term] if keep_history else None

    for n in range(grid.n_t - 1, -1, -1):
        first = n == grid.n_t - 1
        if first and config.rannacher_steps > 0:
            substeps, theta = config.rannacher_steps, 1.0
        else:
            substeps, theta = 1, config.cn_weight
        try:
            for _ in range(substeps):
                w, q, tags = _advance(w, asm, params, config, dt / substeps, theta,
                                      geps, paper_exact)
        except LinearSolveError as exc:
            raise SolverError(f"2D backward step into time level {n} failed: {exc}") from exc
        q_hist[n] = q
        tag_hist[n] = tags
        if keep_history:
            hist.insert(0, Surface(w, grid, n))

    q_hist.setflags(write=False)
    tag_hist.setflags(write=False)
    return PdeltaSolution(
        p_delta=Surface(w, grid, 0),
        q_star_delta=q_hist,
        candidate_tags=tag_hist,
        params=params,
        grid=grid,
        config=config,
        payoff=payoff,
        paper_exact=paper_exact,
        history=hist,
    )
