"""The experiment layer: error sweep over delta, gamma diagnostics, and
Black-Scholes comparison curves.

The sweep exploits that the leading-order price and its correction do not
depend on delta: they are solved exactly once and reused against every 2D
solve. The per-delta error is

    sup over the window of |P_full - P_lead - sqrt(delta) * P_corr|

at t = 0, taken by default over x in [60, 140] and all z to keep imposed
boundary behavior out of the convergence fit (the full-grid sup is also
recorded). The fitted slope uses the smallest half of the delta list,
where the expansion is in its asymptotic regime.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .blackscholes import bs_payoff_price
from .core import GridSpec, ModelParams, SolverConfig, SolverError
from .payoff import PayoffSpec
from .solver_p0p1 import P0P1Solution, solve_p0p1
from .solver_pdelta import PdeltaSolution, solve_pdelta
from .stencils import dxx_values, sign_with_deadband

__all__ = [
    "SweepRecord",
    "SweepReport",
    "GammaDiagnostics",
    "BsComparison",
    "error_sweep",
    "gamma_diagnostics",
    "compare_bs",
]

DEFAULT_WINDOW = (60.0, 140.0)


@dataclass(frozen=True)
class SweepRecord:
    delta: float
    error: float          # sup over the x-window, all z
    error_full: float     # sup over the whole grid
    sup_x: float
    sup_z: float
    runtime_s: float
    # most negative surface value: the central cross/drift stencils are not
    # monotone, so small oscillations below zero are recorded, not hidden
    undershoot: float = 0.0


@dataclass(frozen=True)
class SweepReport:
    records: list[SweepRecord]   # ascending in delta
    slope: float
    intercept: float
    r2: float
    n_fit: int
    window: tuple[float, float]
    p0_runtime_s: float
    p0p1: P0P1Solution

    @property
    def deltas(self) -> np.ndarray:
        return np.array([r.delta for r in self.records])

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.error for r in self.records])


def _window_indices(x: np.ndarray, window: tuple[float, float]) -> np.ndarray:
    lo, hi = window
    idx = np.where((x >= lo) & (x <= hi))[0]
    if len(idx) == 0:
        raise ValueError(f"window {window} contains no grid nodes")
    return idx


def _pdelta_error(payoff: PayoffSpec, params: ModelParams, delta: float,
                  grid: GridSpec, config: SolverConfig, p0: np.ndarray,
                  p1: np.ndarray, window: tuple[float, float],
                  paper_exact: bool) -> SweepRecord:
    t0 = time.perf_counter()
    try:
        sol = solve_pdelta(payoff, params.replace(delta=delta), grid, config,
                           paper_exact=paper_exact)
    except SolverError as exc:
        raise SolverError(f"sweep failed at delta={delta}: {exc}") from exc
    elapsed = time.perf_counter() - t0

    err = np.abs(sol.p_delta.values - p0 - np.sqrt(delta) * p1)
    x = grid.x_nodes()
    z = grid.z_nodes()
    idx = _window_indices(x, window)
    sub = err[idx, :]
    flat = int(np.argmax(sub))
    i_loc, j_loc = np.unravel_index(flat, sub.shape)
    return SweepRecord(
        delta=float(delta),
        error=float(sub[i_loc, j_loc]),
        error_full=float(np.max(err)),
        sup_x=float(x[idx[i_loc]]),
        sup_z=float(z[j_loc]),
        runtime_s=elapsed,
        undershoot=float(min(np.min(sol.p_delta.values), 0.0)),
    )


def error_sweep(payoff: PayoffSpec, params: ModelParams,
                delta_list: Sequence[float], grid: GridSpec,
                config: Optional[SolverConfig] = None, *,
                window: tuple[float, float] = DEFAULT_WINDOW,
                paper_exact: bool = False,
                n_workers: int = 1) -> SweepReport:
    """Per-delta approximation error and its log-log convergence fit.

    One leading-order/correction solve serves the whole sweep; each delta
    costs one 2D solve and those may run in parallel workers.
    """
    config = config or SolverConfig()
    deltas = sorted(set(float(d) for d in delta_list))
    if len(deltas) < 2:
        raise ValueError("error_sweep needs at least two distinct delta values")
    if deltas[0] <= 0.0:
        raise ValueError("delta values must be strictly positive")
    _window_indices(grid.x_nodes(), window)  # fail before the first solve

    t0 = time.perf_counter()
    base = solve_p0p1(payoff, params, grid, config)
    p0_runtime = time.perf_counter() - t0
    p0 = np.asarray(base.p0.values)
    p1 = np.asarray(base.p1.values)

    jobs = [(payoff, params, d, grid, config, p0, p1, window, paper_exact)
            for d in deltas]
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            records = list(pool.map(_pdelta_error_star, jobs))
    else:
        records = [_pdelta_error(*job) for job in jobs]

    n_fit = max(2, len(deltas) // 2)
    slope, intercept, r2 = _plain_loglog_fit(
        np.array(deltas[:n_fit]),
        np.array([r.error for r in records[:n_fit]]),
    )
    return SweepReport(records=records, slope=slope, intercept=intercept, r2=r2,
                       n_fit=n_fit, window=window, p0_runtime_s=p0_runtime,
                       p0p1=base)


def _pdelta_error_star(args) -> SweepRecord:
    return _pdelta_error(*args)


def _plain_loglog_fit(deltas: np.ndarray, errors: np.ndarray) -> tuple[float, float, float]:
    if np.any(errors <= 0.0):
        # degenerate: error identically zero cannot be log-fitted
        return float("nan"), float("nan"), 0.0
    x = np.log(deltas)
    y = np.log(errors)
    slope, intercept = np.polyfit(x, y, 1)
    yhat = intercept + slope * x
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    return float(slope), float(intercept), 1.0 - (ss_res / ss_tot if ss_tot > 0 else 0.0)


@dataclass(frozen=True)
class GammaDiagnostics:
    """Sign structure of the discrete second x-derivatives at t = 0."""

    z_values: np.ndarray
    crossings: list[list[float]]     # per z-slice, x-locations of sign changes
    mismatch_mask: np.ndarray        # interior nodes where the two gammas branch apart
    mismatch_width: np.ndarray       # per z-slice, node count * dx
    gamma_eps: float

    def crossings_at(self, z: float) -> list[float]:
        j = int(np.argmin(np.abs(self.z_values - z)))
        return self.crossings[j]

    def width_at(self, z: float) -> float:
        j = int(np.argmin(np.abs(self.z_values - z)))
        return float(self.mismatch_width[j])


def gamma_diagnostics(p0_solution: P0P1Solution, pdelta_solution: PdeltaSolution,
                      gamma_eps: Optional[float] = None) -> GammaDiagnostics:
    """Locate gamma sign changes and the region where the 2D price's gamma
    disagrees with the leading-order one, per z-slice at t = 0.

    Sign tests use the deadband convention, so near-zero curvature counts
    as nonnegative. Boundary rows carry imposed zero curvature and are
    excluded.
    """
    grid = p0_solution.grid
    if pdelta_solution.grid != grid:
        raise ValueError("gamma_diagnostics: solutions live on different grids")
    if gamma_eps is None:
        gamma_eps = p0_solution.config.resolve_gamma_eps(p0_solution.params)

    g0 = dxx_values(np.asarray(p0_solution.p0.values), grid)
    gd = dxx_values(np.asarray(pdelta_solution.p_delta.values), grid)
    b0 = sign_with_deadband(g0, gamma_eps)
    bd = sign_with_deadband(gd, gamma_eps)

    x = grid.x_nodes()
    dx = grid.dx
    crossings: list[list[float]] = []
    for j in range(grid.n_z):
        locs: list[float] = []
        for i in range(1, grid.n_x - 2):
            if b0[i, j] != b0[i + 1, j]:
                gi, gi1 = g0[i, j], g0[i + 1, j]
                if abs(gi) >= gamma_eps and abs(gi1) >= gamma_eps:
                    locs.append(float(x[i] + dx * gi / (gi - gi1)))
                else:
                    locs.append(float(x[i] + 0.5 * dx))
        crossings.append(locs)

    mism = np.zeros((grid.n_x, grid.n_z), dtype=bool)
    mism[1:-1, :] = b0[1:-1, :] != bd[1:-1, :]
    widths = mism.sum(axis=0).astype(float) * dx
    return GammaDiagnostics(z_values=grid.z_nodes(), crossings=crossings,
                            mismatch_mask=mism, mismatch_width=widths,
                            gamma_eps=gamma_eps)


@dataclass(frozen=True)
class BsComparison:
    """Leading-order price against the two constant-volatility curves."""

    x: np.ndarray
    p0: np.ndarray
    bs_low: np.ndarray
    bs_high: np.ndarray
    vol_low: float
    vol_high: float
    dominated: np.ndarray    # p0 >= max(curves) - tol, per node
    tol: float


def compare_bs(p0_solution: P0P1Solution, payoff: Optional[PayoffSpec] = None,
               tol: Optional[float] = None) -> BsComparison:
    """Tabulate P0 at the initial variance level against the Black-Scholes
    curves priced at the lower and upper band volatilities."""
    params = p0_solution.params
    grid = p0_solution.grid
    payoff = payoff if payoff is not None else p0_solution.payoff
    if tol is None:
        tol = 1e-3 * params.x0

    vol_low, vol_high = params.vol_bounds(params.z0)
    x = grid.x_nodes()
    j0 = grid.iz_nearest(params.z0)
    row = np.asarray(p0_solution.p0.values)[:, j0]

    # the closed forms need strictly positive maturities/spots; x=0 nodes
    # price to the payoff's x->0 limit by continuity
    bs_low = np.asarray(bs_payoff_price(payoff, np.maximum(x, 1e-12), vol_low,
                                        params.T, params.r))
    bs_high = np.asarray(bs_payoff_price(payoff, np.maximum(x, 1e-12), vol_high,
                                         params.T, params.r))
    dominated = row >= np.maximum(bs_low, bs_high) - tol
    return BsComparison(x=x, p0=row, bs_low=bs_low, bs_high=bs_high,
                        vol_low=vol_low, vol_high=vol_high,
                        dominated=dominated, tol=tol)
