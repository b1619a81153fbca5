"""Linear kernels for the implicit steps.

Tridiagonal systems (one per variance slice in the 1D solvers) go through
a vectorized Thomas sweep that handles a whole batch of slices at once.
The 2D scheme produces a 9-point banded system solved by sparse LU, with
a diagonally preconditioned BiCGStab fallback for grids too large to
factor comfortably.

Acceptance of a solve is residual-based: every solve verifies
``max|A x - b| <= lin_tol * (1 + max|b|)`` and raises otherwise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

__all__ = [
    "TriDiag",
    "BandedSystem",
    "LinearSolveError",
    "solve_tridiag",
    "solve_tridiag_batch",
    "solve_banded",
]

DEFAULT_TOL = 1e-10

# above this many unknowns "auto" switches from direct LU to BiCGStab
_DIRECT_LIMIT = 200_000


class LinearSolveError(RuntimeError):
    """Singular pivot, breakdown or residual failure in a linear solve."""

    def __init__(self, message: str, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])


@dataclass(frozen=True)
class TriDiag:
    """Tridiagonal matrix: lower/upper have length n-1, main has length n."""

    lower: np.ndarray
    main: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        lo = np.asarray(self.lower, float)
        mi = np.asarray(self.main, float)
        up = np.asarray(self.upper, float)
        if mi.ndim != 1 or lo.shape != (len(mi) - 1,) or up.shape != (len(mi) - 1,):
            raise ValueError("TriDiag: need main of length n and lower/upper of length n-1")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "main", mi)
        object.__setattr__(self, "upper", up)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.main * x
        y[:-1] += self.upper * x[1:]
        y[1:] += self.lower * x[:-1]
        return y


@dataclass(frozen=True)
class BandedSystem:
    """Sparse system from the 2D scheme: at most 9 nonzeros per row."""

    matrix: sp.spmatrix
    rhs: np.ndarray

    def __post_init__(self) -> None:
        m = sp.csr_matrix(self.matrix)
        b = np.asarray(self.rhs, float)
        if m.shape[0] != m.shape[1] or b.shape != (m.shape[0],):
            raise ValueError("BandedSystem: matrix must be square and match the rhs")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "rhs", b)

    def validate(self) -> None:
        """Check finiteness and sparsity-pattern symmetry (test helper)."""
        if not np.all(np.isfinite(self.matrix.data)) or not np.all(np.isfinite(self.rhs)):
            raise ValueError("BandedSystem: non-finite entries")
        pattern = self.matrix.copy()
        pattern.data = np.ones_like(pattern.data)
        if (pattern != pattern.T).nnz != 0:
            raise ValueError("BandedSystem: sparsity pattern is not symmetric")


def _check_residual(residual: np.ndarray, rhs: np.ndarray, tol: float, what: str,
                    history=None) -> None:
    res = float(np.max(np.abs(residual))) if len(residual) else 0.0
    bound = tol * (1.0 + float(np.max(np.abs(rhs))) if len(rhs) else 1.0)
    log.debug("%s residual max-norm %.3e (bound %.3e)", what, res, bound)
    if not np.isfinite(res) or res > bound:
        raise LinearSolveError(
            f"{what}: residual {res:.3e} exceeds {bound:.3e}", residual_history=history
        )


def solve_tridiag_batch(lower: np.ndarray, main: np.ndarray, upper: np.ndarray,
                        rhs: np.ndarray, lin_tol: float = DEFAULT_TOL) -> np.ndarray:
    """Solve a batch of independent tridiagonal systems by the Thomas sweep.

    All inputs are (n_systems, n) arrays except lower/upper, which are
    (n_systems, n-1). Vectorizes over the batch axis.
    """
    main = np.asarray(main, float)
    rhs = np.asarray(rhs, float)
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    nb, n = main.shape
    if n == 1:
        _check_pivots(main[:, 0], 0)
        x = rhs / main
        _check_residual((main * x - rhs).ravel(), rhs.ravel(), lin_tol, "tridiagonal batch")
        return x

    cp = np.empty((nb, n - 1))
    dp = np.empty((nb, n))
    den = main[:, 0].copy()
    _check_pivots(den, 0)
    cp[:, 0] = upper[:, 0] / den
    dp[:, 0] = rhs[:, 0] / den
    for k in range(1, n):
        den = main[:, k] - lower[:, k - 1] * cp[:, k - 1]
        _check_pivots(den, k)
        if k < n - 1:
            cp[:, k] = upper[:, k] / den
        dp[:, k] = (rhs[:, k] - lower[:, k - 1] * dp[:, k - 1]) / den
    for k in range(n - 2, -1, -1):
        dp[:, k] -= cp[:, k] * dp[:, k + 1]

    resid = main * dp
    resid[:, :-1] += upper * dp[:, 1:]
    resid[:, 1:] += lower * dp[:, :-1]
    _check_residual((resid - rhs).ravel(), rhs.ravel(), lin_tol, "tridiagonal batch")
    return dp


def _check_pivots(den: np.ndarray, row: int) -> None:
    bad = ~np.isfinite(den) | (np.abs(den) < 1e-300)
    if np.any(bad):
        sys_idx = int(np.argmax(bad))
        raise LinearSolveError(
            f"tridiagonal solve: singular pivot at row {row} (system {sys_idx})"
        )


def solve_tridiag(system: TriDiag, rhs: np.ndarray, lin_tol: float = DEFAULT_TOL) -> np.ndarray:
    """Solve one tridiagonal system; residual-checked."""
    rhs = np.asarray(rhs, float)
    if rhs.shape != system.main.shape:
        raise ValueError("solve_tridiag: rhs length does not match the system")
    x = solve_tridiag_batch(
        system.lower[None, :], system.main[None, :], system.upper[None, :],
        rhs[None, :], lin_tol=lin_tol,
    )
    return x[0]


def solve_banded(system: BandedSystem, lin_tol: float = DEFAULT_TOL,
                 method: str = "auto") -> np.ndarray:
    """Solve the 2D implicit system; residual-checked.

    method: "direct" (sparse LU), "iterative" (BiCGStab with diagonal
    preconditioning) or "auto" (direct up to {limit} unknowns).
    """
    a = sp.csc_matrix(system.matrix)
    b = system.rhs
    if method == "auto":
        method = "direct" if a.shape[0] <= _DIRECT_LIMIT else "iterative"

    if method == "direct":
        try:
            lu = spla.splu(a)
            x = lu.solve(b)
            # iterative refinement: stiff control fields can push the raw
            # LU residual above the contract bound
            bound = lin_tol * (1.0 + float(np.max(np.abs(b))))
            for _ in range(3):
                r = b - a @ x
                if float(np.max(np.abs(r))) <= bound:
                    break
                x = x + lu.solve(r)
        except RuntimeError as exc:  # singular factorization
            raise LinearSolveError(f"sparse LU failed: {exc}") from exc
        _check_residual(a @ x - b, b, lin_tol, "banded direct")
        return x

    if method != "iterative":
        raise ValueError(f"unknown solve method {method!r}")

    diag = a.diagonal()
    if np.any(diag == 0.0) or not np.all(np.isfinite(diag)):
        raise LinearSolveError("iterative solve: zero or non-finite diagonal")
    precond = spla.LinearOperator(a.shape, matvec=lambda v: v / diag)
    history: list[float] = []

    def _track(xk):
        history.append(float(np.max(np.abs(a @ xk - b))))

    atol = 0.5 * lin_tol * (1.0 + float(np.max(np.abs(b))))
    x, info = spla.bicgstab(a, b, M=precond, rtol=0.0, atol=atol,
                            maxiter=20 * a.shape[0], callback=_track)
    if info != 0:
        raise LinearSolveError(
            f"BiCGStab did not converge (info={info})", residual_history=history
        )
    _check_residual(a @ x - b, b, lin_tol, "banded iterative", history=history)
    return x


solve_banded.__doc__ = solve_banded.__doc__.format(limit=_DIRECT_LIMIT)
