"""Discrete differential operators on (x, z) surfaces.

Interior nodes use the classical central formulas:

    d_xx s = (s[i+1,j] + s[i-1,j] - 2 s[i,j]) / dx^2
    d_xz s = (s[i+1,j+1] + s[i-1,j-1] - s[i-1,j+1] - s[i+1,j-1]) / (4 dx dz)

and the analogues for d_x, d_z, d_zz. Boundary rules, used consistently by
the dense operators and the sparse matrices below:

* d_xx, d_zz are zero on their boundary rows/columns. With the payoff
  affine near both x-boundaries this is exact there, and at z = 0 the
  diffusion coefficient z vanishes anyway.
* d_x, d_z fall back to one-sided two-point differences.
* d_xz is the composition d_x(d_z(s)), which reproduces the 4-point cross
  stencil at interior nodes and goes one-sided in whichever direction
  touches a boundary.

The composite operators scale these by coordinate fields: z*x^2 for the
x-diffusion, x*z for the cross term, z for the z-diffusion, and so on.

A degenerate grid with a single z-node makes every z-derivative zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import GridSpec, Surface

__all__ = [
    "StencilField",
    "d_x", "d_xx", "d_z", "d_zz", "d_xz",
    "l_xx", "l_zz", "l_xz", "l_x", "l_z1", "l_z2",
    "dx_matrix", "dz_matrix", "dxx_matrix", "dzz_matrix", "dxz_matrix",
    "sign_with_deadband",
]


@dataclass(frozen=True)
class StencilField:
    """Result of applying one discrete operator to a surface."""

    values: np.ndarray
    op: str
    grid: GridSpec


def _require_axis_nodes(s: np.ndarray, axis: int, n: int, op: str) -> None:
    if s.shape[axis] < n:
        raise ValueError(f"{op}: need at least {n} nodes along axis {axis}, "
                         f"got shape {s.shape}")


def dx_values(v: np.ndarray, grid: GridSpec) -> np.ndarray:
    _require_axis_nodes(v, 0, 2, "d_x")
    out = np.empty_like(v, dtype=float)
    h = grid.dx
    out[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
    out[0] = (v[1] - v[0]) / h
    out[-1] = (v[-1] - v[-2]) / h
    return out


def dxx_values(v: np.ndarray, grid: GridSpec) -> np.ndarray:
    _require_axis_nodes(v, 0, 3, "d_xx")
    out = np.zeros_like(v, dtype=float)
    out[1:-1] = (v[2:] + v[:-2] - 2.0 * v[1:-1]) / grid.dx ** 2
    return out


def dz_values(v: np.ndarray, grid: GridSpec) -> np.ndarray:
    if grid.n_z == 1:
        return np.zeros_like(v, dtype=float)
    _require_axis_nodes(v, 1, 2, "d_z")
    out = np.empty_like(v, dtype=float)
    h = grid.dz
    out[:, 1:-1] = (v[:, 2:] - v[:, :-2]) / (2.0 * h)
    out[:, 0] = (v[:, 1] - v[:, 0]) / h
    out[:, -1] = (v[:, -1] - v[:, -2]) / h
    return out


def dzz_values(v: np.ndarray, grid: GridSpec) -> np.ndarray:
    out = np.zeros_like(v, dtype=float)
    if grid.n_z < 3:
        return out
    out[:, 1:-1] = (v[:, 2:] + v[:, :-2] - 2.0 * v[:, 1:-1]) / grid.dz ** 2
    return out


def dxz_values(v: np.ndarray, grid: GridSpec) -> np.ndarray:
    if grid.n_z == 1:
        return np.zeros_like(v, dtype=float)
    return dx_values(dz_values(v, grid), grid)


def _wrap(fn, name):
    def op(s: Surface) -> StencilField:
        return StencilField(fn(np.asarray(s.values, float), s.grid), name, s.grid)
    op.__name__ = name
    op.__qualname__ = name
    op.__doc__ = f"Apply the discrete {name} operator to a surface."
    return op


d_x = _wrap(dx_values, "d_x")
d_xx = _wrap(dxx_values, "d_xx")
d_z = _wrap(dz_values, "d_z")
d_zz = _wrap(dzz_values, "d_zz")
d_xz = _wrap(dxz_values, "d_xz")


# -- coefficient fields ------------------------------------------------------

def _coords(grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """x and z as broadcastable (n_x, 1) and (1, n_z) arrays."""
    return grid.x_nodes()[:, None], grid.z_nodes()[None, :]


def lxx_values(v: np.ndarray, grid: GridSpec) -> np.ndarray:
    x, z = _coords(grid)
    return z * x ** 2 * dxx_values(v, grid)


def lzz_values(v: np.ndarray, grid: GridSpec) -> np.ndarray:
    _, z = _coords(grid)
    return z * dzz_values(v, grid)


def lxz_values(v: np.ndarray, grid: GridSpec) -> np.ndarray:
    x, z = _coords(grid)
    return x * z * dxz_values(v, grid)


def lx_values(v: np.ndarray, grid: GridSpec) -> np.ndarray:
    x, _ = _coords(grid)
    return x * dx_values(v, grid)


def lz1_values(v: np.ndarray, grid: GridSpec) -> np.ndarray:
    return dz_values(v, grid)


def lz2_values(v: np.ndarray, grid: GridSpec) -> np.ndarray:
    _, z = _coords(grid)
    return z * dz_values(v, grid)


l_xx = _wrap(lxx_values, "l_xx")
l_zz = _wrap(lzz_values, "l_zz")
l_xz = _wrap(lxz_values, "l_xz")
l_x = _wrap(lx_values, "l_x")
l_z1 = _wrap(lz1_values, "l_z1")
l_z2 = _wrap(lz2_values, "l_z2")


# -- sparse-matrix forms -----------------------------------------------------
#
# Surfaces flatten row-major, flat = i * n_z + j, so an operator along x is
# kron(D1, I_nz) and one along z is kron(I_nx, D1).

def _first_diff_1d(n: int, h: float) -> sp.csr_matrix:
    if n == 1:
        return sp.csr_matrix((1, 1))
    m = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        m[i, i - 1] = -0.5 / h
        m[i, i + 1] = 0.5 / h
    m[0, 0] = -1.0 / h
    m[0, 1] = 1.0 / h
    m[n - 1, n - 2] = -1.0 / h
    m[n - 1, n - 1] = 1.0 / h
    return m.tocsr()


def _second_diff_1d(n: int, h: float) -> sp.csr_matrix:
    m = sp.lil_matrix((n, n))
    if n >= 3:
        for i in range(1, n - 1):
            m[i, i - 1] = 1.0 / h ** 2
            m[i, i] = -2.0 / h ** 2
            m[i, i + 1] = 1.0 / h ** 2
    return m.tocsr()


def dx_matrix(grid: GridSpec) -> sp.csr_matrix:
    return sp.kron(_first_diff_1d(grid.n_x, grid.dx), sp.identity(grid.n_z), format="csr")


def dxx_matrix(grid: GridSpec) -> sp.csr_matrix:
    return sp.kron(_second_diff_1d(grid.n_x, grid.dx), sp.identity(grid.n_z), format="csr")


def dz_matrix(grid: GridSpec) -> sp.csr_matrix:
    if grid.n_z == 1:
        return sp.csr_matrix((grid.n_x, grid.n_x))
    return sp.kron(sp.identity(grid.n_x), _first_diff_1d(grid.n_z, grid.dz), format="csr")


def dzz_matrix(grid: GridSpec) -> sp.csr_matrix:
    if grid.n_z == 1:
        return sp.csr_matrix((grid.n_x, grid.n_x))
    return sp.kron(sp.identity(grid.n_x), _second_diff_1d(grid.n_z, grid.dz), format="csr")


def dxz_matrix(grid: GridSpec) -> sp.csr_matrix:
    if grid.n_z == 1:
        n = grid.n_x * grid.n_z
        return sp.csr_matrix((n, n))
    return (dx_matrix(grid) @ dz_matrix(grid)).tocsr()


def sign_with_deadband(values: np.ndarray, eps: float) -> np.ndarray:
    """Branch selector for gamma-sign tests: +1 on the ">= 0" branch.

    Magnitudes below eps count as zero and fall on the +1 branch, so ties
    break deterministically toward the upper volatility bound.
    """
    return np.where(np.asarray(values) > -eps, 1, -1)
