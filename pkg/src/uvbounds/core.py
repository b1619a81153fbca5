"""Shared value types: model parameters, grids, surfaces, solver knobs.

Everything here is an immutable value object. Solvers never mutate a
``Surface`` in place; each backward step produces a fresh one, so surfaces
can be shared freely across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

__all__ = [
    "ModelParams",
    "GridSpec",
    "SolverConfig",
    "Surface",
    "SolverError",
    "validate_params",
    "build_grid",
]


class SolverError(RuntimeError):
    """A backward-stepping solver failed; the message carries the context."""


@dataclass(frozen=True)
class ModelParams:
    """Market and variance-process parameters.

    Attributes:
        x0: initial asset price (currency units)
        z0: initial variance level of the bound-driving process
        T: maturity in years
        r: risk-free rate; only r = 0 is supported by the solvers
        d: lower slope of the volatility band (0 < d < 1)
        u: upper slope of the volatility band (u > 1)
        kappa: mean-reversion speed of the variance process (1/years)
        theta: long-run variance mean
        delta: slow-scale parameter in [0, 1]
        rho: correlation between asset and variance shocks, |rho| < 1
    """

    x0: float
    z0: float
    T: float
    r: float
    d: float
    u: float
    kappa: float
    theta: float
    delta: float
    rho: float

    def __post_init__(self) -> None:
        for f in fields(self):
            object.__setattr__(self, f.name, float(getattr(self, f.name)))

    def replace(self, **changes) -> "ModelParams":
        kwargs = {f.name: getattr(self, f.name) for f in fields(self)}
        kwargs.update(changes)
        return ModelParams(**kwargs)

    def vol_bounds(self, z: float) -> tuple[float, float]:
        """Volatility band [d*sqrt(z), u*sqrt(z)] at variance level z."""
        s = float(np.sqrt(z))
        return self.d * s, self.u * s


def validate_params(p: ModelParams) -> list[str]:
    """Return every violated parameter rule, empty list if all hold.

    This is a reporting operation: it never raises. Each entry names the
    offending field(s) and the rule, e.g. ``"theta*kappa: Feller condition
    theta*kappa >= 1/2 violated (got 0.1)"``.
    """
    v: list[str] = []
    for name in ("x0", "z0", "T", "r", "d", "u", "kappa", "theta", "delta", "rho"):
        if not np.isfinite(getattr(p, name)):
            v.append(f"{name}: must be finite (got {getattr(p, name)!r})")
    if v:
        return v

    if not (0.0 < p.d < 1.0):
        v.append(f"d: require 0 < d < 1 (got {p.d})")
    if not (p.u > 1.0):
        v.append(f"u: require u > 1 (got {p.u})")
    if p.d >= p.u:
        v.append(f"d,u: require d < u (got d={p.d}, u={p.u})")
    if p.kappa <= 0.0:
        v.append(f"kappa: require kappa > 0 (got {p.kappa})")
    if p.theta <= 0.0:
        v.append(f"theta: require theta > 0 (got {p.theta})")
    if p.theta * p.kappa < 0.5:
        v.append(
            f"theta*kappa: Feller condition theta*kappa >= 1/2 violated "
            f"(got {p.theta * p.kappa})"
        )
    if not (abs(p.rho) < 1.0):
        v.append(f"rho: require |rho| < 1 (got {p.rho})")
    if not (0.0 <= p.delta <= 1.0):
        v.append(f"delta: require 0 <= delta <= 1 (got {p.delta})")
    if p.T <= 0.0:
        v.append(f"T: require T > 0 (got {p.T})")
    if p.x0 <= 0.0:
        v.append(f"x0: require x0 > 0 (got {p.x0})")
    if p.z0 <= 0.0:
        v.append(f"z0: require z0 > 0 (got {p.z0})")
    if p.r != 0.0:
        v.append(f"r: unsupported — solvers implement r = 0 only (got {p.r})")
    return v


@dataclass(frozen=True)
class GridSpec:
    """Uniform discretization of the (x, z) rectangle and of [0, T].

    ``n_x`` and ``n_z`` count grid nodes including the boundary nodes, so
    the spacings are dx = (x_max - x_min)/(n_x - 1) and likewise for dz.
    ``n_t`` counts time steps; there are n_t + 1 time levels.

    The degenerate case ``n_z == 1`` (with z_min == z_max) is allowed and
    collapses the problem to a single variance slice; all z-derivatives
    are then identically zero.
    """

    x_min: float
    x_max: float
    n_x: int
    z_min: float
    z_max: float
    n_z: int
    n_t: int

    def __post_init__(self) -> None:
        for name in ("x_min", "x_max", "z_min", "z_max"):
            object.__setattr__(self, name, float(getattr(self, name)))
        for name in ("n_x", "n_z", "n_t"):
            object.__setattr__(self, name, int(getattr(self, name)))
        for name in ("x_min", "x_max", "z_min", "z_max"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"GridSpec.{name} must be finite")
        if self.x_min < 0.0 or self.z_min < 0.0:
            raise ValueError("GridSpec: x_min and z_min must be >= 0")
        if self.x_min >= self.x_max:
            raise ValueError("GridSpec: require x_min < x_max")
        if self.n_z == 1:
            if self.z_min != self.z_max:
                raise ValueError("GridSpec: n_z == 1 requires z_min == z_max")
        elif self.z_min >= self.z_max:
            raise ValueError("GridSpec: require z_min < z_max")
        if self.n_x < 2:
            raise ValueError("GridSpec: require n_x >= 2")
        if self.n_z < 1:
            raise ValueError("GridSpec: require n_z >= 1")
        if self.n_t < 1:
            raise ValueError("GridSpec: require n_t >= 1")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_x - 1)

    @property
    def dz(self) -> float:
        if self.n_z == 1:
            return 0.0
        return (self.z_max - self.z_min) / (self.n_z - 1)

    def dt(self, T: float) -> float:
        return T / self.n_t

    def x_nodes(self) -> np.ndarray:
        return self.x_min + np.arange(self.n_x) * self.dx

    def z_nodes(self) -> np.ndarray:
        if self.n_z == 1:
            return np.array([self.z_min])
        return self.z_min + np.arange(self.n_z) * self.dz

    def ix_nearest(self, x: float) -> int:
        return int(np.argmin(np.abs(self.x_nodes() - x)))

    def iz_nearest(self, z: float) -> int:
        return int(np.argmin(np.abs(self.z_nodes() - z)))


def build_grid(spec: GridSpec, T: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Coordinate vectors (x_i), (z_j), (t_n) for a grid spec.

    x_i = x_min + i*dx and so on; lengths are n_x, n_z and n_t + 1.
    """
    if not np.isfinite(T) or T <= 0.0:
        raise ValueError(f"build_grid: maturity must be positive and finite (got {T})")
    t = np.arange(spec.n_t + 1) * spec.dt(T)
    return spec.x_nodes(), spec.z_nodes(), t


@dataclass(frozen=True)
class SolverConfig:
    """Numerical knobs shared by the backward-stepping solvers.

    Attributes:
        cn_weight: weight on the unknown (earlier-time) level in the
            weighted time discretization; 0.5 is the trapezoidal scheme,
            1.0 is fully implicit.
        corrector_passes: maximum corrector re-solves per step (>= 1);
            passes stop early once the control field stops changing.
        gamma_eps: deadband below which a discrete second derivative is
            treated as zero for sign tests; None means the default
            1e-9 * x0**2 resolved against the model parameters.
        lin_tol: residual tolerance for the linear solvers.
        rannacher_steps: number of fully implicit sub-steps replacing the
            first backward step, damping oscillation from payoff kinks.
    """

    cn_weight: float = 0.5
    corrector_passes: int = 1
    gamma_eps: Optional[float] = None
    lin_tol: float = 1e-10
    rannacher_steps: int = 2

    def __post_init__(self) -> None:
        if not (0.0 <= self.cn_weight <= 1.0):
            raise ValueError(f"cn_weight must be in [0, 1] (got {self.cn_weight})")
        if self.corrector_passes < 1:
            raise ValueError("corrector_passes must be >= 1")
        if self.gamma_eps is not None and self.gamma_eps <= 0.0:
            raise ValueError("gamma_eps must be positive")
        if self.lin_tol <= 0.0:
            raise ValueError("lin_tol must be positive")
        if self.rannacher_steps < 0:
            raise ValueError("rannacher_steps must be >= 0")

    def resolve_gamma_eps(self, params: ModelParams) -> float:
        if self.gamma_eps is not None:
            return self.gamma_eps
        return 1e-9 * params.x0 ** 2


@dataclass(frozen=True)
class Surface:
    """Real-valued field over the (x, z) grid at one time level.

    ``values`` is indexed (i, j) = (x-index, z-index) and is made
    read-only on construction.
    """

    values: np.ndarray
    grid: GridSpec
    time_index: int

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=float, copy=True)
        if arr.shape != (self.grid.n_x, self.grid.n_z):
            raise ValueError(
                f"Surface shape {arr.shape} does not match grid "
                f"({self.grid.n_x}, {self.grid.n_z})"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("Surface contains non-finite entries")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def value_at(self, x: float, z: float, order: int = 3) -> float:
        """Interpolate the surface at an off-grid point.

        Separable Lagrange interpolation of the given order (1 = bilinear,
        3 = cubic on the 4 nearest nodes per axis, clamped at boundaries).
        Points outside the grid rectangle are clamped to it.
        """
        xv = self.grid.x_nodes()
        col = _lagrange_1d(xv, self.values, x, order, axis=0)
        if self.grid.n_z == 1:
            return float(col[0])
        zv = self.grid.z_nodes()
        return float(_lagrange_1d(zv, col[:, None], z, order, axis=0)[0])


def _lagrange_1d(nodes: np.ndarray, values: np.ndarray, target: float,
                 order: int, axis: int) -> np.ndarray:
    """Interpolate ``values`` along ``axis`` 0 at ``target`` over ``nodes``.

    Returns the remaining axis as an array (so 2D in, 1D out).
    """
    n = len(nodes)
    if n == 1:
        return np.asarray(values[0], dtype=float).reshape(-1)
    k = min(order, n - 1)
    target = float(min(max(target, nodes[0]), nodes[-1]))
    # leftmost node of the (k+1)-point stencil, centered on the target cell
    i0 = int(np.searchsorted(nodes, target) - 1)
    i0 = max(0, min(i0 - (k - 1) // 2, n - 1 - k))
    xs = nodes[i0:i0 + k + 1]
    out = np.zeros_like(np.asarray(values[0], dtype=float).reshape(-1))
    for m in range(k + 1):
        w = 1.0
        for l in range(k + 1):
            if l != m:
                w *= (target - xs[l]) / (xs[m] - xs[l])
        out = out + w * np.asarray(values[i0 + m], dtype=float).reshape(-1)
    return out
