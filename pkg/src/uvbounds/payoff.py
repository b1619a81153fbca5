"""Terminal payoff functions and their evaluation on grids."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .core import GridSpec, ModelParams, SolverConfig, Surface

__all__ = [
    "PayoffSpec",
    "evaluate",
    "terminal_surface",
    "regularize",
    "load_tabulated_csv",
]

_KINDS = ("butterfly", "call", "put", "capped_linear", "tabulated")


@dataclass(frozen=True)
class PayoffSpec:
    """Description of a terminal payoff h(x).

    Use the classmethod constructors; the generic constructor only
    validates what they produce.
    """

    kind: str
    strikes: tuple[float, ...] = ()
    table_x: Optional[np.ndarray] = None
    table_h: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown payoff kind {self.kind!r}")
        if self.kind == "tabulated":
            x = np.asarray(self.table_x, dtype=float)
            h = np.asarray(self.table_h, dtype=float)
            if x.ndim != 1 or x.shape != h.shape or len(x) < 2:
                raise ValueError("tabulated payoff needs two equal-length 1D columns")
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(h))):
                raise ValueError("tabulated payoff values must be finite")
            if not np.all(np.diff(x) > 0):
                raise ValueError("tabulated payoff x-values must be strictly increasing")
            x.setflags(write=False)
            h.setflags(write=False)
            object.__setattr__(self, "table_x", x)
            object.__setattr__(self, "table_h", h)
        else:
            want = 3 if self.kind == "butterfly" else 1
            if len(self.strikes) != want:
                raise ValueError(f"{self.kind} payoff needs {want} strike(s)")
            if any(k <= 0 or not np.isfinite(k) for k in self.strikes):
                raise ValueError("strikes must be positive and finite")
            if self.kind == "butterfly":
                k1, k2, k3 = self.strikes
                if not (k1 < k2 < k3):
                    raise ValueError("butterfly strikes must satisfy k1 < k2 < k3")

    @classmethod
    def butterfly(cls, k1: float, k2: float, k3: float) -> "PayoffSpec":
        return cls("butterfly", (float(k1), float(k2), float(k3)))

    @classmethod
    def call(cls, strike: float) -> "PayoffSpec":
        return cls("call", (float(strike),))

    @classmethod
    def put(cls, strike: float) -> "PayoffSpec":
        return cls("put", (float(strike),))

    @classmethod
    def capped_linear(cls, cap: float) -> "PayoffSpec":
        return cls("capped_linear", (float(cap),))

    @classmethod
    def tabulated(cls, x, h) -> "PayoffSpec":
        return cls("tabulated", (), np.asarray(x, float), np.asarray(h, float))


def evaluate(spec: PayoffSpec, x: Union[float, np.ndarray]):
    """Payoff value h(x); vectorized over x.

    Tabulated payoffs use linear interpolation inside their x-range and
    constant extrapolation outside it.
    """
    xa = np.asarray(x, dtype=float)
    if spec.kind == "butterfly":
        k1, k2, k3 = spec.strikes
        out = (
            np.maximum(xa - k1, 0.0)
            - 2.0 * np.maximum(xa - k2, 0.0)
            + np.maximum(xa - k3, 0.0)
        )
    elif spec.kind == "call":
        out = np.maximum(xa - spec.strikes[0], 0.0)
    elif spec.kind == "put":
        out = np.maximum(spec.strikes[0] - xa, 0.0)
    elif spec.kind == "capped_linear":
        out = np.minimum(xa, spec.strikes[0])
    else:
        out = np.interp(xa, spec.table_x, spec.table_h)
    if np.isscalar(x) or (isinstance(x, np.ndarray) and x.ndim == 0):
        return float(out)
    return out


def terminal_surface(spec: PayoffSpec, grid: GridSpec) -> Surface:
    """Terminal condition on the grid: values[i, j] = h(x_i) for every j."""
    col = evaluate(spec, grid.x_nodes())
    values = np.repeat(np.asarray(col, float)[:, None], grid.n_z, axis=1)
    return Surface(values, grid, time_index=grid.n_t)


def regularize(
    spec: PayoffSpec,
    params: ModelParams,
    eps: float,
    grid: GridSpec,
    config: Optional[SolverConfig] = None,
) -> PayoffSpec:
    """Smooth a kinked payoff by evolving it for a short time ``eps``.

    Runs the leading-order worst-case solver backward over [T-eps, T] on a
    single slice frozen at z0 and tabulates the result; the output payoff
    is smooth at grid resolution and feeds back into any solver as a
    ``tabulated`` spec.
    """
    if not (0.0 < eps <= params.T / 10.0):
        raise ValueError(f"regularize: eps must lie in (0, T/10] (got {eps})")
    from .solver_p0p1 import solve_p0p1  # deferred: payoff <-> solver cycle

    config = config or SolverConfig()
    n_steps = max(1, int(round(eps / grid.dt(params.T))))
    sub_grid = GridSpec(
        x_min=grid.x_min, x_max=grid.x_max, n_x=grid.n_x,
        z_min=params.z0, z_max=params.z0, n_z=1, n_t=n_steps,
    )
    sub_params = params.replace(T=eps)
    sol = solve_p0p1(spec, sub_params, sub_grid, config)
    return PayoffSpec.tabulated(grid.x_nodes(), sol.p0.values[:, 0])


def load_tabulated_csv(path) -> PayoffSpec:
    """Read a tabulated payoff from a two-column CSV (x, h).

    A single non-numeric header row is tolerated and skipped.
    """
    xs: list[float] = []
    hs: list[float] = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            try:
                x, h = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                if not xs:
                    continue  # header row
                raise ValueError(f"bad tabulated payoff row: {row!r}")
            xs.append(x)
            hs.append(h)
    return PayoffSpec.tabulated(xs, hs)
