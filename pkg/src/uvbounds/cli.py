"""Command-line entry point.

One subcommand per process; every run writes its CSV outputs plus a
``manifest.json`` holding the fully resolved configuration, versions,
seed and timings, so any run can be reproduced from its manifest alone.

Exit codes: 0 success, 2 configuration problems (including bad arguments),
3 solver failures, 4 I/O failures. Failures leave a machine-readable
``error.json`` in the output directory when it is writable.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analysis import compare_bs, error_sweep, gamma_diagnostics
from .config import ConfigError, RunSettings, load_config, settings_to_flat_dict
from .core import SolverError, validate_params
from .csvio import surface_to_csv, write_csv
from .linsolve import LinearSolveError
from .montecarlo import coupling_rate_study, simulate_cir
from .solver_p0p1 import solve_p0p1
from .solver_pdelta import TAG_NAMES, solve_pdelta

__all__ = ["run", "main"]

_COMMANDS = (
    "solve-p0", "solve-p1", "solve-pdelta", "sweep-error",
    "simulate-bounds", "coupling-rate", "compare-bs", "gamma-diag",
)


_CONFIG_HELP = """\
configuration keys (INI sections; see also paper.cfg):
  [model]   x0 z0 T r d u kappa theta delta rho
  [grid]    x_min x_max n_x z_min z_max n_z n_t
  [solver]  cn_weight corrector_passes gamma_eps lin_tol rannacher_steps
  [payoff]  kind (butterfly k1 k2 k3 | call/put strike | capped_linear cap
            | tabulated csv)
  [sweep]   deltas window_x_min window_x_max
  [mc]      n_paths n_steps rate_deltas n_bound_paths
"""


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uvbounds",
        description="Worst-case option pricing under uncertain volatility "
                    "with slowly varying stochastic bounds.",
        epilog=_CONFIG_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, metavar="PATH",
                       help="configuration file (defaults to the built-in preset)")
        p.add_argument("--out", default="out", metavar="DIR",
                       help="output directory for CSVs and the manifest")
        p.add_argument("--seed", type=int, default=20240, metavar="U64",
                       help="seed for Monte Carlo subcommands")
        p.add_argument("--threads", type=int, default=1, metavar="N",
                       help="worker cap for per-delta parallelism")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       dest="overrides", help="override a config key (repeatable)")
        p.add_argument("--paper-exact", action="store_true",
                       help="use the unguarded three-candidate optimizer")
        if name == "solve-pdelta":
            p.add_argument("--export-controls", action="store_true",
                           help="also write the per-level control field CSV")
    return parser


def run(argv) -> int:
    try:
        args = _parser().parse_args(list(argv))
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2

    out_dir = Path(args.out)
    try:
        settings = load_config(args.config, args.overrides)
        violations = validate_params(settings.model)
        if violations:
            raise ConfigError("invalid model parameters: " + "; ".join(violations))
    except ConfigError as exc:
        return _fail(out_dir, 2, exc)

    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory: {exc}", file=sys.stderr)
        return 4

    started = time.perf_counter()
    try:
        results, outputs = _DISPATCH[args.command](settings, out_dir, args)
    except (SolverError, LinearSolveError) as exc:
        return _fail(out_dir, 3, exc)
    except ConfigError as exc:
        return _fail(out_dir, 2, exc)
    except ValueError as exc:  # invalid parameters/preconditions
        return _fail(out_dir, 2, exc)
    except OSError as exc:
        return _fail(out_dir, 4, exc)
    elapsed = time.perf_counter() - started

    manifest = {
        "subcommand": args.command,
        "argv": list(argv),
        "seed": args.seed,
        "threads": args.threads,
        "paper_exact": bool(args.paper_exact),
        "config": settings_to_flat_dict(settings),
        "versions": {
            "uvbounds": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "timings_s": {"total": elapsed},
        "outputs": outputs,
        "results": results,
    }
    try:
        with (out_dir / "manifest.json").open("w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        return _fail(out_dir, 4, exc)
    return 0


def _fail(out_dir: Path, code: int, exc: Exception) -> int:
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(f"error: {exc}", file=sys.stderr)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        with (out_dir / "error.json").open("w") as fh:
            json.dump(record, fh, indent=2)
            fh.write("\n")
    except OSError:
        pass  # error reporting must not mask the original failure
    return code


def main() -> None:
    sys.exit(run(sys.argv[1:]))


# -- subcommand bodies --------------------------------------------------------

def _cmd_solve_p0(settings: RunSettings, out: Path, args):
    sol = solve_p0p1(settings.payoff, settings.model, settings.grid, settings.solver)
    surface_to_csv(sol.p0, out / "p0_surface.csv")
    probe = sol.p0.value_at(settings.model.x0, settings.model.z0)
    return {"p0_at_x0_z0": probe}, ["p0_surface.csv"]


def _cmd_solve_p1(settings: RunSettings, out: Path, args):
    sol = solve_p0p1(settings.payoff, settings.model, settings.grid, settings.solver)
    surface_to_csv(sol.p0, out / "p0_surface.csv")
    surface_to_csv(sol.p1, out / "p1_surface.csv")
    probe = sol.p1.value_at(settings.model.x0, settings.model.z0)
    return {"p1_at_x0_z0": probe}, ["p0_surface.csv", "p1_surface.csv"]


def _cmd_solve_pdelta(settings: RunSettings, out: Path, args):
    sol = solve_pdelta(settings.payoff, settings.model, settings.grid,
                       settings.solver, paper_exact=args.paper_exact)
    surface_to_csv(sol.p_delta, out / "pdelta_surface.csv")
    outputs = ["pdelta_surface.csv"]
    if getattr(args, "export_controls", False):
        x = settings.grid.x_nodes()
        z = settings.grid.z_nodes()
        rows = (
            (n, x[i], z[j], sol.q_star_delta[n, i, j],
             TAG_NAMES[sol.candidate_tags[n, i, j]])
            for n in range(settings.grid.n_t)
            for i in range(settings.grid.n_x)
            for j in range(settings.grid.n_z)
        )
        write_csv(out / "pdelta_controls.csv", ["level", "x", "z", "q", "tag"], rows)
        outputs.append("pdelta_controls.csv")
    probe = sol.p_delta.value_at(settings.model.x0, settings.model.z0)
    return {"pdelta_at_x0_z0": probe,
            "interior_tag_fraction": sol.tag_fraction(2)}, outputs


def _cmd_compare_bs(settings: RunSettings, out: Path, args):
    sol = solve_p0p1(settings.payoff, settings.model, settings.grid, settings.solver)
    cmp_ = compare_bs(sol)
    rows = zip(cmp_.x, cmp_.p0, cmp_.bs_low, cmp_.bs_high, cmp_.dominated.astype(int))
    write_csv(out / "compare_bs.csv",
              ["x", "p0", "bs_low", "bs_high", "dominated"], rows)
    return {"vol_low": cmp_.vol_low, "vol_high": cmp_.vol_high,
            "all_dominated": bool(np.all(cmp_.dominated))}, ["compare_bs.csv"]


def _cmd_sweep_error(settings: RunSettings, out: Path, args):
    report = error_sweep(settings.payoff, settings.model, settings.sweep_deltas,
                         settings.grid, settings.solver, window=settings.window,
                         paper_exact=args.paper_exact, n_workers=max(1, args.threads))
    write_csv(
        out / "sweep.csv",
        ["delta", "error", "error_full", "sup_x", "sup_z", "runtime_s", "undershoot"],
        ((r.delta, r.error, r.error_full, r.sup_x, r.sup_z, r.runtime_s, r.undershoot)
         for r in report.records),
    )
    write_csv(
        out / "sweep_fit.csv",
        ["slope", "intercept", "r2", "n_fit", "window_x_min", "window_x_max"],
        [(report.slope, report.intercept, report.r2, report.n_fit,
          report.window[0], report.window[1])],
    )
    return {"slope": report.slope, "r2": report.r2,
            "n_fit": report.n_fit}, ["sweep.csv", "sweep_fit.csv"]


def _cmd_simulate_bounds(settings: RunSettings, out: Path, args):
    m = settings.model
    z = simulate_cir(m, settings.mc_n_steps, settings.mc_n_bound_paths, args.seed)
    times = np.arange(settings.mc_n_steps + 1) * (m.T / settings.mc_n_steps)
    rows = (
        (times[k], p, z[p, k], m.d * np.sqrt(z[p, k]), m.u * np.sqrt(z[p, k]))
        for p in range(z.shape[0])
        for k in range(z.shape[1])
    )
    write_csv(out / "bounds_paths.csv",
              ["time", "path_id", "z", "lower_bound", "upper_bound"], rows)
    return {"n_paths": int(z.shape[0])}, ["bounds_paths.csv"]


def _cmd_coupling_rate(settings: RunSettings, out: Path, args):
    study = coupling_rate_study(settings.model, settings.mc_rate_deltas,
                                settings.mc_n_paths, args.seed,
                                n_steps=settings.mc_n_steps)
    write_csv(
        out / "rate.csv",
        ["control", "delta", "estimate", "stderr"],
        ((f.control, d, e, s)
         for f in study.fits
         for d, e, s in zip(f.deltas, f.estimates, f.stderrs)),
    )
    write_csv(
        out / "rate_fit.csv",
        ["control", "slope", "slope_stderr", "intercept", "r2"],
        ((f.control, f.slope, f.slope_stderr, f.intercept, f.r2) for f in study.fits),
    )
    return {f.control: f.slope for f in study.fits}, ["rate.csv", "rate_fit.csv"]


def _cmd_gamma_diag(settings: RunSettings, out: Path, args):
    base = solve_p0p1(settings.payoff, settings.model, settings.grid, settings.solver)
    full = solve_pdelta(settings.payoff, settings.model, settings.grid,
                        settings.solver, paper_exact=args.paper_exact)
    diag = gamma_diagnostics(base, full)
    write_csv(
        out / "gamma_crossings.csv",
        ["z", "crossing_x"],
        ((diag.z_values[j], loc)
         for j in range(len(diag.z_values))
         for loc in diag.crossings[j]),
    )
    write_csv(
        out / "gamma_mismatch.csv",
        ["z", "mismatch_width", "n_nodes"],
        ((diag.z_values[j], diag.mismatch_width[j],
          int(diag.mismatch_mask[:, j].sum()))
         for j in range(len(diag.z_values))),
    )
    z0_cross = diag.crossings_at(settings.model.z0)
    return {"n_crossings_at_z0": len(z0_cross),
            "mismatch_width_at_z0": diag.width_at(settings.model.z0)}, \
        ["gamma_crossings.csv", "gamma_mismatch.csv"]


_DISPATCH = {
    "solve-p0": _cmd_solve_p0,
    "solve-p1": _cmd_solve_p1,
    "solve-pdelta": _cmd_solve_pdelta,
    "sweep-error": _cmd_sweep_error,
    "compare-bs": _cmd_compare_bs,
    "simulate-bounds": _cmd_simulate_bounds,
    "coupling-rate": _cmd_coupling_rate,
    "gamma-diag": _cmd_gamma_diag,
}
