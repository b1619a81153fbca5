"""Configuration files and the built-in experiment preset.

The file format is INI-style key=value text with one section per
component. Every key is listed in ``SCHEMA`` below; unknown sections or
keys are rejected so typos fail loudly. Dotted overrides
(``section.key=value``) patch the parsed file before anything is built.

Keys
----
[model]   x0, z0, T, r, d, u, kappa, theta, delta, rho
[grid]    x_min, x_max, n_x, z_min, z_max, n_z, n_t
[solver]  cn_weight, corrector_passes, gamma_eps (or "auto"), lin_tol,
          rannacher_steps
[payoff]  kind = butterfly | call | put | capped_linear | tabulated
          butterfly: k1, k2, k3; call/put: strike; capped_linear: cap;
          tabulated: csv (path to two-column x,h file)
[sweep]   deltas (comma list), window_x_min, window_x_max
[mc]      n_paths, n_steps, rate_deltas (comma list), n_bound_paths
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .core import GridSpec, ModelParams, SolverConfig
from .payoff import PayoffSpec, load_tabulated_csv

__all__ = [
    "ConfigError",
    "RunSettings",
    "PAPER_PRESET",
    "load_config",
    "apply_overrides",
    "build_settings",
    "settings_to_flat_dict",
]


class ConfigError(ValueError):
    """Malformed configuration file, key, or override."""


# experiment preset: butterfly 90/100/110, band slopes 0.75/1.25 around a
# slowly mean-reverting variance level 0.04, 100 x 100 grid, 20 time steps
PAPER_PRESET: dict[str, dict[str, str]] = {
    "model": {
        "x0": "100", "z0": "0.04", "T": "0.25", "r": "0",
        "d": "0.75", "u": "1.25", "kappa": "15", "theta": "0.04",
        "delta": "0.05", "rho": "-0.9",
    },
    "grid": {
        "x_min": "0", "x_max": "200", "n_x": "100",
        "z_min": "0", "z_max": "0.12", "n_z": "100", "n_t": "20",
    },
    "solver": {
        "cn_weight": "0.5", "corrector_passes": "1", "gamma_eps": "auto",
        "lin_tol": "1e-10", "rannacher_steps": "2",
    },
    "payoff": {"kind": "butterfly", "k1": "90", "k2": "100", "k3": "110"},
    "sweep": {
        "deltas": "0.005,0.01,0.015,0.02,0.025,0.03,0.035,0.04,0.045,0.05",
        "window_x_min": "60", "window_x_max": "140",
    },
    "mc": {
        "n_paths": "100000", "n_steps": "200",
        "rate_deltas": "0.00125,0.0025,0.005,0.01,0.02,0.04",
        "n_bound_paths": "8",
    },
}

SCHEMA: dict[str, tuple[str, ...]] = {
    "model": ("x0", "z0", "T", "r", "d", "u", "kappa", "theta", "delta", "rho"),
    "grid": ("x_min", "x_max", "n_x", "z_min", "z_max", "n_z", "n_t"),
    "solver": ("cn_weight", "corrector_passes", "gamma_eps", "lin_tol",
               "rannacher_steps"),
    "payoff": ("kind", "k1", "k2", "k3", "strike", "cap", "csv"),
    "sweep": ("deltas", "window_x_min", "window_x_max"),
    "mc": ("n_paths", "n_steps", "rate_deltas", "n_bound_paths"),
}


@dataclass(frozen=True)
class RunSettings:
    model: ModelParams
    grid: GridSpec
    solver: SolverConfig
    payoff: PayoffSpec
    sweep_deltas: tuple[float, ...]
    window: tuple[float, float]
    mc_n_paths: int
    mc_n_steps: int
    mc_rate_deltas: tuple[float, ...]
    mc_n_bound_paths: int
    raw: dict[str, dict[str, str]]


def _merge(base: dict[str, dict[str, str]],
           update: dict[str, dict[str, str]]) -> dict[str, dict[str, str]]:
    out = {sec: dict(kv) for sec, kv in base.items()}
    for sec, kv in update.items():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown config section [{sec}]")
        for key, value in kv.items():
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown config key {sec}.{key}")
            out.setdefault(sec, {})[key] = value
    return out


def load_config(path: Optional[str] = None,
                overrides: Optional[list[str]] = None) -> RunSettings:
    """Parse a config file (or the built-in preset), apply overrides, build."""
    raw = {sec: dict(kv) for sec, kv in PAPER_PRESET.items()}
    if path is not None:
        parser = configparser.ConfigParser()
        parser.optionxform = str  # keys are case-sensitive
        try:
            found = parser.read(Path(path))
            if not found:
                raise ConfigError(f"config file not found: {path}")
            file_dict = {sec: dict(parser.items(sec)) for sec in parser.sections()}
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        raw = _merge(raw, file_dict)
    if overrides:
        raw = apply_overrides(raw, overrides)
    return build_settings(raw)


def apply_overrides(raw: dict[str, dict[str, str]],
                    overrides: list[str]) -> dict[str, dict[str, str]]:
    out = {sec: dict(kv) for sec, kv in raw.items()}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        dotted, value = item.split("=", 1)
        dotted = dotted.strip()
        if "." not in dotted:
            raise ConfigError(f"override key {dotted!r} is not of the form section.key")
        sec, key = dotted.split(".", 1)
        if sec not in SCHEMA or key not in SCHEMA[sec]:
            raise ConfigError(f"override references unknown key {sec}.{key}")
        out.setdefault(sec, {})[key] = value.strip()
    return out


def _as_float(raw, sec: str, key: str) -> float:
    try:
        return float(raw[sec][key])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad numeric value for {sec}.{key}") from exc


def _as_int(raw, sec: str, key: str) -> int:
    try:
        return int(raw[sec][key])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad integer value for {sec}.{key}") from exc


def _as_float_list(raw, sec: str, key: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in raw[sec][key].split(",") if tok.strip())
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad list value for {sec}.{key}") from exc


def _build_payoff(raw: dict[str, dict[str, str]]) -> PayoffSpec:
    kv = raw.get("payoff", {})
    kind = kv.get("kind", "butterfly")
    try:
        if kind == "butterfly":
            return PayoffSpec.butterfly(float(kv["k1"]), float(kv["k2"]), float(kv["k3"]))
        if kind == "call":
            return PayoffSpec.call(float(kv["strike"]))
        if kind == "put":
            return PayoffSpec.put(float(kv["strike"]))
        if kind == "capped_linear":
            return PayoffSpec.capped_linear(float(kv["cap"]))
        if kind == "tabulated":
            return load_tabulated_csv(kv["csv"])
    except ConfigError:
        raise
    except (KeyError, ValueError, OSError) as exc:
        raise ConfigError(f"bad payoff section: {exc}") from exc
    raise ConfigError(f"unknown payoff kind {kind!r}")


def build_settings(raw: dict[str, dict[str, str]]) -> RunSettings:
    model = ModelParams(
        x0=_as_float(raw, "model", "x0"), z0=_as_float(raw, "model", "z0"),
        T=_as_float(raw, "model", "T"), r=_as_float(raw, "model", "r"),
        d=_as_float(raw, "model", "d"), u=_as_float(raw, "model", "u"),
        kappa=_as_float(raw, "model", "kappa"), theta=_as_float(raw, "model", "theta"),
        delta=_as_float(raw, "model", "delta"), rho=_as_float(raw, "model", "rho"),
    )
    try:
        grid = GridSpec(
            x_min=_as_float(raw, "grid", "x_min"), x_max=_as_float(raw, "grid", "x_max"),
            n_x=_as_int(raw, "grid", "n_x"),
            z_min=_as_float(raw, "grid", "z_min"), z_max=_as_float(raw, "grid", "z_max"),
            n_z=_as_int(raw, "grid", "n_z"), n_t=_as_int(raw, "grid", "n_t"),
        )
        geps_raw = raw["solver"].get("gamma_eps", "auto").strip().lower()
        solver = SolverConfig(
            cn_weight=_as_float(raw, "solver", "cn_weight"),
            corrector_passes=_as_int(raw, "solver", "corrector_passes"),
            gamma_eps=None if geps_raw == "auto" else float(geps_raw),
            lin_tol=_as_float(raw, "solver", "lin_tol"),
            rannacher_steps=_as_int(raw, "solver", "rannacher_steps"),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    return RunSettings(
        model=model,
        grid=grid,
        solver=solver,
        payoff=_build_payoff(raw),
        sweep_deltas=_as_float_list(raw, "sweep", "deltas"),
        window=(_as_float(raw, "sweep", "window_x_min"),
                _as_float(raw, "sweep", "window_x_max")),
        mc_n_paths=_as_int(raw, "mc", "n_paths"),
        mc_n_steps=_as_int(raw, "mc", "n_steps"),
        mc_rate_deltas=_as_float_list(raw, "mc", "rate_deltas"),
        mc_n_bound_paths=_as_int(raw, "mc", "n_bound_paths"),
        raw=raw,
    )


def settings_to_flat_dict(settings: RunSettings) -> dict[str, str]:
    """Flat section.key -> value view of the resolved configuration."""
    return {f"{sec}.{key}": value
            for sec, kv in sorted(settings.raw.items())
            for key, value in sorted(kv.items())}
