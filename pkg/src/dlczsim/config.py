"""Strict JSON configuration handling for the command-line front end.

One document, fixed top-level sections, unknown keys rejected with a
dotted path to the offending field.  Numeric config values carry SI unit
suffixes in their key names where a unit applies.
"""

from __future__ import annotations

import dataclasses
import json
from typing import Any

import numpy as np

from .fitting import FixedParams
from .model import ModelParams
from .physics import (
    DecayModel,
    FilterChain,
    FilterStage,
    SequenceConfig,
    SpectroscopyParams,
)

__all__ = ["ConfigError", "load_config", "TOP_LEVEL_KEYS"]

TOP_LEVEL_KEYS = ("model", "grid", "montecarlo", "sequence", "filter",
                  "decay", "spectrum", "wavepacket", "timing", "hbt", "fit")


class ConfigError(ValueError):
    """Configuration problem, message prefixed with the field path."""


def _fail(path: str, message: str):
    raise ConfigError(f"{path}: {message}")


def _require_mapping(obj, path: str) -> dict:
    if not isinstance(obj, dict):
        _fail(path, f"expected an object, got {type(obj).__name__}")
    return dict(obj)


def _no_leftovers(obj: dict, path: str, known):
    for key in obj:
        _fail(f"{path}.{key}", f"unknown key (known: {', '.join(sorted(known))})")


def _number(obj: dict, key: str, path: str, default=None, required=False):
    if key not in obj:
        if required:
            _fail(f"{path}.{key}", "required")
        return default
    value = obj.pop(key)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(f"{path}.{key}", f"expected a number, got {value!r}")
    return float(value)

def _integer(obj: dict, key: str, path: str, default=None, required=False):
    if key not in obj:
        if required:
            _fail(f"{path}.{key}", "required")
        return default
    value = obj.pop(key)
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(f"{path}.{key}", f"expected an integer, got {value!r}")
    return value


def _string(obj: dict, key: str, path: str, default=None, choices=None):
    if key not in obj:
        return default
    value = obj.pop(key)
    if not isinstance(value, str):
        _fail(f"{path}.{key}", f"expected a string, got {value!r}")
    if choices is not None and value not in choices:
        _fail(f"{path}.{key}", f"must be one of {sorted(choices)}, got {value!r}")
    return value


def _boolean(obj: dict, key: str, path: str, default=None):
    if key not in obj:
        return default
    value = obj.pop(key)
    if not isinstance(value, bool):
        _fail(f"{path}.{key}", f"expected true/false, got {value!r}")
    return value


def parse_model(obj, path: str = "model") -> ModelParams:
    """Model parameters; omitted fields keep their calibrated defaults."""
    obj = _require_mapping(obj, path)
    base = ModelParams.defaults()
    fields = {}
    for name in ("p", "kappa1", "kappa2", "alpha1", "alpha2", "eta2", "b1", "b2"):
        value = _number(obj, name, path)
        if value is not None:
            fields[name] = value
    _no_leftovers(obj, path, ("p", "kappa1", "kappa2", "alpha1", "alpha2",
                              "eta2", "b1", "b2"))
    try:
        return dataclasses.replace(base, **fields)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def parse_grid(obj, path: str = "grid") -> tuple[str, np.ndarray]:
    """Sweep grid: explicit values or a log/linear range, over p or p1."""
    obj = _require_mapping(obj, path)
    axis = _string(obj, "axis", path, default="p", choices=("p", "p1"))
    known = ("axis", "values", "min", "max", "n_points", "spacing")
    if "values" in obj:
        raw = obj.pop("values")
        _no_leftovers(obj, path, known)
        if not isinstance(raw, list) or not raw:
            _fail(f"{path}.values", "expected a non-empty array")
        values = []
        for i, entry in enumerate(raw):
            if isinstance(entry, bool) or not isinstance(entry, (int, float)):
                _fail(f"{path}.values[{i}]", f"expected a number, got {entry!r}")
            values.append(float(entry))
        values = np.array(values)
    else:
        lo = _number(obj, "min", path, required=True)
        hi = _number(obj, "max", path, required=True)
        n = _integer(obj, "n_points", path, required=True)
        spacing = _string(obj, "spacing", path, default="log",
                          choices=("log", "linear"))
        _no_leftovers(obj, path, known)
        if n < 1:
            _fail(f"{path}.n_points", "must be at least 1")
        if hi < lo:
            _fail(f"{path}.max", "must not be below min")
        if spacing == "log":
            if lo <= 0.0:
                _fail(f"{path}.min", "log spacing needs a positive minimum")
            values = np.geomspace(lo, hi, n)
        else:
            values = np.linspace(lo, hi, n)
    for i, value in enumerate(values):
        if axis == "p" and not 0.0 <= value < 1.0:
            _fail(f"{path}.values[{i}]",
                  f"p={value:g} outside [0, 1); excitation probability "
                  "must stay below unity")
        if axis == "p1" and value <= 0.0:
            _fail(f"{path}.values[{i}]", f"p1={value:g} must be positive")
    return axis, values


def parse_montecarlo(obj, path: str = "montecarlo") -> dict:
    obj = _require_mapping(obj, path)
    out = {
        "n_trials": _integer(obj, "n_trials", path, default=1_000_000),
        "seed": _integer(obj, "seed", path),
        "detector_kind": _string(obj, "detector_kind", path,
                                 default="threshold",
                                 choices=("threshold", "linearized-rejection")),
        "batch_size": _integer(obj, "batch_size", path, default=1 << 20),
        "n_workers": _integer(obj, "n_workers", path, default=1),
        "tap": _string(obj, "tap", path),
    }
    _no_leftovers(obj, path, ("n_trials", "seed", "detector_kind",
                              "batch_size", "n_workers", "tap"))
    if out["n_workers"] < 1:
        _fail(f"{path}.n_workers", "must be at least 1")
    return out


def parse_sequence(obj, path: str = "sequence") -> SequenceConfig:
    obj = _require_mapping(obj, path)
    raw_phases = obj.pop("phases", None)
    phases = []
    if raw_phases is not None:
        if not isinstance(raw_phases, list):
            _fail(f"{path}.phases", "expected an array of {name, duration_s}")
        for i, entry in enumerate(raw_phases):
            entry = _require_mapping(entry, f"{path}.phases[{i}]")
            name = _string(entry, "name", f"{path}.phases[{i}]")
            duration = _number(entry, "duration_s", f"{path}.phases[{i}]",
                               required=True)
            _no_leftovers(entry, f"{path}.phases[{i}]", ("name", "duration_s"))
            if name is None:
                _fail(f"{path}.phases[{i}].name", "required")
            phases.append((name, duration))
    default = SequenceConfig.default()
    kwargs = {
        "phases": tuple(phases) if phases else default.phases,
        "trial_period": _number(obj, "trial_period_s", path,
                                default=default.trial_period),
        "trials_per_cycle": _integer(obj, "trials_per_cycle", path,
                                     default=default.trials_per_cycle),
        "cycle_rate": _number(obj, "cycle_rate_hz", path,
                              default=default.cycle_rate),
        "protocol_phase": _string(obj, "protocol_phase", path,
                                  default=default.protocol_phase),
    }
    _no_leftovers(obj, path, ("phases", "trial_period_s", "trials_per_cycle",
                              "cycle_rate_hz", "protocol_phase"))
    try:
        return SequenceConfig(**kwargs, metadata=default.metadata)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def parse_filter(obj, path: str = "filter") -> dict:
    obj = _require_mapping(obj, path)
    raw_stages = obj.pop("stages", None)
    if raw_stages is None:
        chain = FilterChain.default()
    else:
        if not isinstance(raw_stages, list):
            _fail(f"{path}.stages", "expected an array of stages")
        stages = []
        for i, entry in enumerate(raw_stages):
            entry = _require_mapping(entry, f"{path}.stages[{i}]")
            name = _string(entry, "name", f"{path}.stages[{i}]",
                           default=f"stage{i}")
            iso = _number(entry, "isolation_db", f"{path}.stages[{i}]",
                          required=True)
            trans = _number(entry, "transmission", f"{path}.stages[{i}]",
                            default=1.0)
            _no_leftovers(entry, f"{path}.stages[{i}]",
                          ("name", "isolation_db", "transmission"))
            try:
                stages.append(FilterStage(name, iso, trans))
            except ValueError as exc:
                raise ConfigError(f"{path}.stages[{i}]: {exc}") from exc
        chain = FilterChain(tuple(stages))
    out = {
        "chain": chain,
        "input_power_w": _number(obj, "input_power_w", path, default=10e-3),
        "wavelength_m": _number(obj, "wavelength_m", path, default=852e-9),
    }
    _no_leftovers(obj, path, ("stages", "input_power_w", "wavelength_m"))
    if out["wavelength_m"] <= 0.0:
        _fail(f"{path}.wavelength_m", "must be positive")
    return out


def parse_decay(obj, path: str = "decay") -> dict:
    obj = _require_mapping(obj, path)
    out = {
        "q0": _number(obj, "q0", path, default=0.25),
        "tau_s": _number(obj, "tau_s", path, default=3e-6),
        "t_max_s": _number(obj, "t_max_s", path, default=10e-6),
        "n_points": _integer(obj, "n_points", path, default=101),
        "fwhm_hz": _number(obj, "fwhm_hz", path),
    }
    _no_leftovers(obj, path, ("q0", "tau_s", "t_max_s", "n_points", "fwhm_hz"))
    try:
        out["model"] = DecayModel(q0=out["q0"], tau=out["tau_s"])
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return out


def parse_spectrum(obj, path: str = "spectrum") -> dict:
    obj = _require_mapping(obj, path)
    out = {
        "od": _number(obj, "od", path, default=1.4),
        "gamma_hz": _number(obj, "gamma_hz", path, default=5.8e6),
        "delta_max_hz": _number(obj, "delta_max_hz", path, default=40e6),
        "n_points": _integer(obj, "n_points", path, default=201),
    }
    _no_leftovers(obj, path, ("od", "gamma_hz", "delta_max_hz", "n_points"))
    try:
        out["params"] = SpectroscopyParams(od=out["od"], gamma=out["gamma_hz"])
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return out


def parse_wavepacket(obj, path: str = "wavepacket") -> dict:
    obj = _require_mapping(obj, path)
    out = {
        "width_s": _number(obj, "width_s", path, default=26e-9),
        "t_max_s": _number(obj, "t_max_s", path, default=100e-9),
        "n_points": _integer(obj, "n_points", path, default=201),
    }
    _no_leftovers(obj, path, ("width_s", "t_max_s", "n_points"))
    if out["width_s"] <= 0.0:
        _fail(f"{path}.width_s", "must be positive")
    return out


def parse_timing(obj, path: str = "timing") -> dict:
    obj = _require_mapping(obj, path)
    out = {
        "p1": _number(obj, "p1", path, default=5e-3),
        "pc": _number(obj, "pc", path),
    }
    _no_leftovers(obj, path, ("p1", "pc"))
    return out


def parse_hbt(obj, path: str = "hbt") -> dict:
    obj = _require_mapping(obj, path)
    out = {
        "p_min": _number(obj, "p_min", path, default=1e-3),
        "p_max": _number(obj, "p_max", path, default=0.2),
        "n_points": _integer(obj, "n_points", path, default=25),
        "n_max": _integer(obj, "n_max", path, default=60),
        "kind": _string(obj, "kind", path, default="linearized",
                        choices=("linearized", "threshold")),
    }
    _no_leftovers(obj, path, ("p_min", "p_max", "n_points", "n_max", "kind"))
    if not 0.0 < out["p_min"] <= out["p_max"] or out["p_max"] >= 1.0:
        _fail(path, "need 0 < p_min <= p_max < 1")
    if out["n_points"] < 1:
        _fail(f"{path}.n_points", "must be at least 1")
    return out


def parse_fit(obj, path: str = "fit") -> dict:
    obj = _require_mapping(obj, path)
    fixed_obj = _require_mapping(obj.pop("fixed", {}), f"{path}.fixed")
    fixed_fields = {}
    for name in ("alpha1", "b1", "b2", "eta2"):
        value = _number(fixed_obj, name, f"{path}.fixed")
        if value is not None:
            fixed_fields[name] = value
    _no_leftovers(fixed_obj, f"{path}.fixed", ("alpha1", "b1", "b2", "eta2"))
    try:
        fixed = dataclasses.replace(FixedParams(), **fixed_fields)
    except ValueError as exc:
        raise ConfigError(f"{path}.fixed: {exc}") from exc

    initial = obj.pop("initial", None)
    if initial is not None:
        if (not isinstance(initial, list) or len(initial) != 3 or
                any(isinstance(v, bool) or not isinstance(v, (int, float))
                    for v in initial)):
            _fail(f"{path}.initial",
                  "expected [kappa1, kappa2, alpha2] as numbers")
        initial = [float(v) for v in initial]

    observables = obj.pop("observables", None)
    if observables is not None:
        if (not isinstance(observables, list) or
                any(not isinstance(v, str) for v in observables)):
            _fail(f"{path}.observables", "expected an array of names")
        observables = tuple(observables)

    out = {
        "fixed": fixed,
        "initial": initial,
        "observables": observables if observables is not None else ("g12", "qc"),
        "weighted": _boolean(obj, "weighted", path, default=True),
        "n_starts": _integer(obj, "n_starts", path, default=8),
        "max_nfev": _integer(obj, "max_nfev", path),
    }
    _no_leftovers(obj, path, ("fixed", "initial", "observables", "weighted",
                              "n_starts", "max_nfev"))
    return out


_SECTION_PARSERS = {
    "model": parse_model,
    "grid": parse_grid,
    "montecarlo": parse_montecarlo,
    "sequence": parse_sequence,
    "filter": parse_filter,
    "decay": parse_decay,
    "spectrum": parse_spectrum,
    "wavepacket": parse_wavepacket,
    "timing": parse_timing,
    "hbt": parse_hbt,
    "fit": parse_fit,
}


def load_config(path: str) -> dict[str, Any]:
    """Read and validate a configuration file.

    Returns:
        Mapping from section name to its parsed value, only for sections
        present in the file.

    Raises:
        ConfigError: JSON syntax problems (with line and column) or any
            unknown/invalid field (with its dotted path).
    """
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    parsed = {}
    for key, value in raw.items():
        if key not in _SECTION_PARSERS:
            raise ConfigError(
                f"config: unknown key {key!r} (known: {', '.join(TOP_LEVEL_KEYS)})")
        parsed[key] = _SECTION_PARSERS[key](value)
    return parsed
