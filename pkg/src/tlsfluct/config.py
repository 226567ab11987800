"""
Run configuration: JSON schema, preset merging and object construction.

Keys carry their units. Unknown keys are rejected at every level.
"""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import jsonschema

from .dynamics import PumpSchedule, TimeGrid
from .ensemble import Distribution, EnsembleConfig
from .errors import ConfigError
from .fieldmap import interdigital_field_map, read_field_csv
from .physics import PumpSetting, ResonatorModel
from .presets import PRESETS, RESONATORS, preset_config

_POS = {"type": "number", "exclusiveMinimum": 0}
_NUM = {"type": "number"}

_DIST = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind", "a"],
    "properties": {
        "kind": {"enum": list(Distribution.KINDS)},
        "a": _NUM,
        "b": {"type": ["number", "null"]},
    },
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "preset": {"enum": sorted(PRESETS)},
        "resonator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"enum": sorted(RESONATORS)},
                "f_r_tilde_hz": _POS,
                "gamma_ext_per_s": _POS,
                "gamma_int_bg_per_s": {"type": "number", "minimum": 0},
                "gamma0_qtls_per_s": _POS,
                "n_c": _POS,
                "alpha": _POS,
                "temperature_k": {"type": "number", "minimum": 0},
            },
        },
        "ensemble": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "bandwidth_hz": _POS,
                "density_per_ghz_um3": _POS,
                "volume_um3": _POS,
                "g_min_hz": {"type": "number", "minimum": 0},
                "dipole_magnitude_c_m": _DIST,
                "gamma1_per_s": _DIST,
                "ttls_count": _DIST,
                "ttls_delta_f_hz": _DIST,
                "gamma_switch_range_per_s": {"type": "array", "items": _POS,
                                             "minItems": 2, "maxItems": 2},
                "occupancy_bias": {"type": "number", "minimum": 0, "maximum": 1},
                "calibrate_to_gamma0": {"type": "boolean"},
                "eps_substrate_rel": _POS,
                "filling_factor": {"type": "number", "minimum": 0, "maximum": 1},
                "mode_volume_m3": _POS,
                "field": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["interdigital", "csv"]},
                        "path": {"type": "string"},
                        "finger_width_m": _POS,
                        "gap_m": _POS,
                        "edge_radius_m": _POS,
                        "exponent": _POS,
                    },
                },
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dt_s": _POS,
                "period_h": _POS,
                "n_periods": {"type": "integer", "minimum": 1},
                "separate_periods": {"type": "boolean"},
            },
        },
        "schedule": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "probe_power_dbm": _NUM,
                "attenuation_db": {"type": "number", "minimum": 0},
                "probe_with_pump": {"type": "boolean"},
                "settings": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["state"],
                        "properties": {
                            "state": {"enum": ["on", "off"]},
                            "source_dbm": _NUM,
                            "detuning_hz": _NUM,
                        },
                    },
                },
            },
        },
        "analysis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "segment_length_samples": {"type": ["integer", "null"], "minimum": 2},
                "overlap": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "window": {"enum": ["boxcar", "hann"]},
                "detrend": {"enum": [None, "constant", "linear"]},
                "noise_level_frequency_hz": _POS,
            },
        },
        "physics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "thermal_factor": {"type": "boolean"},
                "shift_sign": {"enum": [1, -1]},
            },
        },
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "threads": {"type": "integer", "minimum": 1},
        "chunk_size": {"type": "integer", "minimum": 1},
    },
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "field":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(raw: dict) -> None:
    """Schema check with the offending key path in the message."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {path}: {exc.message}") from None


def load_config(path=None, preset: str | None = None, overrides: dict | None = None) -> dict:
    """Resolve a full configuration.

    The preset (from the argument, else the file's ``preset`` key, else
    ``r1``) supplies defaults; the file and ``overrides`` are merged on top.
    """
    raw = {}
    if path is not None:
        p = Path(path)
        try:
            raw = json.loads(p.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {p}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON at line {exc.lineno}, column {exc.colno}: "
                              f"{exc.msg}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{p}: top level must be an object")
    validate(raw)
    name = preset or raw.get("preset") or "r1"
    cfg = _merge(preset_config(name), {k: v for k, v in raw.items() if k != "preset"})
    if overrides:
        cfg = _merge(cfg, overrides)
    cfg["preset"] = name
    validate(cfg)
    if cfg["schedule"].get("settings") == []:
        raise ConfigError("config error at schedule/settings: pump schedule is empty")
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def resonator_params(cfg: dict) -> dict:
    r = dict(cfg["resonator"])
    key = r.pop("preset", None)
    base = dict(RESONATORS[key]) if key else {}
    base.update(r)
    missing = [k for k in ("f_r_tilde_hz", "gamma_ext_per_s", "gamma_int_bg_per_s")
               if k not in base]
    if missing:
        raise ConfigError(f"config error at resonator: missing {', '.join(missing)}")
    return base


def build_resonator(cfg: dict) -> ResonatorModel:
    p = resonator_params(cfg)
    return ResonatorModel(p["f_r_tilde_hz"], p["gamma_ext_per_s"], p["gamma_int_bg_per_s"],
                          p.get("temperature_k", 0.0))


def build_ensemble_config(cfg: dict) -> EnsembleConfig:
    e = cfg["ensemble"]
    rp = resonator_params(cfg)
    target = None
    if e.get("calibrate_to_gamma0", True):
        if "gamma0_qtls_per_s" not in rp:
            raise ConfigError("config error at resonator: calibration needs gamma0_qtls_per_s")
        target = rp["gamma0_qtls_per_s"]
    try:
        return EnsembleConfig(
            bandwidth_qtls=e["bandwidth_hz"],
            density=e["density_per_ghz_um3"],
            volume_int=e["volume_um3"],
            g_min=e["g_min_hz"],
            seed=cfg["seed"],
            dipole_magnitude_dist=Distribution.from_dict(e["dipole_magnitude_c_m"]),
            gamma1_dist=Distribution.from_dict(e["gamma1_per_s"]),
            ttls_per_qtls_dist=Distribution.from_dict(e["ttls_count"]),
            delta_f_dist=Distribution.from_dict(e["ttls_delta_f_hz"]),
            gamma_switch_range=tuple(e["gamma_switch_range_per_s"]),
            occupancy_bias=e["occupancy_bias"],
            gamma0_target=target,
            eps_substrate_rel=e["eps_substrate_rel"],
            filling_factor=e["filling_factor"],
            mode_volume=e["mode_volume_m3"],
        )
    except ValueError as exc:
        raise ConfigError(f"config error at ensemble: {exc}") from None


def build_field(cfg: dict, base_dir=None):
    f = cfg["ensemble"]["field"]
    if f["kind"] == "csv":
        if "path" not in f:
            raise ConfigError("config error at ensemble/field: csv field needs a path")
        p = Path(f["path"])
        if base_dir is not None and not p.is_absolute():
            p = Path(base_dir) / p
        return read_field_csv(p)
    kw = {k: f[k] for k in ("finger_width_m", "gap_m", "edge_radius_m", "exponent") if k in f}
    return interdigital_field_map(
        finger_width=kw.get("finger_width_m", 5e-6), gap=kw.get("gap_m", 5e-6),
        edge_radius=kw.get("edge_radius_m", 20e-9), exponent=kw.get("exponent", 1.0))


def build_grid(cfg: dict) -> TimeGrid:
    g = cfg["grid"]
    try:
        return TimeGrid(g["dt_s"], g["period_h"] * 3600.0, g["n_periods"],
                        g.get("separate_periods", True))
    except ValueError as exc:
        raise ConfigError(f"config error at grid: {exc}") from None


def build_schedule(cfg: dict) -> PumpSchedule:
    s = cfg["schedule"]
    att = s.get("attenuation_db", 89.0)
    try:
        settings = tuple(
            PumpSetting(d["state"], d.get("source_dbm"), d.get("detuning_hz", 0.0), att)
            for d in s["settings"]
        )
        return PumpSchedule(settings, s.get("probe_power_dbm", -160.0),
                            s.get("probe_with_pump", True))
    except ValueError as exc:
        raise ConfigError(f"config error at schedule/settings: {exc}") from None
