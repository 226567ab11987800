"""
Named scenarios: resonator parameters, pump cycles and time grids.

Resonator values are the measured characterisation numbers of the two
lumped-element resonators (rates on the same numeric scale as the
photon-number bookkeeping). The presets reproduce simulated scenarios only;
measured time series cannot be regenerated.
"""
from __future__ import annotations

import copy

R1 = {
    "f_r_tilde_hz": 5.581779e9,
    "gamma_ext_per_s": 584e3,
    "gamma0_qtls_per_s": 88.2e3,
    "gamma_int_bg_per_s": 21.0e3,
    "n_c": 0.07,
    "alpha": 0.234,
    "temperature_k": 0.06,
}

R2 = {
    "f_r_tilde_hz": 6.081402e9,
    "gamma_ext_per_s": 547e3,
    "gamma0_qtls_per_s": 113.3e3,
    "gamma_int_bg_per_s": 41.6e3,
    "n_c": 0.039,
    "alpha": 0.21,
    "temperature_k": 0.06,
}

# R1 in a later cooldown, used for the single high-power run
R1_COOLDOWN2 = dict(R1, f_r_tilde_hz=5.556966e9, gamma_int_bg_per_s=35e3)

RESONATORS = {"r1": R1, "r2": R2, "r1-cooldown2": R1_COOLDOWN2}

DEFAULT_SCHEDULE = {
    "probe_power_dbm": -160.0,
    "attenuation_db": 89.0,
    "probe_with_pump": True,
    "settings": [
        {"state": "off"},
        {"state": "on", "source_dbm": -3.0, "detuning_hz": 2e6},
        {"state": "on", "source_dbm": -3.0, "detuning_hz": -2e6},
        {"state": "on", "source_dbm": 10.0, "detuning_hz": 2e6},
        {"state": "on", "source_dbm": 10.0, "detuning_hz": -2e6},
    ],
}

DEFAULT_GRID = {"dt_s": 520.0, "period_h": 120.0, "n_periods": 4, "separate_periods": True}

DEFAULT_ENSEMBLE = {
    "bandwidth_hz": 300e6,
    "density_per_ghz_um3": 400.0,
    "volume_um3": 157.0,
    "g_min_hz": 2e3,
    "dipole_magnitude_c_m": {"kind": "fixed", "a": 1.602176634e-29},
    "gamma1_per_s": {"kind": "loguniform", "a": 3e5, "b": 3e6},
    "ttls_count": {"kind": "poisson", "a": 4.0},
    "ttls_delta_f_hz": {"kind": "loguniform", "a": 1e2, "b": 1e5},
    "gamma_switch_range_per_s": [1e-6, 1e-2],
    "occupancy_bias": 0.5,
    "calibrate_to_gamma0": True,
    "eps_substrate_rel": 11.9,
    "filling_factor": 0.916,
    "mode_volume_m3": 9.692e-17,
    "field": {"kind": "interdigital", "finger_width_m": 5e-6, "gap_m": 5e-6,
              "edge_radius_m": 20e-9, "exponent": 1.0},
}

DEFAULT_ANALYSIS = {
    "segment_length_samples": None,
    "overlap": 0.5,
    "window": "boxcar",
    "detrend": None,
    "noise_level_frequency_hz": 1e-5,
}

DEFAULT_PHYSICS = {"thermal_factor": True, "shift_sign": 1}


def _base(resonator_key: str) -> dict:
    return {
        "resonator": {"preset": resonator_key},
        "ensemble": copy.deepcopy(DEFAULT_ENSEMBLE),
        "grid": dict(DEFAULT_GRID),
        "schedule": copy.deepcopy(DEFAULT_SCHEDULE),
        "analysis": dict(DEFAULT_ANALYSIS),
        "physics": dict(DEFAULT_PHYSICS),
        "seed": 1,
        "threads": 1,
        "chunk_size": 256,
    }


def _s2_highpower() -> dict:
    cfg = _base("r1-cooldown2")
    cfg["grid"] = {"dt_s": 520.0, "period_h": 60.0, "n_periods": 1, "separate_periods": True}
    cfg["schedule"]["settings"] = [
        {"state": "off"},
        {"state": "on", "source_dbm": 22.0, "detuning_hz": -2e6},
    ]
    return cfg


PRESETS = {
    "r1": {"description": "R1, five-setting pump cycle over four 120 h periods (simulated panels only)",
           "build": lambda: _base("r1")},
    "r2": {"description": "R2, five-setting pump cycle over four 120 h periods (simulated panels only)",
           "build": lambda: _base("r2")},
    "s2-highpower": {"description": "R1 second cooldown, pump off vs 22 dBm at -2 MHz, one 60 h period",
                     "build": _s2_highpower},
}


def preset_config(name: str) -> dict:
    """Fresh, fully populated run configuration for preset ``name``."""
    try:
        return PRESETS[name]["build"]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
