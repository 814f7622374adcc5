"""Named experiment setups: desk-scale arrays that run in seconds, plus a
single-user line-of-sight setup for beam-domain studies.

A preset is a config fragment; the CLI deep-merges it under the defaults and
then applies the user's config file and flags on top.
"""

import copy

ISO_PATHLOSS = {"median_gain_db": -35.3, "exponent": 3.76, "shadow_sigma_db": 4.0}
LOS_PATHLOSS = {"median_gain_db": -61.9, "exponent": 2.1, "shadow_sigma_db": 4.0}

DEFAULT_CONFIG = {
    "seed": 1,
    "ofdm": {
        "n_total": 256,
        "n_data": 64,
        "subcarrier_spacing_hz": 120e3,
        "qam_order": 64,
    },
    "scenario": {
        "kind": "iso",
        "n_antennas": 16,
        "n_users": 2,
        "distance_m": 25.0,
        "angles_deg": None,     # per-UE angles; required for kind: los
        "carrier_hz": 3.5e9,
        "n_taps": 100,
        "noise_power_dbm": -92.1,
        "pathloss": dict(ISO_PATHLOSS),
    },
    "chain": {
        "precoder": "zf",
        "backoff_db": 6.0,
        "crosstalk_in_db": None,
        "crosstalk_out_db": None,
        "user_weights": "equal",
        "noise": False,
    },
    "eval": {
        "n_symbols": 16,
        "per_subcarrier_evm": False,
    },
    "dpd": {
        "td_gmp": {"order": 7, "memory": 5, "cross_terms": 1,
                   "iterations": 2, "probe_symbols": 16},
        "fd_gmp": {"order": 7, "memory": 3, "cross_terms": 1},
        "fd_nn": {"memory": 3, "width": 15, "hidden_layers": 1},
        "fd_cnn": {"kernels": 20, "kernel_size": 3, "stride": 1},
    },
    "train": {
        "scheme": "fd_gmp",
        "batch_symbols": 8,
        "max_batches": 200,
        "lr": 1e-3,
        "eps_frac": 0.01,
    },
    "complexity": {
        "branch_counts": [1, 4, 16, 100, 256, 1024, 4096],
        "n_aux": 0,
    },
}

PRESETS = {
    "desk8": {
        "scenario": {"n_antennas": 8},
    },
    "desk16": {
        "scenario": {"n_antennas": 16},
    },
    "desk32": {
        "scenario": {"n_antennas": 32},
    },
    # 16-antenna single-user line-of-sight beam study
    "beam16": {
        "scenario": {
            "kind": "los",
            "n_antennas": 16,
            "n_users": 1,
            "angles_deg": [20.0],
            "carrier_hz": 30e9,
            "n_taps": 1,
            "pathloss": dict(LOS_PATHLOSS),
        },
    },
}


def preset_config(name):
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    deep_merge(cfg, PRESETS[name], path=f"preset {name}")
    return cfg


def deep_merge(base, overlay, path="config"):
    """Merge ``overlay`` into ``base`` in place; keys missing from ``base``
    are rejected so typos in config files fail loudly."""
    for key, val in overlay.items():
        if key not in base:
            raise KeyError(f"{path}: unknown key {key!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise TypeError(f"{path}.{key}: expected a mapping")
            deep_merge(base[key], val, f"{path}.{key}")
        else:
            base[key] = val
    return base
