"""Run configuration: defaults, JSON config files, and flag overrides.

A config is a two-level document (section -> key -> value).  Files and
`--set section.key=value` overrides are merged onto the defaults below, with
overrides winning.  Unknown sections or keys are rejected so typos fail fast,
and values must match the default's type.
"""

from __future__ import annotations

import copy
import json

from .errors import ConfigError

# None-valued keys are optional and accept what their consumer validates.
DEFAULTS: dict[str, dict[str, object]] = {
    "synth": {
        "channels": 4,
        "fs": 64,
        "rhythm_hz": 10.0,
        "rhythm_amp": 1.0,
        "pink_level": 1.0,
        "signature_hz": 3.0,
        "signature_amp": 2.0,
        "ramp_s": 1800.0,
        "seed": 0,
        "duration_s": 86400.0,
        "seizures": 4,
        "seizure_len_s": 60.0,
        "onsets": None,
    },
    "dataset": {
        "preictal_minutes": 30.0,
        "interictal_gap_hours": 4.0,
        "merge_gap_minutes": 15.0,
        "min_seizures": 3,
        "max_seizures_per_day": 10.0,
        "min_inter_pre_ratio": 2.0,
        "segment_seconds": 30.0,
    },
    "stft": {
        "window_len": 256,
        "hop": 256,
    },
    "diffusion": {
        "steps": 50,
        "beta_start": 1e-4,
        "beta_end": 0.05,
    },
    "net": {
        "channels": 32,
        "layers": 12,
        "blocks": 3,
        "kernel": 3,
        "upsample_t": None,
    },
    "train": {
        "iters": 300,
        "batch": 8,
        "lr": 2e-4,
        "seed": 0,
    },
    "balance": {
        "method": "downsample",
        "window_s": 30.0,
        "stride_s": 5.0,
        "seed": 0,
        "checkpoint": None,
    },
    "clf": {
        "arch": "cnn",
        "scales": [1, 2, 4],
        "heads": 2,
        "epochs_max": 40,
        "patience": 5,
        "batch": 16,
        "lr": 1e-2,
        "seed": 0,
    },
    "alarm": {
        "k": 8,
        "n": 10,
        "refractory_s": 1800.0,
        "sph_s": 60.0,
        "sop_s": 1800.0,
        "threshold": 0.5,
    },
}


def default_config() -> dict:
    return copy.deepcopy(DEFAULTS)


def _check_value(dotted: str, default, value):
    if default is None or value is None:
        return value
    if isinstance(default, bool) or isinstance(value, bool):
        if isinstance(default, bool) and isinstance(value, bool):
            return value
        raise ConfigError(f"{dotted}: expected {type(default).__name__}, got {value!r}")
    if isinstance(default, int) and isinstance(value, int):
        return value
    if isinstance(default, float) and isinstance(value, (int, float)):
        return float(value)
    if isinstance(default, str) and isinstance(value, str):
        return value
    if isinstance(default, list) and isinstance(value, list):
        return value
    raise ConfigError(f"{dotted}: expected {type(default).__name__}, got {value!r}")


def merge_config(base: dict, updates: dict) -> dict:
    """Overlay a partial document onto `base`, validating keys and types."""
    out = copy.deepcopy(base)
    if not isinstance(updates, dict):
        raise ConfigError(f"config must be an object, got {type(updates).__name__}")
    for section, body in updates.items():
        if section not in out:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"section {section!r} must be an object")
        for key, value in body.items():
            if key not in out[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
            out[section][key] = _check_value(f"{section}.{key}",
                                             DEFAULTS[section][key], value)
    return out


def load_config(path=None) -> dict:
    """Defaults, optionally overlaid with a JSON config file."""
    config = default_config()
    if path is None:
        return config
    try:
        with open(path) as fh:
            document = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"config file {path} is not valid JSON: {err}") from None
    return merge_config(config, document)


def apply_overrides(config: dict, pairs: list[str]) -> dict:
    """Apply `section.key=value` overrides; values parse as JSON when they
    can and fall back to plain strings."""
    updates: dict[str, dict] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        dotted, raw = pair.split("=", 1)
        parts = dotted.split(".")
        if len(parts) != 2 or not all(parts):
            raise ConfigError(f"override key {dotted!r} must be section.key")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        updates.setdefault(parts[0], {})[parts[1]] = value
    return merge_config(config, updates)


def flatten(config: dict) -> list[tuple[str, object]]:
    return [(f"{section}.{key}", value)
            for section, body in sorted(config.items())
            for key, value in sorted(body.items())]


def describe_defaults() -> str:
    lines = ["config keys (defaults):"]
    lines += [f"  {dotted} = {json.dumps(value)}"
              for dotted, value in flatten(DEFAULTS)]
    return "\n".join(lines)


def resolved_json(config: dict) -> str:
    return json.dumps(config, indent=2, sort_keys=True)
