"""Experiment configuration: JSON schema, defaults and validation."""
from __future__ import annotations

import copy
import hashlib
import json

import jsonschema

COMMANDS = ("pmle-cert", "laplace-cert", "marginal-cert", "eio-demo", "gauss-suite",
            "sobolev-rate")
MODEL_COMMANDS = ("pmle-cert", "laplace-cert", "marginal-cert", "eio-demo")

DEFAULT_TOLERANCES = {
    "calibration_C": 2.0,      # constant in front of the marginal bound terms
    "sampling_slack": 0.05,    # relative slack for sampled smoothness constants
    "ratio_max": 5.0,          # Gaussian comparison: MC / analytic bound
    "band_ratio_max": 5.0,
    "slope_tol": 0.15,         # Sobolev rate: |slope - target|
}

SCHEMA = {
    "type": "object",
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "model_spec": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["linear_gaussian", "logistic", "eio", "custom_grid"]},
                "payload": {"type": "object"},
            },
            "required": ["kind", "payload"],
        },
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "x": {"type": "number", "exclusiveMinimum": 0},
        "output_dir": {"type": "string"},
        "tolerances": {
            "type": "object",
            "properties": {k: {"type": "number", "exclusiveMinimum": 0}
                           for k in DEFAULT_TOLERANCES},
            "additionalProperties": False,
        },
        "options": {"type": "object"},
    },
    "required": ["command", "seeds"],
    "additionalProperties": False,
    "allOf": [{
        "if": {"properties": {"command": {"enum": list(MODEL_COMMANDS)}}},
        "then": {"required": ["model_spec"]},
    }],
}


class ConfigError(ValueError):
    pass


def validate(cfg: dict) -> dict:
    """Validate against :data:`SCHEMA` and fill defaults; errors name the JSON path."""
    v = jsonschema.Draft202012Validator(SCHEMA)
    errs = sorted(v.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errs:
        e = errs[0]
        raise ConfigError(f"config error at {e.json_path}: {e.message}")
    out = copy.deepcopy(cfg)
    out.setdefault("x", 3.0)
    out.setdefault("options", {})
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(out.get("tolerances", {}))
    out["tolerances"] = tol
    return out


def load_config(path_or_dict, command=None, seed_override=None, output_dir=None) -> dict:
    """Read, merge CLI overrides and validate a config."""
    if isinstance(path_or_dict, dict):
        cfg = copy.deepcopy(path_or_dict)
    else:
        try:
            with open(path_or_dict) as fh:
                cfg = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config error at $: invalid JSON ({e})") from e
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config error at $: top level must be an object")
    if command is not None:
        if cfg.get("command", command) != command:
            raise ConfigError(f"config error at $.command: {cfg['command']!r} does not match "
                              f"the requested command {command!r}")
        cfg["command"] = command
    if seed_override is not None:
        cfg["seeds"] = [int(seed_override)]
    if output_dir is not None:
        cfg["output_dir"] = str(output_dir)
    return validate(cfg)


def config_hash(cfg: dict) -> str:
    """SHA-256 of the canonical config, excluding the output location."""
    c = {k: v for k, v in cfg.items() if k != "output_dir"}
    return hashlib.sha256(json.dumps(c, sort_keys=True).encode()).hexdigest()
