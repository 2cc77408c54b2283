"""Experiment configuration: JSON schema, defaults and overrides."""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path

import jsonschema

from ..errors import ConfigError
from ..tempering import DEFAULT_CAP
from ..kernel import DENSE_LIMIT

ENV_PREFIX = "TEMPERLAB_"


def _obj(properties: dict, required=()) -> dict:
    return {
        "type": "object",
        "properties": properties,
        "required": list(required),
        "additionalProperties": False,
        "default": {},
    }


_positive = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = _obj({
    "name": {"type": "string", "pattern": r"^[A-Za-z0-9_.-]+$", "default": "experiment"},
    "model": _obj({
        "kind": {"enum": ["ising", "mixture"], "default": "ising"},
        "M": {"type": "integer", "minimum": 1, "default": 3},
        "alpha": {"type": "number", "minimum": 0, "default": 2.0},
        "lumped": {"type": "boolean", "default": True},
        "dim": {"type": "integer", "minimum": 1, "default": 1},
        "b": dict(_positive, default=1.0),
        "a": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1, "default": 0.5},
        "truncated": {"const": True, "default": True},
        "grid": _obj({
            "half_width": {"type": ["number", "null"], "exclusiveMinimum": 0, "default": None},
            "cells": {"type": "integer", "minimum": 2, "default": 2000},
        }),
        "radius": dict(_positive, default=1.0),
    }),
    "ladder": _obj({
        "kind": {"enum": ["linear", "geometric", "union", "explicit", "none"], "default": "linear"},
        "M": {"type": ["integer", "null"], "minimum": 1, "default": None},
        "betas": {"type": ["array", "null"], "items": {"type": "number"}, "default": None},
    }),
    "partition": _obj({
        "kind": {"enum": ["mode", "explicit"], "default": "mode"},
        "labels": {"type": ["array", "null"], "items": {"type": "integer", "minimum": 0},
                   "default": None},
    }),
    "run": _obj({
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1, "default": 0},
        "steps": {"type": "integer", "minimum": 0, "default": 10000},
        "replicas": {"type": "integer", "minimum": 1, "default": 1},
        "burn_in": {"type": "number", "minimum": 0, "exclusiveMaximum": 1, "default": 0.1},
        "chains": {"type": "array", "items": {"enum": ["mh", "sc", "st"]},
                   "uniqueItems": True, "default": ["mh", "sc", "st"]},
        "mc_samples": {"type": "integer", "minimum": 2, "default": 100000},
        "dump": {"type": "boolean", "default": False},
    }),
    "sweep": _obj({
        "M": {"type": "array", "items": {"type": "integer", "minimum": 1}, "default": []},
        "workers": {"type": "integer", "minimum": 1, "default": 1},
    }),
    "caps": _obj({
        "states": {"type": "integer", "minimum": 1, "default": DEFAULT_CAP},
        "dense_limit": {"type": "integer", "minimum": 1, "default": DENSE_LIMIT},
    }),
    "tolerances": _obj({
        "inequality": {"type": "number", "minimum": 0, "default": 1e-9},
    }),
})


def _fill_defaults(schema: dict, value):
    if schema.get("type") == "object" and isinstance(value, dict):
        for key, sub in schema["properties"].items():
            if key not in value and "default" in sub:
                value[key] = copy.deepcopy(sub["default"])
            if key in value:
                value[key] = _fill_defaults(sub, value[key])
    return value


def validate_config(raw: dict) -> dict:
    """Validate ``raw`` and return a copy with every default materialized."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid configuration at {where}: {exc.message}") from exc
    cfg = _fill_defaults(CONFIG_SCHEMA, copy.deepcopy(raw))
    _check_consistency(cfg)
    return cfg


def _check_consistency(cfg: dict) -> None:
    lad, part, model = cfg["ladder"], cfg["partition"], cfg["model"]
    if lad["kind"] == "explicit" and not lad["betas"]:
        raise ConfigError("an explicit ladder needs a non-empty 'betas' list")
    if lad["kind"] != "explicit" and lad["betas"] is not None:
        raise ConfigError("'betas' is only allowed with an explicit ladder")
    if part["kind"] == "explicit" and not part["labels"]:
        raise ConfigError("an explicit partition needs 'labels'")
    if model["kind"] == "mixture" and model["dim"] > 1 and part["kind"] == "explicit":
        raise ConfigError("explicit partitions need a finite (1-D grid) model")


def load_config(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"configuration is not valid JSON: {exc}") from exc
    return raw


def apply_overrides(raw: dict, seed=None, cap=None, workers=None) -> dict:
    """Command-line and environment overrides, applied before validation."""
    out = copy.deepcopy(raw)
    if seed is not None:
        out.setdefault("run", {})["seed"] = int(seed)
    if cap is not None:
        out.setdefault("caps", {})["states"] = int(cap)
    if workers is not None:
        out.setdefault("sweep", {})["workers"] = int(workers)
    return out


def env_default(flag: str, default=None):
    """Value of ``TEMPERLAB_<FLAG>`` if set, else ``default``."""
    return os.environ.get(ENV_PREFIX + flag.upper(), default)
