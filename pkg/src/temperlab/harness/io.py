"""Result records: tagged numbers, JSON schema, and the results directory layout."""

from __future__ import annotations

import csv
import json
import math
import platform
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import jsonschema
import numpy as np
import scipy

SCHEMA_VERSION = "1.0"
RNG_NAME = "numpy PCG64 seeded by SeedSequence(seed, spawn_key=(stream,))"

_tagged = {
    "type": "object",
    "properties": {
        "value": {"type": ["number", "integer", "null", "boolean"]},
        "kind": {"enum": ["exact", "formula", "monte_carlo"]},
        "se": {"type": ["number", "null"]},
    },
    "required": ["value", "kind"],
    "additionalProperties": False,
}

RESULT_SCHEMA = {
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "command": {"enum": ["gap", "bounds", "sweep", "sample", "verify"]},
        "config": {"type": "object"},
        "results": {"type": "object", "additionalProperties": {
            "anyOf": [_tagged, {"type": "array"}, {"type": "object"},
                      {"type": "string"}, {"type": "null"}, {"type": "boolean"}]}},
        "checks": {"type": "object", "additionalProperties": {"type": "boolean"}},
        "wall_clock_s": {"type": "number", "minimum": 0},
        "versions": {"type": "object"},
        "rng": {"type": "string"},
    },
    "required": ["schema_version", "command", "config", "results", "wall_clock_s", "versions"],
    "additionalProperties": False,
}


def _num(v):
    if v is None:
        return None
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    return v if math.isfinite(v) else None


def exact(v) -> dict:
    return {"value": _num(v), "kind": "exact"}


def formula(v) -> dict:
    return {"value": _num(v), "kind": "formula"}


def monte_carlo(v, se=None) -> dict:
    return {"value": _num(v), "kind": "monte_carlo", "se": _num(se)}


def versions() -> dict:
    try:
        own = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"temperlab": own, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def make_record(command: str, config: dict, results: dict, wall: float,
                checks: dict | None = None) -> dict:
    record = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config,
        "results": results,
        "wall_clock_s": float(wall),
        "versions": versions(),
        "rng": RNG_NAME,
    }
    if checks is not None:
        record["checks"] = {k: bool(v) for k, v in checks.items()}
    jsonschema.validate(record, RESULT_SCHEMA)
    return record


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, dict) and "value" in v:
        v = v["value"]
        if v is None:
            return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        # repr gives the shortest string that round-trips
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_csv_cell(row.get(c)) for c in columns])


def result_dir(out_root, name: str) -> Path:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S.%fZ")
    path = Path(out_root) / name / stamp
    path.mkdir(parents=True, exist_ok=False)
    return path


def write_result(out_root, record: dict, columns, rows) -> Path:
    """Create ``<out>/<name>/<timestamp>/`` with config, result and table files."""
    path = result_dir(out_root, record["config"].get("name", record["command"]))
    with open(path / "config.json", "w", encoding="utf-8") as fh:
        json.dump(record["config"], fh, indent=2)
    with open(path / "result.json", "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2)
    write_csv(path / "table.csv", columns, rows)
    return path
