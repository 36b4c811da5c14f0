"""JSON Schemas for every file the CLI writes, plus validation helpers."""

from __future__ import annotations

import csv
import io
import json
import math

import jsonschema

SWEEP_COLUMNS = (
    "problem",
    "psi",
    "upsilon",
    "lambda_or_theta",
    "eta",
    "n",
    "delta_mc",
    "delta_se",
    "delta_closed",
    "method",
)
TRAJECTORY_COLUMNS = ("seed", "policy", "step", "example_id", "metric", "pool_loss")

_number = {"type": "number"}
_nullable_number = {"type": ["number", "null"]}
_provenance = {
    "command": {"type": "string"},
    "seed": {"type": "integer", "minimum": 0},
    "config_hash": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
}

SWEEP_ROW = {
    "type": "object",
    "required": list(SWEEP_COLUMNS),
    "additionalProperties": False,
    "properties": {
        "problem": {"enum": ["regression", "hinge"]},
        "psi": _number,
        "upsilon": _nullable_number,
        "lambda_or_theta": _number,
        "eta": {"type": "number", "exclusiveMinimum": 0},
        "n": {"type": "integer", "minimum": 0},
        "delta_mc": _nullable_number,
        "delta_se": _nullable_number,
        "delta_closed": _nullable_number,
        "method": {"type": "string"},
    },
}

SWEEP = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["command", "seed", "config_hash", "columns", "rows"],
    "properties": {
        **_provenance,
        "columns": {"const": list(SWEEP_COLUMNS)},
        "rows": {"type": "array", "items": SWEEP_ROW},
    },
}

CHECK = {
    "type": "object",
    "required": ["name", "claim", "status", "z_scores", "details"],
    "properties": {
        "name": {"type": "string"},
        "claim": {"type": "string"},
        "status": {"enum": ["PASS", "FAIL", "INCONCLUSIVE", "INFO"]},
        "z_scores": {"type": "array", "items": _number},
        "details": {"type": "object"},
    },
}

VERIFY = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["command", "seed", "config_hash", "passed", "checks"],
    "properties": {**_provenance, "passed": {"type": "boolean"}, "checks": {"type": "array", "items": CHECK}},
}

TRAJECTORY_ROW = {
    "type": "object",
    "required": list(TRAJECTORY_COLUMNS),
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "policy": {"type": "string"},
        "step": {"type": "integer", "minimum": 0},
        "example_id": {"type": "integer", "minimum": -1},
        "metric": _number,
        "pool_loss": _nullable_number,
    },
}

TRAJECTORIES = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["command", "seed", "config_hash", "columns", "rows"],
    "properties": {
        **_provenance,
        "columns": {"const": list(TRAJECTORY_COLUMNS)},
        "rows": {"type": "array", "items": TRAJECTORY_ROW},
    },
}

RACE_SUMMARY = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["command", "seed", "config_hash", "problem", "checkpoint", "steps", "policies"],
    "properties": {
        **_provenance,
        "problem": {"enum": ["regression", "hinge"]},
        "metric": {"type": "string"},
        "checkpoint": {"type": "integer", "minimum": 0},
        "steps": {"type": "integer", "minimum": 0},
        "policies": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["mean_at_checkpoint", "mean_final"],
                "properties": {"mean_at_checkpoint": _number, "mean_final": _number},
            },
        },
        "comparisons": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["first", "second", "wins_first", "trials", "p_first_better", "p_second_better",
                             "early_advantage"],
                "properties": {
                    "first": {"type": "string"},
                    "second": {"type": "string"},
                    "wins_first": {"type": "integer", "minimum": 0},
                    "trials": {"type": "integer", "minimum": 0},
                    "p_first_better": {"type": "number", "minimum": 0, "maximum": 1},
                    "p_second_better": {"type": "number", "minimum": 0, "maximum": 1},
                    "early_advantage": {"type": ["string", "null"]},
                },
            },
        },
    },
}

COUNTEREXAMPLE = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["command", "seed", "config_hash", "report"],
    "properties": {
        **_provenance,
        "report": {
            "type": "object",
            "required": ["kind", "parameters", "measurements", "verdict"],
            "properties": {
                "kind": {"enum": ["theorem3", "hinge_low_psi"]},
                "parameters": {"type": "object"},
                "measurements": {"type": "object", "additionalProperties": _number},
                "verdict": {"type": "boolean"},
                "details": {"type": "object"},
            },
        },
    },
}

MANIFEST = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["command", "seed", "config_hash", "files"],
    "properties": {**_provenance, "files": {"type": "array", "items": {"type": "string"}}},
}


def dumps(doc: dict, schema: dict) -> str:
    """Validate ``doc`` and serialize it; non-finite numbers raise ValueError."""
    text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=False)
    jsonschema.validate(doc, schema)
    return text + "\n"


def csv_text(columns, rows) -> str:
    """CSV with a header row and LF line endings; non-finite numbers raise ValueError."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        out = []
        for c in columns:
            v = row[c]
            if isinstance(v, float) and not math.isfinite(v):
                raise ValueError(f"non-finite value in column {c!r}")
            out.append("" if v is None else v)
        writer.writerow(out)
    return buf.getvalue()
