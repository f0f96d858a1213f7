"""JSON schemas and file helpers shared by the CLI."""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema

_number = {"type": "number"}
_nonneg_int = {"type": "integer", "minimum": 0}

DISTRIBUTION_SCHEMA = {
    "type": "object",
    "required": ["truncation", "probs"],
    "properties": {
        "truncation": _nonneg_int,
        "probs": {"type": "array", "items": _number, "minItems": 1},
    },
}

HISTOGRAM_SCHEMA = {
    "type": "object",
    "required": ["counts"],
    "properties": {"counts": {"type": "array", "items": _nonneg_int, "minItems": 1}},
}

DETECTOR_SCHEMA = {
    "type": "object",
    "required": ["efficiency"],
    "properties": {"efficiency": _number, "dark_mean": _number},
    "additionalProperties": False,
}

SOURCE_SPEC_SCHEMA = {
    "oneOf": [
        DISTRIBUTION_SCHEMA,
        {
            "type": "object",
            "required": ["kind", "mean"],
            "properties": {"kind": {"const": "coherent"}, "mean": _number, "truncation": _nonneg_int},
            "additionalProperties": False,
        },
        {
            "type": "object",
            "required": ["kind", "m"],
            "properties": {"kind": {"const": "fock"}, "m": _nonneg_int, "truncation": _nonneg_int},
            "additionalProperties": False,
        },
    ]
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "truncation": {"type": "integer", "minimum": 1},
        "population_size": {"type": "integer"},
        "generations": {"type": "integer"},
        "mutation_scale": _number,
        "crossover_rate": _number,
        "chi2_percentile": _number,
        "seed": _nonneg_int,
        "tournament_size": {"type": "integer"},
        "elite": {"type": "integer"},
        "subtract_dof": {"type": "integer"},
    },
    "additionalProperties": False,
}


def read_json(path) -> object:
    """Load JSON; raises FileNotFoundError or json.JSONDecodeError untouched."""
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def validate(obj, schema, what: str):
    try:
        jsonschema.validate(obj, schema)
    except jsonschema.ValidationError as err:
        raise jsonschema.ValidationError(f"{what}: {err.message}") from None
    return obj


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj), encoding="utf-8")


def format_table(values, label: str) -> str:
    """Two-column plain-text table with a '#' header line."""
    lines = [f"# {label}\tprobability"]
    lines += [f"{i}\t{float(p):.17g}" for i, p in enumerate(values)]
    return "\n".join(lines) + "\n"
