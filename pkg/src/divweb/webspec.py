"""JSON file formats: web specs, tensor/boundary inputs and reports.

All documents carry ``schema_version`` and are validated against the
schemas below before use; reports emitted by the CLI validate against
``REPORT_SCHEMA`` so they can be consumed programmatically.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import jsonschema
import numpy as np

from .expr import Const, parse_expr
from .normalform import BoundaryData
from .region import Region
from .relativity import SplitMetric, builtin_spacetime, web_from_metric
from .web import SymTensorField, WebChart

__all__ = [
    "SpecFileError", "WebSpec", "load_webspec", "load_tensor_file",
    "load_boundary_file", "validate_report", "write_json_atomic",
    "SPEC_SCHEMA", "REPORT_SCHEMA", "TENSOR_SCHEMA", "BOUNDARY_SCHEMA",
]


class SpecFileError(Exception):
    """A spec/tensor/boundary file failed validation."""


_DOMAIN_SCHEMA = {
    "type": "object",
    "required": ["min", "max"],
    "properties": {
        "min": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "max": {"type": "array", "items": {"type": "number"}, "minItems": 1},
    },
}

_CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "quad_tol": {"type": "number", "exclusiveMinimum": 0},
        "samples": {"type": "integer", "minimum": 1},
    },
    "additionalProperties": False,
}

SPEC_SCHEMA = {
    "type": "object",
    "required": ["schema_version"],
    "properties": {
        "schema_version": {"const": 1},
        "dimension": {"type": "integer", "minimum": 1},
        "variables": {"type": "array", "items": {"type": "string"}},
        "blocks": {"type": "array",
                   "items": {"type": "array", "items": {"type": "integer"}}},
        "density": {"type": "string"},
        "domain": _DOMAIN_SCHEMA,
        "spacetime": {
            "type": "object",
            "required": ["name"],
            "properties": {
                "name": {"type": "string"},
                "params": {"type": "object",
                           "additionalProperties": {"type": "number"}},
            },
        },
        "config": _CONFIG_SCHEMA,
    },
    "oneOf": [
        {"required": ["dimension", "variables", "blocks", "density", "domain"]},
        {"required": ["spacetime"]},
    ],
}

TENSOR_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "variables", "blocks", "entries", "domain"],
    "properties": {
        "schema_version": {"const": 1},
        "variables": {"type": "array", "items": {"type": "string"}},
        "blocks": {"type": "array",
                   "items": {"type": "array", "items": {"type": "integer"}}},
        "entries": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["i", "j", "expr"],
                "properties": {
                    "i": {"type": "integer", "minimum": 1},
                    "j": {"type": "integer", "minimum": 1},
                    "expr": {"type": "string"},
                },
            },
        },
        "domain": _DOMAIN_SCHEMA,
    },
}

BOUNDARY_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "variables", "blocks", "per_block"],
    "properties": {
        "schema_version": {"const": 1},
        "variables": {"type": "array", "items": {"type": "string"}},
        "blocks": {"type": "array",
                   "items": {"type": "array", "items": {"type": "integer"}}},
        "per_block": {"type": "array", "items": {"type": "string"}},
    },
}

REPORT_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "command", "inputs", "tolerances", "results"],
    "properties": {
        "schema_version": {"const": 1},
        "command": {"type": "string"},
        "inputs": {"type": "object"},
        "tolerances": {
            "type": "object",
            "required": ["tol", "quad_tol"],
            "properties": {
                "tol": {"type": "number"},
                "quad_tol": {"type": "number"},
            },
        },
        "results": {"type": "object"},
    },
}


@dataclass(frozen=True)
class WebSpec:
    chart: WebChart
    config: dict
    raw: dict
    metric: SplitMetric | None = None

    @property
    def kind(self) -> str:
        return "spacetime" if self.metric is not None else "density"


def _load_json(path: str, schema: dict) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            document = json.load(handle)
    except OSError as err:
        raise SpecFileError(f"cannot read '{path}': {err}") from err
    except json.JSONDecodeError as err:
        raise SpecFileError(f"'{path}' is not valid JSON: {err}") from err
    try:
        jsonschema.validate(document, schema)
    except jsonschema.ValidationError as err:
        raise SpecFileError(f"'{path}' failed schema validation: "
                            f"{err.message}") from err
    return document


def _region_from(doc: dict) -> Region:
    lows, highs = doc["min"], doc["max"]
    if len(lows) != len(highs):
        raise SpecFileError("domain min/max lengths differ")
    if any(lo >= hi for lo, hi in zip(lows, highs)):
        raise SpecFileError("domain needs min < max on every axis")
    return Region(tuple(lows), tuple(highs))


def load_webspec(path: str) -> WebSpec:
    """Load and validate a web-spec file into a chart (plus config)."""
    doc = _load_json(path, SPEC_SCHEMA)
    config = doc.get("config", {})
    try:
        if "spacetime" in doc:
            st = doc["spacetime"]
            metric = builtin_spacetime(st["name"], st.get("params"))
            domain = _region_from(doc["domain"]) if "domain" in doc else None
            chart = web_from_metric(metric, domain)
            return WebSpec(chart, config, doc, metric)
        variables = tuple(doc["variables"])
        if len(variables) != doc["dimension"]:
            raise SpecFileError(f"'{path}': {doc['dimension']} variables "
                                f"expected, got {len(variables)}")
        chart = WebChart(
            variables,
            tuple(tuple(b) for b in doc["blocks"]),
            parse_expr(doc["density"], variables),
            _region_from(doc["domain"]),
        )
        return WebSpec(chart, config, doc)
    except SpecFileError:
        raise
    except Exception as err:
        raise SpecFileError(f"'{path}': {err}") from err


def load_tensor_file(path: str) -> tuple[SymTensorField, Region]:
    doc = _load_json(path, TENSOR_SCHEMA)
    try:
        variables = tuple(doc["variables"])
        blocks = tuple(tuple(b) for b in doc["blocks"])
        m = len(variables)
        given = {}
        for item in doc["entries"]:
            i, j = sorted((item["i"], item["j"]))
            given[(i, j)] = parse_expr(item["expr"], variables)

        def entry(k, l):
            return given.get((min(k, l), max(k, l)), Const(0.0))

        tensor = SymTensorField.from_entries(variables, blocks, entry)
        return tensor, _region_from(doc["domain"])
    except SpecFileError:
        raise
    except Exception as err:
        raise SpecFileError(f"'{path}': {err}") from err


def load_boundary_file(path: str, variables: tuple[str, ...],
                       blocks: tuple[tuple[int, ...], ...]) -> BoundaryData:
    doc = _load_json(path, BOUNDARY_SCHEMA)
    if tuple(doc["variables"]) != variables or \
            tuple(tuple(b) for b in doc["blocks"]) != blocks:
        raise SpecFileError(f"'{path}': variables/blocks do not match the "
                            "tensor file")
    try:
        exprs = tuple(parse_expr(text, variables) for text in doc["per_block"])
        return BoundaryData(variables, blocks, exprs)
    except Exception as err:
        raise SpecFileError(f"'{path}': {err}") from err


def validate_report(report: dict):
    jsonschema.validate(report, REPORT_SCHEMA)


def _to_jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, dict):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    return value


def write_json_atomic(document: dict, path: str | None):
    """Serialise a report, to stdout or atomically to ``path``."""
    payload = json.dumps(_to_jsonable(document), indent=2, sort_keys=True)
    if path is None:
        print(payload)
        return
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as handle:
        handle.write(payload + "\n")
    os.replace(tmp, path)
