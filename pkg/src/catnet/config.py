"""JSON run configuration: schema validation and construction of model objects."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .cir import CirParams
from .network import BranchingNetwork, validate_network
from .semigroup import MixedModel
from .simulator import SimConfig

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}

FIELD_SCHEMA = {
    "oneOf": [
        _NUM,
        {"type": "object", "additionalProperties": False, "required": ["kind", "value"],
         "properties": {"kind": {"const": "const"}, "value": _NUM}},
        {"type": "object", "additionalProperties": False, "required": ["kind", "slope"],
         "properties": {"kind": {"const": "affine"}, "intercept": _NUM,
                        "slope": {"type": "array", "items": _NUM}}},
        {"type": "object", "additionalProperties": False, "required": ["kind", "expr"],
         "properties": {"kind": {"const": "expr"}, "expr": {"type": "string", "minLength": 1}}},
    ]
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "d": {"type": "integer", "minimum": 1},
        "edges": {"type": "array", "items": {"type": "array", "items": {"type": "integer"},
                                             "minItems": 2, "maxItems": 2}},
        "gamma": {"type": "array", "items": FIELD_SCHEMA},
        "b": {"type": "array", "items": FIELD_SCHEMA},
        "x0": {"type": "array", "minItems": 1,
               "items": {"anyOf": [_NUM, {"type": "array", "items": _NUM, "minItems": 1}]}},
        "sim": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "scheme": {"enum": ["frozen", "euler"]},
                "n": {"type": "integer", "minimum": 1},
                "K": {"type": "integer", "minimum": 1},
                "T": _POS,
                "n_paths": {"type": "integer", "minimum": 1},
                "block_size": {"type": "integer", "minimum": 1},
                "record_every": {"type": "integer", "minimum": 1},
                "fine": {"type": "boolean"},
            },
        },
        "cir": {"type": "object", "additionalProperties": False, "required": ["b", "gamma"],
                "properties": {"b": _POS, "gamma": _POS}},
        "mixed": {
            "type": "object", "additionalProperties": False, "required": ["b0", "gamma0", "cat"],
            "properties": {
                "b0": {"type": "array", "items": _NUM},
                "gamma0": {"type": "array", "items": _POS},
                "cat": {"type": "object", "additionalProperties": False, "required": ["b", "gamma"],
                        "properties": {"b": _POS, "gamma": _POS}},
            },
        },
        "resolvent": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "lams": {"type": "array", "items": _POS, "minItems": 1},
                "tol": _POS,
                "functions": {"type": "array", "items": {"type": "string"}, "minItems": 1},
            },
        },
        "checks": {
            "type": "array",
            "items": {"type": "object", "additionalProperties": False, "required": ["check_id"],
                      "properties": {"check_id": {"type": "string"}, "params": {"type": "object"}}},
        },
    },
    "dependentRequired": {
        "d": ["edges", "gamma", "b"],
        "edges": ["d", "gamma", "b"],
        "gamma": ["d", "edges", "b"],
        "b": ["d", "edges", "gamma"],
    },
}


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` holds ``(json_path, message)`` pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{p}: {m}" for p, m in self.errors))


@dataclass
class RunConfig:
    raw: dict
    network: BranchingNetwork | None = None
    sim: SimConfig | None = None
    cir: CirParams | None = None
    mixed: MixedModel | None = None
    resolvent: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)


def _semantic_errors(doc: dict) -> list:
    errs = []
    if "d" in doc:
        d = doc["d"]
        for key in ("gamma", "b"):
            if len(doc[key]) != d:
                errs.append((f"$.{key}", f"expected {d} entries, found {len(doc[key])}"))
            for k, spec in enumerate(doc[key]):
                if isinstance(spec, dict) and spec.get("kind") == "affine" and len(spec["slope"]) != d:
                    errs.append((f"$.{key}[{k}].slope", f"expected {d} entries"))
        for k, e in enumerate(doc["edges"]):
            for v in e:
                if not 1 <= v <= d:
                    errs.append((f"$.edges[{k}]", f"vertex {v} outside 1..{d}"))
        if "x0" in doc:
            pts = doc["x0"] if isinstance(doc["x0"][0], list) else [doc["x0"]]
            for k, pt in enumerate(pts):
                if len(pt) != d:
                    errs.append((f"$.x0[{k}]" if len(pts) > 1 else "$.x0", f"expected {d} coordinates"))
    if "mixed" in doc and len(doc["mixed"]["b0"]) != len(doc["mixed"]["gamma0"]):
        errs.append(("$.mixed.gamma0", "b0 and gamma0 must have equal length"))
    return errs


def parse_config(doc: dict) -> RunConfig:
    """Validate a configuration document and build the objects it describes."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errs = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errs:
        msgs = []
        for e in errs:
            if e.validator in ("dependentRequired", "required"):
                name = e.message.split("'")[1]
                item = (e.json_path, f"missing required field '{name}'")
            else:
                item = (e.json_path, e.message)
            if item not in msgs:
                msgs.append(item)
        raise ConfigError(msgs)
    sem = _semantic_errors(doc)
    if sem:
        raise ConfigError(sem)
    rc = RunConfig(raw=doc)
    if "d" in doc:
        try:
            rc.network = BranchingNetwork(d=doc["d"], edges=doc["edges"], gamma=doc["gamma"], b=doc["b"])
        except ValueError as exc:
            raise ConfigError([("$", str(exc))]) from exc
        rep = validate_network(rc.network)
        if not rep.valid:
            raise ConfigError([("$.edges", v.detail) for v in rep.violations])
    sim = dict(doc.get("sim", {}))
    if "x0" in doc:
        sim["x0"] = doc["x0"]
    rc.sim = SimConfig(**sim)
    if "cir" in doc:
        rc.cir = CirParams(float(doc["cir"]["b"]), float(doc["cir"]["gamma"]))
    if "mixed" in doc:
        m = doc["mixed"]
        rc.mixed = MixedModel(tuple(float(v) for v in m["b0"]), tuple(float(v) for v in m["gamma0"]),
                              CirParams(float(m["cat"]["b"]), float(m["cat"]["gamma"])))
    rc.resolvent = dict(doc.get("resolvent", {}))
    rc.checks = list(doc.get("checks", []))
    return rc


def load_config(path) -> RunConfig:
    """Read and validate a JSON configuration file."""
    p = Path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError([("$", f"cannot read {p}: file not found")]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([("$", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")]) from exc
    if not isinstance(doc, dict):
        raise ConfigError([("$", "configuration must be a JSON object")])
    return parse_config(doc)
