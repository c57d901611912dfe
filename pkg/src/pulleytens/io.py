"""Model files (JSON), result serialization and shipped decks."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .model import Attachment, Member, ModelError, PhysicalNode, Segment, StructureModel
from .solver import Schedule, SolveConfig

SCHEMA_VERSION = 1


class ParseError(ValueError):
    pass


class SchemaError(ValueError):
    pass


_vec3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_ref = {
    "type": "object",
    "properties": {"node": {"type": "integer"}, "attachment": {"type": "integer", "minimum": 1}},
    "required": ["node", "attachment"],
    "additionalProperties": False,
}

MODEL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "nodes", "segments", "members"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "provenance": {"type": "string"},
        "notes": {"type": "array", "items": {"type": "string"}},
        "gravity": _vec3,
        "nodes": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object", "additionalProperties": False,
                "required": ["id", "position"],
                "properties": {
                    "id": {"type": "integer"},
                    "position": _vec3,
                    "fixed": {"type": "array", "items": {"enum": ["x", "y", "z"]},
                              "uniqueItems": True},
                    "mass": {"type": "number", "minimum": 0},
                    "attachments": {
                        "type": "array", "minItems": 1,
                        "items": {
                            "type": "object", "additionalProperties": False,
                            "required": ["radius", "side"],
                            "properties": {"radius": {"type": "number", "minimum": 0},
                                           "side": {"enum": [-1, 0, 1]}},
                        },
                    },
                },
            },
        },
        "segments": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object", "additionalProperties": False,
                "required": ["id", "kind", "start", "end"],
                "properties": {
                    "id": {"type": "integer"},
                    "kind": {"enum": ["bar", "string"]},
                    "start": _ref, "end": _ref,
                    "mass": {"type": "number", "minimum": 0},
                },
            },
        },
        "members": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object", "additionalProperties": False,
                "required": ["id", "segments", "E", "A", "rest_length"],
                "properties": {
                    "id": {"type": "integer"},
                    "segments": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
                    "E": {"type": "number", "exclusiveMinimum": 0},
                    "A": {"type": "number", "exclusiveMinimum": 0},
                    "rest_length": {"type": "number", "exclusiveMinimum": 0},
                },
            },
        },
        "loads": {
            "type": "array",
            "items": {"type": "object", "additionalProperties": False,
                      "required": ["node", "force"],
                      "properties": {"node": {"type": "integer"}, "force": _vec3}},
        },
        "solver": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "tol_rel": {"type": "number", "exclusiveMinimum": 0},
                "tol_abs": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "substeps": {"type": "integer", "minimum": 1},
                "line_search": {"type": "boolean"},
                "regularization": {"type": "boolean"},
                "schedules": {
                    "type": "object", "additionalProperties": False,
                    "properties": {
                        "loads": {"type": "array", "items": {
                            "type": "object", "additionalProperties": False,
                            "required": ["node", "start", "end"],
                            "properties": {"node": {"type": "integer"}, "start": _vec3,
                                           "end": _vec3}}},
                        "rest_lengths": {"type": "array", "items": {
                            "type": "object", "additionalProperties": False,
                            "required": ["member", "start", "end"],
                            "properties": {"member": {"type": "integer"},
                                           "start": {"type": "number", "exclusiveMinimum": 0},
                                           "end": {"type": "number", "exclusiveMinimum": 0}}}},
                        "supports": {"type": "array", "items": {
                            "type": "object", "additionalProperties": False,
                            "required": ["node", "start", "end"],
                            "properties": {"node": {"type": "integer"}, "start": _vec3,
                                           "end": _vec3}}},
                    },
                },
            },
        },
        "sweep": {
            "type": "object", "additionalProperties": False,
            "required": ["pulleys", "radii"],
            "properties": {
                "pulleys": {"type": "array", "items": _ref, "minItems": 1},
                "radii": {"type": "array", "items": {"type": "number", "minimum": 0},
                          "minItems": 1},
            },
        },
    },
}


@dataclass
class Deck:
    """A model file: the structure plus solver settings and optional sweep defaults."""

    model: StructureModel
    config: SolveConfig = field(default_factory=SolveConfig)
    schedule: Schedule = field(default_factory=Schedule)
    sweep_pulleys: list = field(default_factory=list)
    sweep_radii: list = field(default_factory=list)


def _parse_text(text: str, source: str = "<string>") -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _validate(data: dict):
    validator = jsonschema.Draft202012Validator(MODEL_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise SchemaError(f"{where}: {err.message}")


def deck_from_dict(data: dict) -> Deck:
    _validate(data)
    nodes = []
    for nd in data["nodes"]:
        atts = tuple(Attachment(float(a["radius"]), int(a["side"]))
                     for a in nd.get("attachments", [{"radius": 0.0, "side": 0}]))
        nodes.append(PhysicalNode(nd["id"], nd["position"], atts, frozenset(nd.get("fixed", [])),
                                  float(nd.get("mass", 0.0))))
    segments = [Segment(s["id"], (s["start"]["node"], s["start"]["attachment"]),
                        (s["end"]["node"], s["end"]["attachment"]), s["kind"],
                        float(s.get("mass", 0.0))) for s in data["segments"]]
    members = [Member(m["id"], m["segments"], float(m["E"]), float(m["A"]),
                      float(m["rest_length"])) for m in data["members"]]
    loads = [(ld["node"], ld["force"]) for ld in data.get("loads", [])]
    meta = {k: data[k] for k in ("name", "provenance", "notes") if k in data}
    model = StructureModel(nodes, segments, members, loads, data.get("gravity", (0.0, 0.0, 0.0)),
                           meta)
    ids = {nd.id for nd in model.nodes}
    for nid, _ in model.loads:
        if nid not in ids:
            raise ModelError(f"load on unknown node {nid}")

    sv = data.get("solver", {})
    config = SolveConfig(tol_rel=sv.get("tol_rel", 1e-6), tol_abs=sv.get("tol_abs"),
                         max_iter=sv.get("max_iter", 100), substeps=sv.get("substeps", 1),
                         line_search=sv.get("line_search", True),
                         regularization=sv.get("regularization", True))
    sch = sv.get("schedules", {})
    schedule = Schedule(
        substeps=config.substeps,
        loads=tuple((s["node"], tuple(s["start"]), tuple(s["end"])) for s in sch.get("loads", [])),
        rest_lengths=tuple((s["member"], float(s["start"]), float(s["end"]))
                           for s in sch.get("rest_lengths", [])),
        supports=tuple((s["node"], tuple(s["start"]), tuple(s["end"]))
                       for s in sch.get("supports", [])),
    )
    sw = data.get("sweep")
    pulleys = [(p["node"], p["attachment"]) for p in sw["pulleys"]] if sw else []
    radii = [float(r) for r in sw["radii"]] if sw else []
    return Deck(model, config, schedule, pulleys, radii)


def deck_to_dict(deck: Deck) -> dict:
    """Canonical dictionary form; loading it back gives an equal deck."""
    m = deck.model
    out = {"schema_version": SCHEMA_VERSION}
    for key in ("name", "provenance", "notes"):
        if key in m.meta:
            out[key] = m.meta[key]
    out["gravity"] = [float(v) for v in m.gravity]
    out["nodes"] = [{
        "id": nd.id,
        "position": [float(v) for v in nd.position],
        "fixed": [ax for ax in "xyz" if ax in nd.fixed],
        "mass": float(nd.mass),
        "attachments": [{"radius": float(a.radius), "side": int(a.side)} for a in nd.attachments],
    } for nd in m.nodes]
    out["segments"] = [{
        "id": s.id, "kind": s.kind,
        "start": {"node": s.start[0], "attachment": s.start[1]},
        "end": {"node": s.end[0], "attachment": s.end[1]},
        "mass": float(s.mass),
    } for s in m.segments]
    out["members"] = [{"id": mb.id, "segments": list(mb.segments), "E": float(mb.E),
                       "A": float(mb.A), "rest_length": float(mb.rest_length)} for mb in m.members]
    out["loads"] = [{"node": nid, "force": [float(v) for v in f]} for nid, f in m.loads]
    c, s = deck.config, deck.schedule
    out["solver"] = {
        "tol_rel": c.tol_rel, "tol_abs": c.tol_abs, "max_iter": c.max_iter,
        "substeps": c.substeps, "line_search": c.line_search, "regularization": c.regularization,
        "schedules": {
            "loads": [{"node": n, "start": [float(v) for v in a], "end": [float(v) for v in b]}
                      for n, a, b in s.loads],
            "rest_lengths": [{"member": i, "start": float(a), "end": float(b)}
                             for i, a, b in s.rest_lengths],
            "supports": [{"node": n, "start": [float(v) for v in a], "end": [float(v) for v in b]}
                         for n, a, b in s.supports],
        },
    }
    if deck.sweep_pulleys:
        out["sweep"] = {"pulleys": [{"node": n, "attachment": a} for n, a in deck.sweep_pulleys],
                        "radii": [float(r) for r in deck.sweep_radii]}
    return out


def _short(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return json.dumps(float(x))


def dumps_deck(deck: Deck) -> str:
    """Canonical deck text with shortest round-trip numbers."""
    return dumps_json(deck_to_dict(deck), number=_short)


def deck_path(name_or_path) -> Path:
    """Resolve a file path, or the name of a shipped deck such as ``tbar``."""
    p = Path(name_or_path)
    if p.exists():
        return p
    stem = p.stem if p.suffix == ".json" else p.name
    shipped = resources.files("pulleytens") / "decks" / f"{stem}.json"
    if shipped.is_file():
        return Path(str(shipped))
    raise FileNotFoundError(f"no model file or shipped deck named {name_or_path!r}")


def load_deck(path) -> Deck:
    p = deck_path(path)
    return deck_from_dict(_parse_text(p.read_text(), str(p)))


def load_model(path) -> StructureModel:
    return load_deck(path).model


def save_deck(deck: Deck, path):
    Path(path).write_text(dumps_deck(deck), newline="\n")


def save_model(model: StructureModel, path, config: Optional[SolveConfig] = None,
               schedule: Optional[Schedule] = None):
    deck = Deck(model, config or SolveConfig(), schedule or Schedule(config.substeps if config else 1))
    save_deck(deck, path)


def shipped_decks() -> list:
    folder = resources.files("pulleytens") / "decks"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


# -- result emission ---------------------------------------------------------

def fmt(x) -> str:
    """Number with 17 significant digits; integers and non-finite values spelled plainly."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def dumps_json(obj, indent=2, number=None) -> str:
    """JSON text in which every float carries 17 significant digits, unless
    ``number`` supplies another formatter; flat lists stay on one line."""
    number = number or fmt

    def emit(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(str(k))}: {emit(v, level + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, (list, tuple, np.ndarray)):
            seq = list(o)
            if not seq:
                return "[]"
            if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
                return "[" + ", ".join(emit(v, level + 1) for v in seq) + "]"
            return "[\n" + ",\n".join(pad + emit(v, level + 1) for v in seq) + "\n" + end + "]"
        if o is None:
            return "null"
        if isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, (bool, np.bool_)):
            return fmt(o)
        return number(o)

    return emit(obj, 0) + "\n"


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in r])
    Path(path).write_text(buf.getvalue(), newline="\n")
