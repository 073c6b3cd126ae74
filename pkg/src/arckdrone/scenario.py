"""Scenario files: schema, loading and per-trial world realization.

A scenario is a TOML (or JSON) document describing the room, the station,
the model parameters and one task template.  Loading validates every key
against a versioned schema; unknown keys and bad values raise
``ScenarioParseError`` carrying the line of the offending entry.

``realize(scenario, rng)`` turns a scenario into one random trial: the
``World`` plus the ground truth the trial is scored against.
"""

from __future__ import annotations

import json
import math
import re
import sys
from dataclasses import dataclass, field, fields as dc_fields, replace
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .clustering import ClusteringConfig
from .drone import CATALOG, FlightParams, LocalizationModel
from .environment import FIELD_KINDS, SceneObject, ScalarField, TimedEvent, World, field_from_function
from .geometry import FrameTransform, Point2, Rect
from .ground_station import PLATFORM_KINDS, PLATFORMS, PlatformModel, TouchdownDistribution
from .perception import OracleParams, SplitModel

SCHEMA_VERSION = 1
TEMPLATES = ("find_object", "seat", "state", "surveillance", "delivery", "compound")
COMPOUND_KINDS = ("actuate+actuate", "sense+actuate", "sense+sense")
TASK_KINDS = ("ID", "State", "Surveillance", "Actuation")


class ScenarioParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<scenario>"):
        self.message = message
        self.line = line
        self.source = source
        loc = f"{source}:{line}" if line is not None else source
        super().__init__(f"{loc}: {message}")


# --- schema -----------------------------------------------------------------
# each entry: key -> (type tag, default); REQUIRED marks mandatory keys

REQUIRED = object()

_FLOAT, _INT, _STR, _BOOL = "float", "int", "str", "bool"
_P2, _RECT = "point", "rect"
_OPT_STR, _OPT_FLOAT, _OPT_P2 = "str?", "float?", "point?"
_FLOATS, _STRS, _RECTS, _P2S = "float[]", "str[]", "rect[]", "point[]"
_STRMAP, _INTMAP = "map[str]", "map[int]"

SECTIONS: dict[str, dict[str, tuple[str, Any]]] = {
    "floorplan": {"width": (_FLOAT, REQUIRED), "height": (_FLOAT, REQUIRED),
                  "pixels_per_meter": (_FLOAT, 50.0)},
    "station": {"x": (_FLOAT, 0.4), "y": (_FLOAT, 0.4), "platform": (_STR, "grooved_funnel"),
                "connector": (_STR, "magnetic"), "swap_time": (_FLOAT, 10.0),
                "landing_time": (_FLOAT, 7.8), "offset_sigma": (_FLOAT, 0.02),
                "yaw_sd": (_FLOAT, 10.0), "max_offset_tolerance": (_OPT_FLOAT, None),
                "max_yaw_tolerance": (_OPT_FLOAT, None), "magazine": (_INTMAP, None)},
    "flight": {f.name: (_FLOAT, f.default) for f in dc_fields(FlightParams)},
    "localization": {f.name: (_FLOAT, f.default) for f in dc_fields(LocalizationModel)},
    "oracle": {f.name: (_FLOAT, f.default) for f in dc_fields(OracleParams) if f.name != "seed"},
    "segmentation": {"split_prob": (_FLOAT, 0.3), "max_splits": (_INT, 2),
                     "clutter_masks": (_INT, 0), "clutter_size": ("int[]", [3, 12])},
    "clustering": {"k": (_INT, 5), "ar_min": (_FLOAT, 0.67), "ar_max": (_FLOAT, 1.5),
                   "linkage": (_STR, "ward"), "base": (_STR, "hierarchical")},
    "command": {"kind": (_STR, REQUIRED), "target": (_STR, REQUIRED), "modality": (_OPT_STR, None),
                "adjective": (_OPT_STR, None), "payload": (_OPT_STR, None),
                "deadline": (_OPT_FLOAT, None), "location": (_OPT_P2, None)},
    "clarify": {"answers": (_STRMAP, {})},
    "decision": {"delta": (_FLOAT, 0.3), "threshold": (_OPT_FLOAT, None), "m": (_INT, 3),
                 "n": (_INT, 5)},
    "mission": {"capture_frames": (_INT, 3), "frame_time": (_FLOAT, 1.0),
                "sense_duration": (_FLOAT, 5.0), "sense_rate": (_FLOAT, 2.0),
                "match_radius": (_FLOAT, 0.5), "dedup_radius": (_FLOAT, 0.5),
                "safety_factor": (_FLOAT, 0.9), "perception_latency": (_FLOAT, 5.0),
                "decision_latency": (_FLOAT, 2.0), "delivery_tolerance": (_FLOAT, 0.3),
                "drop_sigma": (_FLOAT, 0.0757), "release_time": (_FLOAT, 2.0)},
}

ARRAYS: dict[str, dict[str, tuple[str, Any]]] = {
    "fields": {"kind": (_STR, REQUIRED), "base": (_FLOAT, REQUIRED), "gradient": (_FLOATS, [0.0, 0.0]),
               "cell_size": (_FLOAT, 0.5), "noise_sd": (_FLOAT, 0.0)},
    "objects": {"id": (_STR, REQUIRED), "cls": (_STR, REQUIRED), "rect": (_RECT, REQUIRED),
                "under_furniture": (_BOOL, False), "saliency": (_FLOAT, 1.0)},
    "variants": {"weight": (_FLOAT, 1.0), "adjective": (_OPT_STR, None), "target": (_OPT_STR, None)},
}

TASK_KEYS: dict[str, dict[str, tuple[str, Any]]] = {
    "find_object": {"target_cls": (_STR, REQUIRED), "target_size": (_FLOATS, REQUIRED),
                    "spots": (_RECTS, REQUIRED), "p_hidden": (_FLOAT, 0.0), "p_absent": (_FLOAT, 0.0),
                    "target_saliency": (_FLOAT, 1.0)},
    "seat": {"seat_ids": (_STRS, REQUIRED), "modality": (_STR, REQUIRED), "amplitude": (_FLOAT, REQUIRED),
             "radius": (_FLOAT, 0.4), "decoy_fraction": (_FLOAT, 0.3)},
    "state": {"appliance_id": (_STR, REQUIRED), "proxy_cls": (_STR, REQUIRED),
              "proxy_size": (_FLOATS, [0.3, 0.3]), "proxy_saliency": (_FLOAT, 1.0),
              "modality": (_STR, REQUIRED), "amplitude": (_FLOAT, REQUIRED), "radius": (_FLOAT, 0.4),
              "p_on": (_FLOAT, 0.5)},
    "surveillance": {"source_ids": (_STRS, REQUIRED), "proxy_cls": (_STR, REQUIRED),
                     "proxy_size": (_FLOATS, [0.3, 0.3]), "proxy_saliency": (_FLOAT, 1.0),
                     "modality": (_STR, REQUIRED), "amplitude": (_FLOAT, REQUIRED),
                     "radius": (_FLOAT, 0.4), "p_event": (_FLOAT, 0.7),
                     "onset_range": (_FLOATS, [10.0, 60.0]), "poll_interval": (_FLOAT, 10.0)},
    "delivery": {"target_cls": (_OPT_STR, None), "spots": (_RECTS, []), "target_size": (_FLOATS, [0.5, 0.5])},
    "compound": {"kind": (_STR, REQUIRED), "payloads": (_STRS, []), "target_cls": (_OPT_STR, None),
                 "spots": (_RECTS, []), "target_size": (_FLOATS, [0.5, 0.5]), "area_ids": (_STRS, []),
                 "modalities": (_STRS, []), "adjectives": (_STRS, []), "amplitudes": (_FLOATS, []),
                 "radius": (_FLOAT, 0.4), "decoys": (_BOOL, True)},
}

TOP_KEYS = {"schema_version", "name", "template", "description", "task", *SECTIONS, *ARRAYS}


# --- line anchoring -------------------------------------------------------------

def _line_of(text: str, path: tuple) -> int | None:
    """Best-effort line number of ``path`` (section, [index], key) in a TOML/JSON text."""
    lines = text.splitlines()
    if not path:
        return None
    start, end = 0, len(lines)
    head, rest = path[0], list(path[1:])
    idx = rest.pop(0) if rest and isinstance(rest[0], int) else None
    hdr = re.compile(r"^\s*\[\[?\s*" + re.escape(str(head)) + r"(\.[\w.]+)?\s*\]\]?\s*$")
    hits = [i for i, ln in enumerate(lines) if hdr.match(ln)]
    if hits:
        pick = hits[idx] if idx is not None and idx < len(hits) else hits[0]
        start = pick
        nxt = [i for i, ln in enumerate(lines) if i > pick and re.match(r"^\s*\[", ln)]
        end = nxt[0] if nxt else len(lines)
        if not rest:
            return pick + 1
    key = str(rest[-1]) if rest else str(head)
    pat = re.compile(r'^\s*"?' + re.escape(key) + r'"?\s*[=:]')
    for i in range(start, end):
        if pat.match(lines[i]):
            return i + 1
    # inline tables / JSON objects: any occurrence
    pat2 = re.compile(r'(^|[\s{,])"?' + re.escape(key) + r'"?\s*[=:]')
    for i, ln in enumerate(lines):
        if pat2.search(ln):
            return i + 1
    return start + 1 if hits else None


# --- value coercion ----------------------------------------------------------------

class _Bad(Exception):
    def __init__(self, msg, path):
        self.msg, self.path = msg, path


def _num(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise _Bad(f"expected a number, got {v!r}", path)
    if not math.isfinite(v):
        raise _Bad("value must be finite", path)
    return float(v)


def _coerce(tag: str, v, path):
    if tag.endswith("?"):
        return None if v is None else _coerce(tag[:-1], v, path)
    if tag == _FLOAT:
        return _num(v, path)
    if tag == _INT:
        if isinstance(v, bool) or not isinstance(v, int):
            raise _Bad(f"expected an integer, got {v!r}", path)
        return int(v)
    if tag == _STR:
        if not isinstance(v, str):
            raise _Bad(f"expected a string, got {v!r}", path)
        return v
    if tag == _BOOL:
        if not isinstance(v, bool):
            raise _Bad(f"expected true/false, got {v!r}", path)
        return v
    if tag in (_P2, _RECT, _FLOATS, "int[]"):
        if not isinstance(v, list):
            raise _Bad(f"expected an array, got {v!r}", path)
        out = [_coerce(_INT if tag == "int[]" else _FLOAT, x, path) for x in v]
        need = {_P2: 2, _RECT: 4}.get(tag)
        if need is not None and len(out) != need:
            raise _Bad(f"expected {need} numbers, got {len(out)}", path)
        if tag == _RECT and not (out[2] > out[0] and out[3] > out[1]):
            raise _Bad("rect needs x1 > x0 and y1 > y0", path)
        return out
    if tag in (_STRS, _RECTS, _P2S):
        if not isinstance(v, list):
            raise _Bad(f"expected an array, got {v!r}", path)
        inner = {_STRS: _STR, _RECTS: _RECT, _P2S: _P2}[tag]
        return [_coerce(inner, x, path) for x in v]
    if tag in (_STRMAP, _INTMAP):
        if not isinstance(v, dict):
            raise _Bad(f"expected a table, got {v!r}", path)
        inner = _STR if tag == _STRMAP else _INT
        return {str(k): _coerce(inner, x, path + (k,)) for k, x in v.items()}
    raise AssertionError(tag)


def _table(doc, schema, path) -> dict:
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise _Bad("expected a table", path)
    out = {}
    for k in doc:
        if k not in schema:
            raise _Bad(f"unknown field {k!r}", path + (k,))
    for k, (tag, default) in schema.items():
        if k in doc:
            out[k] = _coerce(tag, doc[k], path + (k,))
        elif default is REQUIRED:
            raise _Bad(f"missing required field {k!r}", path)
        else:
            out[k] = default.copy() if isinstance(default, (list, dict)) else default
    return out


# --- scenario object -----------------------------------------------------------------

@dataclass(frozen=True)
class FieldSpec:
    kind: str
    base: float
    gradient: tuple[float, float] = (0.0, 0.0)
    cell_size: float = 0.5
    noise_sd: float = 0.0


@dataclass(frozen=True)
class CommandVariant:
    weight: float
    adjective: str | None = None
    target: str | None = None


@dataclass
class Scenario:
    name: str
    template: str
    description: str
    floorplan: Rect
    transform: FrameTransform
    station: dict
    flight: FlightParams
    localization: LocalizationModel
    oracle: OracleParams
    split: SplitModel
    clustering: ClusteringConfig
    fields: tuple[FieldSpec, ...]
    objects: tuple[SceneObject, ...]
    command: dict
    variants: tuple[CommandVariant, ...]
    clarify: dict
    decision: dict
    mission: dict
    task: dict
    source: str = "<scenario>"
    text: str = ""

    @property
    def station_location(self) -> Point2:
        return Point2(self.station["x"], self.station["y"])

    def platform(self) -> PlatformModel:
        base = PLATFORMS[self.station["platform"]]
        kw = {}
        if self.station["max_offset_tolerance"] is not None:
            kw["max_offset_tolerance"] = self.station["max_offset_tolerance"]
        if self.station["max_yaw_tolerance"] is not None:
            kw["max_yaw_tolerance"] = self.station["max_yaw_tolerance"]
        return replace(base, landing_time_mean=self.station["landing_time"], **kw)

    def touchdown(self) -> TouchdownDistribution:
        return TouchdownDistribution(self.station["offset_sigma"], self.station["yaw_sd"])

    def magazine(self) -> dict[str, int]:
        m = self.station["magazine"]
        return dict(m) if m is not None else {name: 1 for name in CATALOG}

    def noise_sd(self, kind: str) -> float:
        for f in self.fields:
            if f.kind == kind:
                return f.noise_sd
        return 0.0

    def object(self, oid: str) -> SceneObject:
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(oid)


def _err(e: _Bad, text: str, source: str) -> ScenarioParseError:
    return ScenarioParseError(e.msg + (f" (at {'.'.join(map(str, e.path))})" if e.path else ""),
                              _line_of(text, e.path), source)


def parse_scenario(text: str, source: str = "<scenario>", fmt: str | None = None) -> Scenario:
    """Parse and validate scenario text (TOML unless ``fmt == 'json'``)."""
    if fmt is None:
        fmt = "json" if source.endswith(".json") or text.lstrip().startswith("{") else "toml"
    try:
        if fmt == "json":
            doc = json.loads(text)
        else:
            doc = tomllib.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioParseError(e.msg, e.lineno, source) from None
    except tomllib.TOMLDecodeError as e:
        m = re.search(r"line (\d+)", str(e))
        raise ScenarioParseError(str(e).split(" (at")[0], int(m.group(1)) if m else None, source) from None
    if not isinstance(doc, dict):
        raise ScenarioParseError("top level must be a table", 1, source)
    try:
        return _build(doc, text, source)
    except _Bad as e:
        raise _err(e, text, source) from None


def _build(doc: dict, text: str, source: str) -> Scenario:
    for k in doc:
        if k not in TOP_KEYS:
            raise _Bad(f"unknown field {k!r}", (k,))
    for k in ("schema_version", "name", "template", "floorplan", "command"):
        if k not in doc:
            raise _Bad(f"missing required field {k!r}", ())
    ver = _coerce(_INT, doc["schema_version"], ("schema_version",))
    if ver != SCHEMA_VERSION:
        raise _Bad(f"unsupported schema_version {ver} (expected {SCHEMA_VERSION})", ("schema_version",))
    name = _coerce(_STR, doc["name"], ("name",))
    template = _coerce(_STR, doc["template"], ("template",))
    if template not in TEMPLATES:
        raise _Bad(f"unknown template {template!r}", ("template",))
    desc = _coerce(_STR, doc.get("description", ""), ("description",))
    sec = {s: _table(doc.get(s), schema, (s,)) for s, schema in SECTIONS.items() if s != "command"}

    fp = sec["floorplan"]
    if fp["width"] <= 0 or fp["height"] <= 0:
        raise _Bad("floorplan width and height must be positive", ("floorplan", "width"))
    floor = Rect.from_bounds(0.0, 0.0, fp["width"], fp["height"])
    st = sec["station"]
    if st["platform"] not in PLATFORM_KINDS:
        raise _Bad(f"unknown platform {st['platform']!r}", ("station", "platform"))
    if st["connector"] not in ("magnetic", "mechanical"):
        raise _Bad(f"unknown connector {st['connector']!r}", ("station", "connector"))
    if not floor.contains_point(Point2(st["x"], st["y"])):
        raise _Bad("station lies outside the floorplan", ("station", "x"))
    for name_ in (st["magazine"] or {}):
        if name_ not in CATALOG:
            raise _Bad(f"unknown module {name_!r}", ("station", "magazine", name_))

    def build(cls, kw, path):
        try:
            return cls(**kw)
        except (ValueError, TypeError) as e:
            raise _Bad(str(e), path) from None

    flight = build(FlightParams, sec["flight"], ("flight",))
    loc = build(LocalizationModel, sec["localization"], ("localization",))
    oracle = build(OracleParams, sec["oracle"], ("oracle",))
    sg = sec["segmentation"]
    if len(sg["clutter_size"]) != 2:
        raise _Bad("clutter_size needs two integers", ("segmentation", "clutter_size"))
    split = build(SplitModel, {**sg, "clutter_size": tuple(sg["clutter_size"])}, ("segmentation",))
    clus = build(ClusteringConfig, sec["clustering"], ("clustering",))

    fields_raw = doc.get("fields", [])
    if not isinstance(fields_raw, list):
        raise _Bad("fields must be an array of tables", ("fields",))
    fspecs = []
    for i, f in enumerate(fields_raw):
        t = _table(f, ARRAYS["fields"], ("fields", i))
        if t["kind"] not in FIELD_KINDS:
            raise _Bad(f"unknown field kind {t['kind']!r}", ("fields", i, "kind"))
        if len(t["gradient"]) != 2:
            raise _Bad("gradient needs two numbers", ("fields", i, "gradient"))
        if t["noise_sd"] < 0 or t["cell_size"] <= 0:
            raise _Bad("noise_sd must be >= 0 and cell_size > 0", ("fields", i, "noise_sd"))
        fspecs.append(FieldSpec(t["kind"], t["base"], tuple(t["gradient"]), t["cell_size"], t["noise_sd"]))
    kinds = [f.kind for f in fspecs]
    if len(set(kinds)) != len(kinds):
        raise _Bad("duplicate field kind", ("fields",))

    objs_raw = doc.get("objects", [])
    if not isinstance(objs_raw, list):
        raise _Bad("objects must be an array of tables", ("objects",))
    objs = []
    for i, o in enumerate(objs_raw):
        t = _table(o, ARRAYS["objects"], ("objects", i))
        r = Rect.from_bounds(*t["rect"])
        if not floor.contains_rect(r):
            raise _Bad(f"object {t['id']!r} lies outside the floorplan", ("objects", i, "rect"))
        objs.append(SceneObject(t["id"], t["cls"], r, t["under_furniture"], t["saliency"]))
    ids = [o.id for o in objs]
    if len(set(ids)) != len(ids):
        raise _Bad("duplicate object id", ("objects",))

    cmd_doc = dict(doc["command"]) if isinstance(doc["command"], dict) else doc["command"]
    variants_raw = cmd_doc.pop("variants", []) if isinstance(cmd_doc, dict) else []
    cmd = _table(cmd_doc, SECTIONS["command"], ("command",))
    if cmd["kind"] not in TASK_KINDS:
        raise _Bad(f"unknown command kind {cmd['kind']!r}", ("command", "kind"))
    if cmd["kind"] == "Actuation" and cmd["payload"] is None and template != "compound":
        raise _Bad("Actuation commands need a payload", ("command", "payload"))
    variants = []
    for i, v in enumerate(variants_raw):
        t = _table(v, ARRAYS["variants"], ("command.variants", i))
        if t["weight"] < 0:
            raise _Bad("variant weight must be >= 0", ("command.variants", i, "weight"))
        variants.append(CommandVariant(t["weight"], t["adjective"], t["target"]))

    task_raw = doc.get("task", {})
    task = _table(task_raw, TASK_KEYS[template], ("task",))
    _check_task(template, task, ids, kinds, floor)
    mission = sec["mission"]
    if mission["capture_frames"] < 1 or mission["sense_rate"] <= 0:
        raise _Bad("capture_frames >= 1 and sense_rate > 0 required", ("mission",))
    return Scenario(name, template, desc, floor, FrameTransform(fp["pixels_per_meter"]), st, flight, loc,
                    oracle, split, clus, tuple(fspecs), tuple(objs), cmd, tuple(variants), sec["clarify"],
                    sec["decision"], mission, task, source, text)


def _check_task(template, task, ids, kinds, floor):
    def need_ids(key):
        for oid in task[key]:
            if oid not in ids:
                raise _Bad(f"unknown object id {oid!r}", ("task", key))

    def need_kind(kind, key):
        if kind not in FIELD_KINDS:
            raise _Bad(f"unknown field kind {kind!r}", ("task", key))
        if kind not in kinds:
            raise _Bad(f"no [[fields]] entry for {kind!r}", ("task", key))

    for key in ("spots",):
        for r in task.get(key, []):
            if not floor.contains_rect(Rect.from_bounds(*r)):
                raise _Bad("spot lies outside the floorplan", ("task", key))
    if template == "seat":
        need_ids("seat_ids")
        need_kind(task["modality"], "modality")
        if len(task["seat_ids"]) < 1:
            raise _Bad("need at least one seat", ("task", "seat_ids"))
    elif template == "state":
        if task["appliance_id"] not in ids:
            raise _Bad(f"unknown object id {task['appliance_id']!r}", ("task", "appliance_id"))
        need_kind(task["modality"], "modality")
    elif template == "surveillance":
        need_ids("source_ids")
        need_kind(task["modality"], "modality")
        lo, hi = task["onset_range"]
        if not 0 <= lo <= hi:
            raise _Bad("onset_range needs 0 <= lo <= hi", ("task", "onset_range"))
        if task["poll_interval"] <= 0:
            raise _Bad("poll_interval must be positive", ("task", "poll_interval"))
    elif template == "find_object":
        if not task["spots"]:
            raise _Bad("need at least one spot", ("task", "spots"))
    elif template == "compound":
        if task["kind"] not in COMPOUND_KINDS:
            raise _Bad(f"unknown compound kind {task['kind']!r}", ("task", "kind"))
        need_ids("area_ids")
        for m in task["modalities"]:
            need_kind(m, "modalities")
        k = task["kind"]
        if k == "actuate+actuate" and len(task["payloads"]) != 2:
            raise _Bad("actuate+actuate needs two payloads", ("task", "payloads"))
        if k == "sense+actuate" and (len(task["payloads"]) != 1 or len(task["modalities"]) != 1):
            raise _Bad("sense+actuate needs one modality and one payload", ("task", "payloads"))
        if k == "sense+sense" and len(task["modalities"]) != 2:
            raise _Bad("sense+sense needs two modalities", ("task", "modalities"))
        if k != "actuate+actuate" and len(task["amplitudes"]) != len(task["modalities"]):
            raise _Bad("one amplitude per modality", ("task", "amplitudes"))
        if k != "actuate+actuate" and len(task["adjectives"]) != len(task["modalities"]):
            raise _Bad("one adjective per modality", ("task", "adjectives"))
        if k != "actuate+actuate" and not task["area_ids"]:
            raise _Bad("sensing phases need area_ids", ("task", "area_ids"))
        if k != "sense+sense" and (not task["target_cls"] and k == "actuate+actuate"):
            raise _Bad("actuate+actuate needs target_cls", ("task", "target_cls"))


def load_scenario(path: str | Path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ScenarioParseError(f"cannot read scenario: {e.strerror}", None, str(p)) from None
    return parse_scenario(text, str(p), "json" if p.suffix == ".json" else "toml")


def builtin_names() -> list[str]:
    d = resources.files("arckdrone") / "scenarios"
    return sorted(f.name[:-5] for f in d.iterdir() if f.name.endswith(".toml"))


def builtin_path(name: str) -> Path:
    return Path(str(resources.files("arckdrone") / "scenarios" / f"{name}.toml"))


def resolve(name_or_path: str) -> Scenario:
    """Load a shipped scenario by name or any scenario file by path."""
    p = Path(name_or_path)
    if p.suffix in (".toml", ".json") or p.exists():
        return load_scenario(p)
    if name_or_path in builtin_names():
        return load_scenario(builtin_path(name_or_path))
    raise ScenarioParseError(f"no scenario file or shipped scenario named {name_or_path!r}")


# --- realization -------------------------------------------------------------------

@dataclass(frozen=True)
class Truth:
    """One ground-truth positive: where it is and from when it holds."""

    location: Point2
    active_from: float = 0.0
    label: str = ""


@dataclass
class Realization:
    world: World
    truths: tuple[Truth, ...]
    variant: CommandVariant | None = None
    info: dict = field(default_factory=dict)


def _fields(sc: Scenario) -> dict[str, ScalarField]:
    W, H = sc.floorplan.width, sc.floorplan.height
    out = {}
    for f in sc.fields:
        gx, gy = f.gradient
        out[f.kind] = field_from_function(f.kind, lambda x, y, f=f, gx=gx, gy=gy: f.base + gx * x + gy * y,
                                          W, H, f.cell_size)
    return out


def _place(rng, spot: list[float], size, floor: Rect) -> Rect:
    x0, y0, x1, y1 = spot
    w, h = min(size[0], x1 - x0), min(size[1], y1 - y0)
    cx = x0 + w / 2 + rng.random() * (x1 - x0 - w)
    cy = y0 + h / 2 + rng.random() * (y1 - y0 - h)
    return Rect.from_bounds(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)


def _proxy_rect(center: Point2, size, floor: Rect) -> Rect:
    w, h = size
    x0 = min(max(center.x - w / 2, floor.min.x), floor.max.x - w)
    y0 = min(max(center.y - h / 2, floor.min.y), floor.max.y - h)
    return Rect.from_bounds(x0, y0, x0 + w, y0 + h)


def pick_variant(sc: Scenario, rng) -> CommandVariant | None:
    if not sc.variants:
        return None
    w = np.array([v.weight for v in sc.variants], dtype=float)
    if w.sum() <= 0:
        return sc.variants[0]
    return sc.variants[int(rng.choice(len(w), p=w / w.sum()))]


def _decoy_bumps(rng, sc, ids, skip, kind, amp, radius, frac):
    out = []
    for oid in ids:
        if oid == skip:
            continue
        c = sc.object(oid).footprint.center
        a = amp * frac * rng.uniform(-1.0, 1.0)
        if a != 0:
            out.append(TimedEvent(0.0, c, kind, a, radius, description=f"decoy:{oid}"))
    return out


def realize(sc: Scenario, rng: np.random.Generator) -> Realization:
    """Draw one trial's world and ground truth from the scenario."""
    T = sc.task
    fields_ = _fields(sc)
    objs = list(sc.objects)
    events: list[TimedEvent] = []
    truths: list[Truth] = []
    info: dict = {}
    variant = pick_variant(sc, rng)
    tpl = sc.template
    if tpl == "find_object":
        spot = T["spots"][int(rng.integers(len(T["spots"])))]
        r = _place(rng, spot, T["target_size"], sc.floorplan)
        absent = rng.random() < T["p_absent"]
        hidden = rng.random() < T["p_hidden"]
        if not absent:
            objs.append(SceneObject(f"target/{T['target_cls']}", T["target_cls"], r, hidden,
                                    T["target_saliency"]))
            truths.append(Truth(r.center, 0.0, T["target_cls"]))
        info.update(hidden=bool(hidden), absent=bool(absent))
    elif tpl == "seat":
        ids = T["seat_ids"]
        pick = ids[int(rng.integers(len(ids)))]
        c = sc.object(pick).footprint.center
        events.append(TimedEvent(0.0, c, T["modality"], T["amplitude"], T["radius"], description=f"source:{pick}"))
        events += _decoy_bumps(rng, sc, ids, pick, T["modality"], T["amplitude"], T["radius"],
                               T["decoy_fraction"])
        truths.append(Truth(c, 0.0, pick))
        info["seat"] = pick
    elif tpl == "state":
        on = rng.random() < T["p_on"]
        app = sc.object(T["appliance_id"])
        c = app.footprint.center
        if on:
            events.append(TimedEvent(0.0, c, T["modality"], T["amplitude"], T["radius"], description="on"))
            objs.append(SceneObject(f"proxy/{T['proxy_cls']}", T["proxy_cls"],
                                    _proxy_rect(c, T["proxy_size"], sc.floorplan), False, T["proxy_saliency"]))
            truths.append(Truth(c, 0.0, app.id))
        info["on"] = bool(on)
    elif tpl == "surveillance":
        happens = rng.random() < T["p_event"]
        src = T["source_ids"][int(rng.integers(len(T["source_ids"])))]
        lo, hi = T["onset_range"]
        onset = float(rng.uniform(lo, hi))
        if happens:
            c = sc.object(src).footprint.center
            events.append(TimedEvent(onset, c, T["modality"], T["amplitude"], T["radius"], description=src))
            objs.append(SceneObject(f"proxy/{T['proxy_cls']}", T["proxy_cls"],
                                    _proxy_rect(c, T["proxy_size"], sc.floorplan), False,
                                    T["proxy_saliency"], visible_from=onset))
            truths.append(Truth(c, onset, src))
        info.update(event=bool(happens), onset=onset if happens else None)
    elif tpl == "delivery":
        if T["target_cls"]:
            spot = T["spots"][int(rng.integers(len(T["spots"])))]
            r = _place(rng, spot, T["target_size"], sc.floorplan)
            objs.append(SceneObject(f"target/{T['target_cls']}", T["target_cls"], r))
            truths.append(Truth(r.center, 0.0, T["target_cls"]))
        else:
            loc = sc.command["location"]
            truths.append(Truth(Point2(*loc), 0.0, "location"))
    elif tpl == "compound":
        kind = T["kind"]
        if kind == "actuate+actuate":
            spot = T["spots"][int(rng.integers(len(T["spots"])))]
            r = _place(rng, spot, T["target_size"], sc.floorplan)
            objs.append(SceneObject(f"target/{T['target_cls']}", T["target_cls"], r))
            truths.append(Truth(r.center, 0.0, T["target_cls"]))
        else:
            ids = T["area_ids"]
            pick = ids[int(rng.integers(len(ids)))]
            c = sc.object(pick).footprint.center
            for m, a in zip(T["modalities"], T["amplitudes"]):
                events.append(TimedEvent(0.0, c, m, a, T["radius"], description=f"source:{pick}"))
                if T["decoys"]:
                    events += _decoy_bumps(rng, sc, ids, pick, m, a, T["radius"], 0.6 if kind == "sense+sense" else 0.3)
            truths.append(Truth(c, 0.0, pick))
            info["area"] = pick
    world = World(sc.floorplan, fields_, tuple(objs), tuple(events), sc.transform)
    return Realization(world, tuple(truths), variant, info)
