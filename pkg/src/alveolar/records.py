"""Radiograph record types and the versioned JSON interchange format.

A record file holds one batch::

    {"format": "alveolar-records", "version": 1, "records": [...]}

Coordinates are continuous pixels, origin top-left, y down. See README for
the full field list.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .errors import RecordValidationError, SchemaError
from .geom import Box, Point2D, Polyline
from .maskline import BinaryMask

FORMAT_NAME = "alveolar-records"
FORMAT_VERSION = 1

KINDS = ("CEJ", "Intersection", "Apex")
SIDES = ("left", "right")
LABELS = ("Angular", "Horizontal")
ARCHES = ("maxillary", "mandibular", "unknown")
OCCLUSAL = ("up", "down", "unknown")
SPLITS = ("train", "validation", "test")


@dataclass(frozen=True)
class KeypointDetection:
    kind: str
    location: Point2D
    confidence: float = 1.0
    box: Box | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown keypoint kind {self.kind!r}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.box is not None and self.box.area <= 0:
            raise ValueError("keypoint box must have positive area")


@dataclass(frozen=True)
class ToothRecord:
    tooth_id: str
    box: Box
    outline: Polyline | None = None
    keypoints: tuple[KeypointDetection, ...] = ()


@dataclass(frozen=True)
class SideSeverity:
    tooth_id: str
    side: str
    percent: float


@dataclass(frozen=True)
class SiteLabel:
    tooth_id: str
    side: str
    label: str
    theta: float | None = None


@dataclass(frozen=True)
class GroundTruthBlock:
    severity: tuple[SideSeverity, ...] = ()
    patterns: tuple[SiteLabel, ...] = ()
    verified: bool = False


@dataclass(frozen=True)
class RadiographRecord:
    image_id: str
    width: int
    height: int
    arch: str = "unknown"
    occlusal_direction: str = "unknown"
    teeth: tuple[ToothRecord, ...] = ()
    bone_lines: tuple[Polyline, ...] = ()
    bone_line_masks: tuple[BinaryMask, ...] | None = None
    ground_truth: GroundTruthBlock | None = None
    split: str | None = None
    clipped: bool = False

    def tooth(self, tooth_id: str) -> ToothRecord:
        for t in self.teeth:
            if t.tooth_id == tooth_id:
                return t
        raise KeyError(tooth_id)


@dataclass(frozen=True)
class Diagnostic:
    record: int | None
    image_id: str | None
    field: str
    code: str
    message: str
    level: str = "error"

    def __str__(self):
        where = f"record {self.record}" if self.record is not None else "file"
        if self.image_id:
            where += f" ({self.image_id})"
        return f"{self.level}: {where}: {self.field}: {self.code}: {self.message}"


@dataclass
class Batch:
    records: list[RadiographRecord]
    diagnostics: list[Diagnostic] = field(default_factory=list)


def _map_box(box: Box, fn) -> Box:
    corners = fn(np.array([(box.x1, box.y1), (box.x2, box.y1), (box.x2, box.y2), (box.x1, box.y2)], dtype=float))
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    return Box(lo[0], lo[1], hi[0], hi[1])


def map_geometry(rec: RadiographRecord, fn, width=None, height=None) -> RadiographRecord:
    """Apply a vectorized point map, (n, 2) array to (n, 2) array, to a record.

    Boxes become the bounding boxes of their mapped corners. Masks are
    dropped since they cannot be mapped exactly.
    """
    teeth = []
    for t in rec.teeth:
        kps = tuple(
            KeypointDetection(k.kind, Point2D(*fn(np.array([k.location], dtype=float))[0]), k.confidence, _map_box(k.box, fn) if k.box else None)
            for k in t.keypoints
        )
        outline = t.outline.transformed(fn) if t.outline is not None else None
        teeth.append(ToothRecord(t.tooth_id, _map_box(t.box, fn), outline, kps))
    return replace(
        rec,
        width=rec.width if width is None else width,
        height=rec.height if height is None else height,
        teeth=tuple(teeth),
        bone_lines=tuple(p.transformed(fn) for p in rec.bone_lines),
        bone_line_masks=None,
    )


# -- parsing -----------------------------------------------------------------


class _Problems:
    """Collects diagnostics for one record while it is being read."""

    def __init__(self, index, strict):
        self.index = index
        self.strict = strict
        self.image_id = None
        self.items: list[Diagnostic] = []
        self.out_of_bounds = False

    def error(self, path, message, code="SchemaError"):
        self.items.append(Diagnostic(self.index, self.image_id, path, code, message))

    def bounds(self, path, message):
        self.out_of_bounds = True
        level = "error" if self.strict else "warning"
        self.items.append(Diagnostic(self.index, self.image_id, path, "GeometryOutOfBounds", message, level))

    @property
    def failed(self):
        return any(d.level == "error" for d in self.items)


def _number(obj, key, path, probs, required=True, default=None):
    if obj.get(key) is None:
        if required:
            probs.error(f"{path}.{key}", "missing")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        probs.error(f"{path}.{key}", f"expected a finite number, got {v!r}")
        return default
    return float(v)


def _choice(obj, key, path, probs, choices, default):
    v = obj.get(key, default)
    if v not in choices:
        probs.error(f"{path}.{key}", f"expected one of {list(choices)}, got {v!r}")
        return default
    return v


def _points(raw, path, probs, min_len):
    if not isinstance(raw, list):
        probs.error(path, "expected a list of [x, y] pairs")
        return None
    pts = []
    for i, p in enumerate(raw):
        if (
            not isinstance(p, list)
            or len(p) != 2
            or any(isinstance(c, bool) or not isinstance(c, (int, float)) or not math.isfinite(c) for c in p)
        ):
            probs.error(f"{path}[{i}]", f"expected [x, y], got {p!r}")
            return None
        pts.append((float(p[0]), float(p[1])))
    if len(pts) < min_len:
        probs.error(path, f"needs at least {min_len} vertices, got {len(pts)}")
        return None
    return pts


def _box(raw, path, probs):
    if (
        not isinstance(raw, list)
        or len(raw) != 4
        or any(isinstance(c, bool) or not isinstance(c, (int, float)) or not math.isfinite(c) for c in raw)
    ):
        probs.error(path, f"expected [x1, y1, x2, y2], got {raw!r}")
        return None
    b = Box(*raw)
    if b.width <= 0 or b.height <= 0:
        probs.error(path, "box must have positive area")
        return None
    return b


def _check_bounds(pts, path, probs, width, height):
    for i, (x, y) in enumerate(pts):
        if not (0 <= x <= width and 0 <= y <= height):
            probs.bounds(f"{path}[{i}]" if len(pts) > 1 else path, f"({x}, {y}) outside {width}x{height} canvas")
            return


def _keypoint(raw, path, probs, width, height):
    if not isinstance(raw, dict):
        probs.error(path, "expected an object")
        return None
    kind = raw.get("kind")
    if kind not in KINDS:
        probs.error(f"{path}.kind", f"expected one of {list(KINDS)}, got {kind!r}")
        return None
    x = _number(raw, "x", path, probs)
    y = _number(raw, "y", path, probs)
    conf = _number(raw, "confidence", path, probs, required=False, default=1.0)
    if conf is not None and not 0.0 <= conf <= 1.0:
        probs.error(f"{path}.confidence", f"{conf} outside [0, 1]")
        return None
    box = _box(raw["box"], f"{path}.box", probs) if raw.get("box") is not None else None
    if x is None or y is None or conf is None or (raw.get("box") is not None and box is None):
        return None
    if not 0 <= x <= width:
        probs.bounds(f"{path}.x", f"{x} outside [0, {width}]")
    elif not 0 <= y <= height:
        probs.bounds(f"{path}.y", f"{y} outside [0, {height}]")
    if box is not None:
        _check_bounds([(box.x1, box.y1), (box.x2, box.y2)], f"{path}.box", probs, width, height)
    return KeypointDetection(kind, Point2D(x, y), conf, box)


def _tooth(raw, path, probs, width, height):
    if not isinstance(raw, dict):
        probs.error(path, "expected an object")
        return None
    tid = raw.get("tooth_id")
    if not isinstance(tid, str) or not tid:
        probs.error(f"{path}.tooth_id", "expected a non-empty string")
        return None
    box = _box(raw.get("box"), f"{path}.box", probs)
    outline = None
    if raw.get("outline") is not None:
        pts = _points(raw["outline"], f"{path}.outline", probs, 3)
        if pts is not None:
            try:
                outline = Polyline(pts, closed=True)
            except Exception as exc:  # degenerate after de-duplication
                probs.error(f"{path}.outline", str(exc))
                pts = None
            else:
                _check_bounds(pts, f"{path}.outline", probs, width, height)
        if pts is None:
            return None
    kps = []
    raw_kps = raw.get("keypoints", [])
    if not isinstance(raw_kps, list):
        probs.error(f"{path}.keypoints", "expected a list")
        return None
    for i, k in enumerate(raw_kps):
        kp = _keypoint(k, f"{path}.keypoints[{i}]", probs, width, height)
        if kp is not None:
            kps.append(kp)
    if box is None:
        return None
    _check_bounds([(box.x1, box.y1), (box.x2, box.y2)], f"{path}.box", probs, width, height)
    return ToothRecord(tid, box, outline, tuple(kps))


def _list(raw, key, path, probs):
    value = raw.get(key)
    if value is None:
        return []
    if not isinstance(value, list):
        probs.error(f"{path}.{key}", "expected a list")
        return []
    return value


def _ground_truth(raw, path, probs, teeth_ids):
    if not isinstance(raw, dict):
        probs.error(path, "expected an object")
        return None
    sev, pats = [], []
    for i, s in enumerate(_list(raw, "severity", path, probs)):
        p = f"{path}.severity[{i}]"
        if not isinstance(s, dict):
            probs.error(p, "expected an object")
            continue
        tid = s.get("tooth_id")
        if tid not in teeth_ids:
            probs.error(f"{p}.tooth_id", f"unknown tooth {tid!r}")
            continue
        side = _choice(s, "side", p, probs, SIDES, None)
        pct = _number(s, "percent", p, probs)
        if side is not None and pct is not None:
            sev.append(SideSeverity(tid, side, pct))
    for i, s in enumerate(_list(raw, "patterns", path, probs)):
        p = f"{path}.patterns[{i}]"
        if not isinstance(s, dict):
            probs.error(p, "expected an object")
            continue
        tid = s.get("tooth_id")
        if tid not in teeth_ids:
            probs.error(f"{p}.tooth_id", f"unknown tooth {tid!r}")
            continue
        side = _choice(s, "side", p, probs, SIDES, None)
        label = _choice(s, "label", p, probs, LABELS, None)
        theta = _number(s, "theta", p, probs, required=False)
        if side is not None and label is not None:
            pats.append(SiteLabel(tid, side, label, theta))
    verified = raw.get("verified", False)
    if not isinstance(verified, bool):
        probs.error(f"{path}.verified", "expected true or false")
        verified = False
    return GroundTruthBlock(tuple(sev), tuple(pats), verified)


def _record(raw, index, probs) -> RadiographRecord | None:
    path = f"records[{index}]"
    if not isinstance(raw, dict):
        probs.error(path, "expected an object")
        return None
    image_id = raw.get("image_id")
    if not isinstance(image_id, str) or not image_id:
        probs.error(f"{path}.image_id", "expected a non-empty string")
        return None
    probs.image_id = image_id
    width, height = raw.get("width"), raw.get("height")
    for key, v in (("width", width), ("height", height)):
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            probs.error(f"{path}.{key}", f"expected a positive integer, got {v!r}")
            return None
    arch = _choice(raw, "arch", path, probs, ARCHES, "unknown")
    occl = _choice(raw, "occlusal_direction", path, probs, OCCLUSAL, "unknown")
    split = raw.get("split")
    if split is not None and split not in SPLITS:
        probs.error(f"{path}.split", f"expected one of {list(SPLITS)} or null, got {split!r}")
    teeth = []
    for i, t in enumerate(_list(raw, "teeth", path, probs)):
        tooth = _tooth(t, f"{path}.teeth[{i}]", probs, width, height)
        if tooth is not None:
            teeth.append(tooth)
    ids = [t.tooth_id for t in teeth]
    if len(set(ids)) != len(ids):
        probs.error(f"{path}.teeth", "duplicate tooth_id")
    lines = []
    for i, raw_line in enumerate(_list(raw, "bone_lines", path, probs)):
        pts = _points(raw_line, f"{path}.bone_lines[{i}]", probs, 2)
        if pts is None:
            continue
        try:
            lines.append(Polyline(pts))
        except Exception as exc:
            probs.error(f"{path}.bone_lines[{i}]", str(exc))
            continue
        _check_bounds(pts, f"{path}.bone_lines[{i}]", probs, width, height)
    masks = None
    if raw.get("bone_line_masks") is not None:
        masks = []
        for i, m in enumerate(_list(raw, "bone_line_masks", path, probs)):
            p = f"{path}.bone_line_masks[{i}]"
            try:
                if m["width"] != width or m["height"] != height:
                    raise ValueError(f"mask is {m['width']}x{m['height']}, image is {width}x{height}")
                masks.append(BinaryMask.from_rle(m["width"], m["height"], m["rle"]))
            except (KeyError, TypeError, ValueError) as exc:
                probs.error(p, f"bad mask: {exc}")
        masks = tuple(masks)
    gt = None
    if raw.get("ground_truth") is not None:
        gt = _ground_truth(raw["ground_truth"], f"{path}.ground_truth", probs, set(ids))
    if probs.failed:
        return None
    return RadiographRecord(
        image_id=image_id,
        width=width,
        height=height,
        arch=arch,
        occlusal_direction=occl,
        teeth=tuple(teeth),
        bone_lines=tuple(lines),
        bone_line_masks=masks,
        ground_truth=gt,
        split=split,
        clipped=probs.out_of_bounds,
    )


def parse_records(doc: Any, strict: bool = True) -> Batch:
    """Validate a decoded record document.

    In strict mode any error (including out-of-bounds geometry) raises
    RecordValidationError listing every problem. In lenient mode invalid
    records are dropped, out-of-bounds records are kept with ``clipped`` set,
    and all problems are returned as diagnostics.
    """
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise SchemaError("format", f"expected {FORMAT_NAME!r} document")
    if doc.get("version") != FORMAT_VERSION:
        raise SchemaError("version", f"unsupported version {doc.get('version')!r}")
    raw_records = doc.get("records")
    if not isinstance(raw_records, list):
        raise SchemaError("records", "expected a list")
    batch = Batch([])
    seen = set()
    for i, raw in enumerate(raw_records):
        probs = _Problems(i, strict)
        rec = _record(raw, i, probs)
        if rec is not None and rec.image_id in seen:
            probs.error(f"records[{i}].image_id", f"duplicate image_id {rec.image_id!r}")
            rec = None
        batch.diagnostics.extend(probs.items)
        if rec is not None:
            seen.add(rec.image_id)
            batch.records.append(rec)
    if strict and batch.diagnostics:
        raise RecordValidationError(batch.diagnostics)
    return batch


def parse_record_file(path, strict: bool = True) -> Batch:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from None
    return parse_records(doc, strict=strict)


# -- writing -----------------------------------------------------------------


def _pts(poly: Polyline) -> list[list[float]]:
    return [[float(x), float(y)] for x, y in poly.vertices]


def record_to_dict(rec: RadiographRecord) -> dict:
    out: dict[str, Any] = {
        "image_id": rec.image_id,
        "width": rec.width,
        "height": rec.height,
        "arch": rec.arch,
        "occlusal_direction": rec.occlusal_direction,
        "split": rec.split,
        "teeth": [],
        "bone_lines": [_pts(p) for p in rec.bone_lines],
    }
    for t in rec.teeth:
        tooth = {
            "tooth_id": t.tooth_id,
            "box": list(t.box),
            "outline": _pts(t.outline) if t.outline is not None else None,
            "keypoints": [],
        }
        for k in t.keypoints:
            tooth["keypoints"].append(
                {
                    "kind": k.kind,
                    "x": k.location.x,
                    "y": k.location.y,
                    "confidence": k.confidence,
                    "box": list(k.box) if k.box is not None else None,
                }
            )
        out["teeth"].append(tooth)
    if rec.bone_line_masks is not None:
        out["bone_line_masks"] = [
            {"width": m.width, "height": m.height, "rle": m.to_rle()} for m in rec.bone_line_masks
        ]
    if rec.ground_truth is not None:
        gt = rec.ground_truth
        out["ground_truth"] = {
            "verified": gt.verified,
            "severity": [{"tooth_id": s.tooth_id, "side": s.side, "percent": s.percent} for s in gt.severity],
            "patterns": [
                {"tooth_id": s.tooth_id, "side": s.side, "label": s.label, "theta": s.theta} for s in gt.patterns
            ],
        }
    return out


def dump_records(records) -> str:
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "records": [record_to_dict(r) for r in records],
    }
    return json.dumps(doc, indent=1) + "\n"


def write_record_file(records, path) -> None:
    Path(path).write_text(dump_records(records), encoding="utf-8", newline="\n")
