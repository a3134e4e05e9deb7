"""Conversion from keypoint-annotation exports to record documents.

The accepted export is a list of images, each with named objects::

    {"images": [{"image_id": "img1", "width": 800, "height": 600,
                 "objects": [
                     {"name": "tooth", "id": "T01", "polygon": [[x, y], ...]},
                     {"name": "CEJ", "point": [x, y], "tooth": "T01"},
                     {"name": "bone level", "line": [[x, y], ...]}]}]}

Feature names are mapped to roles (tooth, CEJ, Intersection, Apex,
bone_line) through a name map, so exports using other label names can be
read without editing them. Keypoints without a ``tooth`` reference go to
the tooth whose box contains them, nearest box centre first.
"""

from __future__ import annotations

import math

from .errors import SchemaError
from .records import FORMAT_NAME, FORMAT_VERSION, KINDS

ROLES = ("tooth", "bone_line") + KINDS

DEFAULT_NAME_MAP = {
    "tooth": "tooth",
    "CEJ": "CEJ",
    "cej": "CEJ",
    "intersection": "Intersection",
    "Intersection": "Intersection",
    "apex": "Apex",
    "Apex": "Apex",
    "bone level": "bone_line",
    "bone-level": "bone_line",
    "bone_line": "bone_line",
}


def _box_of(points):
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    return [min(xs), min(ys), max(xs), max(ys)]


def _owner(teeth, x, y):
    best, best_d = None, math.inf
    for t in teeth:
        x1, y1, x2, y2 = t["box"]
        if x1 <= x <= x2 and y1 <= y <= y2:
            d = math.hypot(x - (x1 + x2) / 2, y - (y1 + y2) / 2)
            if d < best_d:
                best, best_d = t, d
    return best


def convert_annotations(doc, name_map=None) -> dict:
    """Build a record document (not yet validated) from an annotation export."""
    names = dict(DEFAULT_NAME_MAP if name_map is None else name_map)
    bad = sorted({r for r in names.values() if r not in ROLES})
    if bad:
        raise SchemaError("name_map", f"unknown roles {bad}; expected {list(ROLES)}")
    if not isinstance(doc, dict) or not isinstance(doc.get("images"), list):
        raise SchemaError("images", "expected an object with an 'images' list")
    records = []
    for i, img in enumerate(doc["images"]):
        where = f"images[{i}]"
        if not isinstance(img, dict) or not isinstance(img.get("objects", []), list):
            raise SchemaError(where, "expected an object with an 'objects' list")
        teeth, lines, points = [], [], []
        for j, obj in enumerate(img.get("objects", [])):
            role = names.get(obj.get("name")) if isinstance(obj, dict) else None
            if role is None:
                raise SchemaError(f"{where}.objects[{j}].name", f"unmapped feature name {obj.get('name') if isinstance(obj, dict) else obj!r}")
            try:
                if role == "tooth":
                    poly = [list(map(float, p)) for p in obj["polygon"]]
                    box = obj.get("bbox") or _box_of(poly)
                    tid = str(obj.get("id", f"T{len(teeth) + 1:02d}"))
                    teeth.append({"tooth_id": tid, "box": [float(v) for v in box], "outline": poly, "keypoints": []})
                elif role == "bone_line":
                    lines.append([list(map(float, p)) for p in obj["line"]])
                else:
                    x, y = map(float, obj["point"])
                    points.append((j, role, x, y, obj))
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"{where}.objects[{j}]", f"malformed {role} feature: {exc}") from None
        by_id = {t["tooth_id"]: t for t in teeth}
        for j, role, x, y, obj in points:
            owner = by_id.get(obj.get("tooth")) if obj.get("tooth") is not None else _owner(teeth, x, y)
            if owner is None:
                raise SchemaError(f"{where}.objects[{j}]", f"{role} point at ({x}, {y}) belongs to no tooth")
            kp = {"kind": role, "x": x, "y": y, "confidence": float(obj.get("confidence", 1.0))}
            if obj.get("bbox") is not None:
                kp["box"] = [float(v) for v in obj["bbox"]]
            owner["keypoints"].append(kp)
        records.append(
            {
                "image_id": img.get("image_id", f"image-{i:04d}"),
                "width": img.get("width"),
                "height": img.get("height"),
                "arch": img.get("arch", "unknown"),
                "occlusal_direction": img.get("occlusal_direction", "unknown"),
                "split": img.get("split"),
                "teeth": teeth,
                "bone_lines": lines,
            }
        )
    return {"format": FORMAT_NAME, "version": FORMAT_VERSION, "records": records}
