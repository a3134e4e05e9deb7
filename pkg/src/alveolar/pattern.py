"""Horizontal vs angular bone-loss classification.

At the point where the bone level meets the tooth boundary, two tangents are
estimated: one along the tooth face, oriented from root toward crown, and one
along the bone line, oriented away from the tooth. The angle between them
decides the pattern: below the threshold the loss is angular.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AlveolarError, OrientationUndetermined, PointOffPolyline
from .geom import (
    DEFAULT_TANGENT_WINDOW,
    Point2D,
    Polyline,
    UnitVector,
    angle_between,
    principal_direction,
    signed_distance,
    tangent_at,
)
from .records import RadiographRecord
from .severity import COMPLETE, SideAssessment

ANGULAR_THRESHOLD_DEGREES = 54.1372
DEFAULT_MATCH_DISTANCE = 15.0
DEFAULT_SEVERITY_FLOOR = 10.0
ORIENT_STEP = 2.0
# angles are reported on this grid so a planted boundary value is not split by rounding noise
THETA_RESOLUTION_DECIMALS = 9

ANGULAR = "Angular"
HORIZONTAL = "Horizontal"

CLASSIFIED = "classified"
UNMATCHED = "unmatched"
FAILED = "error"

_OCCLUSAL_VECTORS = {"up": (0.0, -1.0), "down": (0.0, 1.0)}
_ARCH_OCCLUSAL = {"mandibular": "up", "maxillary": "down"}


@dataclass(frozen=True)
class PatternConfig:
    threshold_degrees: float = ANGULAR_THRESHOLD_DEGREES
    tangent_window: int = DEFAULT_TANGENT_WINDOW
    snap_distance: float = DEFAULT_MATCH_DISTANCE
    severity_floor: float = DEFAULT_SEVERITY_FLOOR
    orient_step: float = ORIENT_STEP

    def __post_init__(self):
        if not 0.0 < self.threshold_degrees < 180.0:
            raise ValueError("threshold must lie strictly between 0 and 180 degrees")
        if self.tangent_window < 2:
            raise ValueError("tangent window must be at least 2")
        if self.snap_distance <= 0 or self.orient_step <= 0:
            raise ValueError("snap distance and orientation step must be positive")


@dataclass(frozen=True)
class PatternResult:
    tooth_id: str
    side: str
    intersection: Point2D
    theta: float | None = None
    label: str | None = None
    bone_tangent: UnitVector | None = None
    face_tangent: UnitVector | None = None
    status: str = CLASSIFIED
    detail: str = ""


def label_for(theta: float, threshold: float = ANGULAR_THRESHOLD_DEGREES) -> str:
    return ANGULAR if theta < threshold else HORIZONTAL


def _crown_from_shape(outline: Polyline):
    """Crown direction guessed from the outline taper: the crown end is wider."""
    v = outline.vertices
    d = np.array(principal_direction(v))
    n = np.array([-d[1], d[0]])
    centered = v - v.mean(axis=0)
    along = centered @ d
    across = centered @ n
    lo, hi = np.quantile(along, [1 / 3, 2 / 3])
    w_lo = np.ptp(across[along <= lo]) if np.any(along <= lo) else 0.0
    w_hi = np.ptp(across[along >= hi]) if np.any(along >= hi) else 0.0
    if abs(w_hi - w_lo) <= 0.05 * max(w_hi, w_lo, 1e-12):
        return None
    return tuple(d) if w_hi > w_lo else tuple(-d)


def crown_direction(outline=None, cej=None, apex=None, occlusal_direction="unknown", arch="unknown"):
    """Root-to-crown direction from the best available cue."""
    if cej is not None and apex is not None:
        dx, dy = cej[0] - apex[0], cej[1] - apex[1]
        if dx * dx + dy * dy > 0:
            return dx, dy
    occl = occlusal_direction if occlusal_direction in _OCCLUSAL_VECTORS else _ARCH_OCCLUSAL.get(arch)
    if occl is not None:
        return _OCCLUSAL_VECTORS[occl]
    if outline is not None:
        guess = _crown_from_shape(outline)
        if guess is not None:
            return guess
    raise OrientationUndetermined("no crown/root cue: need CEJ and apex, an occlusal direction, or a tapered outline")


def orient_face_tangent(raw, outline, intersection, cej=None, apex=None, occlusal_direction="unknown", arch="unknown"):
    """Flip ``raw`` if needed so it points from the root toward the crown."""
    crown = crown_direction(outline, cej, apex, occlusal_direction, arch)
    dot = raw[0] * crown[0] + raw[1] * crown[1]
    if abs(dot) < 1e-9 * max(1.0, np.hypot(*crown)):
        raise OrientationUndetermined("face tangent is perpendicular to the crown direction")
    raw = UnitVector(*raw)
    return raw if dot > 0 else -raw


def orient_bone_tangent(raw, intersection, outline, step: float = ORIENT_STEP):
    """Flip ``raw`` if needed so it points away from the tooth.

    A short step is taken each way from the intersection; the candidate whose
    step ends farther outside the tooth outline wins.
    """
    raw = UnitVector(*raw)
    x, y = intersection[0], intersection[1]
    ahead = signed_distance((x + step * raw.ux, y + step * raw.uy), outline)
    behind = signed_distance((x - step * raw.ux, y - step * raw.uy), outline)
    if abs(ahead - behind) < 1e-9:
        raise OrientationUndetermined("both directions are equally far from the tooth face")
    return raw if ahead > behind else -raw


def classify_site(
    outline: Polyline,
    bone_line: Polyline,
    intersection,
    cfg: PatternConfig = PatternConfig(),
    *,
    cej=None,
    apex=None,
    occlusal_direction="unknown",
    arch="unknown",
    tooth_id="",
    side="",
) -> PatternResult:
    """Angle between the oriented face and bone tangents, and its label."""
    p = Point2D(*intersection)
    for name, curve in (("tooth outline", outline), ("bone line", bone_line)):
        d = curve.distance_to(p)
        if d > cfg.snap_distance:
            raise PointOffPolyline(f"intersection is {d:.2f} px from the {name} (snap {cfg.snap_distance})")
    face_raw = tangent_at(outline, p, cfg.tangent_window, cfg.snap_distance)
    bone_raw = tangent_at(bone_line, p, cfg.tangent_window, cfg.snap_distance)
    face = orient_face_tangent(face_raw, outline, p, cej, apex, occlusal_direction, arch)
    bone = orient_bone_tangent(bone_raw, p, outline, cfg.orient_step)
    theta = round(angle_between(face, bone), THETA_RESOLUTION_DECIMALS)
    return PatternResult(tooth_id, side, p, theta, label_for(theta, cfg.threshold_degrees), bone, face)


def nearest_bone_line(lines, p, max_distance: float):
    best, best_d = None, max_distance
    for line in lines:
        d = line.distance_to(p)
        if d <= best_d and (best is None or d < best_d):
            best, best_d = line, d
    return best


def assess_radiograph_pattern(
    record: RadiographRecord,
    severity_results: list[SideAssessment],
    cfg: PatternConfig = PatternConfig(),
) -> list[PatternResult]:
    """Classify every complete side whose severity reaches the reporting floor."""
    out = []
    for s in severity_results:
        if s.completeness != COMPLETE or s.severity_percent is None or s.severity_percent < cfg.severity_floor:
            continue
        bone = nearest_bone_line(record.bone_lines, s.intersection, cfg.snap_distance)
        if bone is None:
            out.append(PatternResult(s.tooth_id, s.side, s.intersection, status=UNMATCHED, detail="no bone line within snap distance"))
            continue
        outline = record.tooth(s.tooth_id).outline
        if outline is None:
            out.append(PatternResult(s.tooth_id, s.side, s.intersection, status=FAILED, detail="tooth has no outline"))
            continue
        try:
            res = classify_site(
                outline,
                bone,
                s.intersection,
                cfg,
                cej=s.cej,
                apex=s.apex,
                occlusal_direction=record.occlusal_direction,
                arch=record.arch,
                tooth_id=s.tooth_id,
                side=s.side,
            )
        except AlveolarError as exc:
            res = PatternResult(s.tooth_id, s.side, s.intersection, status=FAILED, detail=f"{type(exc).__name__}: {exc}")
        out.append(res)
    return out
