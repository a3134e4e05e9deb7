"""Bone-loss severity per tooth side.

Per tooth: merge duplicate keypoints with NMS, split them into left and right
sides, fit the three-point minimax line for each complete side and measure
the CEJ-to-intersection distance as a percentage of CEJ-to-apex, with all
distances taken along that line.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import AlveolarError, DegenerateTriple, ZeroRootLength
from .evaluation import box_iou
from .geom import Box, Line2D, Point2D, arclength_parameter, minimax_line, principal_direction
from .records import KINDS, SIDES, KeypointDetection, RadiographRecord, ToothRecord

DEFAULT_IOU_THRESHOLD = 0.6
# keypoints without an instance box get a square of this half-size for NMS
DEFAULT_KEYPOINT_BOX_HALF = 8.0
MEDIAL_BAND = 0.1
MIN_ROOT_LENGTH = 1e-6

COMPLETE = "complete"
MISSING = "missing-points"


@dataclass(frozen=True)
class SeverityResult:
    percent: float
    out_of_range: bool
    line: Line2D
    cej_t: float
    intersection_t: float
    apex_t: float


@dataclass(frozen=True)
class SideAssessment:
    tooth_id: str
    side: str
    cej: Point2D | None
    intersection: Point2D | None
    apex: Point2D | None
    line: Line2D | None = None
    severity_percent: float | None = None
    completeness: str = MISSING
    flags: tuple[str, ...] = ()

    @property
    def key(self):
        return (self.tooth_id, SIDES.index(self.side))


def _box_of(det: KeypointDetection) -> Box:
    return det.box if det.box is not None else Box.around(det.location, DEFAULT_KEYPOINT_BOX_HALF)


def _rank(det: KeypointDetection):
    return (-det.confidence, det.location.x, det.location.y, KINDS.index(det.kind), tuple(_box_of(det)))


def nms_merge(detections, iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> list[KeypointDetection]:
    """Greedy per-kind non-maximum suppression on detection boxes.

    A detection survives iff its box IoU with every already kept detection
    of the same kind is below ``iou_threshold``. Equal confidences are
    broken by location and kind, so the result does not depend on input order.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1), got {iou_threshold}")
    kept: list[KeypointDetection] = []
    for det in sorted(detections, key=_rank):
        box = _box_of(det)
        if all(k.kind != det.kind or box_iou(box, _box_of(k)) < iou_threshold for k in kept):
            kept.append(det)
    return kept


def compute_severity(cej, intersection, apex) -> SeverityResult:
    """Severity of one side from its CEJ, intersection and apex points.

    The percentage is signed: an intersection projecting above the CEJ gives
    a negative value and one beyond the apex exceeds 100; both set
    ``out_of_range``.
    """
    line = minimax_line(cej, intersection, apex)
    tc = arclength_parameter(cej, line)
    ti = arclength_parameter(intersection, line)
    ta = arclength_parameter(apex, line)
    root = ta - tc
    if abs(root) < MIN_ROOT_LENGTH:
        raise ZeroRootLength(f"CEJ and apex project {abs(root):.3g} px apart")
    ratio = (ti - tc) / root
    return SeverityResult(100.0 * ratio, not 0.0 <= ratio <= 1.0, line, tc, ti, ta)


def polygon_centroid(vertices) -> Point2D:
    """Area centroid of a closed ring; vertex mean if the ring has no area."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = cross.sum() / 2
    if abs(area) < 1e-12:
        m = v.mean(axis=0)
        return Point2D(m[0], m[1])
    return Point2D(((x + xn) * cross).sum() / (6 * area), ((y + yn) * cross).sum() / (6 * area))


def _axis(tooth: ToothRecord):
    """Medial axis of a tooth: a point on it, upward direction and half-band."""
    if tooth.outline is not None and len(tooth.outline) >= 3:
        d = principal_direction(tooth.outline.vertices)
        dx, dy = d
        if dy > 0 or (dy == 0 and dx < 0):
            dx, dy = -dx, -dy
        c = polygon_centroid(tooth.outline.vertices)
        lateral = [dx * (y - c.y) - dy * (x - c.x) for x, y in tooth.outline.vertices]
        width = max(lateral) - min(lateral)
    else:
        dx, dy = 0.0, -1.0
        c = tooth.box.center
        width = tooth.box.width
    return c, (dx, dy), MEDIAL_BAND * width


def assemble_sides(tooth: ToothRecord) -> tuple[SideAssessment, SideAssessment]:
    """Group a tooth's keypoints into its left and right sides.

    Each keypoint goes to the side given by the sign of its offset across
    the medial axis, the outline's principal axis through its centroid (the
    vertical through the box centre when there is no outline). An apex lying within the medial band
    may serve either side. Each side keeps its most confident point per kind.
    """
    c, (dx, dy), band = _axis(tooth)
    chosen = {side: {} for side in SIDES}
    for det in sorted(tooth.keypoints, key=_rank):
        offset = dx * (det.location.y - c.y) - dy * (det.location.x - c.x)
        sides = ["right" if offset > 0 else "left"]
        if det.kind == "Apex" and abs(offset) <= band:
            sides = list(SIDES)
        for side in sides:
            chosen[side].setdefault(det.kind, det.location)
    out = []
    for side in SIDES:
        pts = chosen[side]
        complete = all(k in pts for k in KINDS)
        out.append(
            SideAssessment(
                tooth.tooth_id,
                side,
                pts.get("CEJ"),
                pts.get("Intersection"),
                pts.get("Apex"),
                completeness=COMPLETE if complete else MISSING,
            )
        )
    return out[0], out[1]


def assess_side(side: SideAssessment) -> SideAssessment:
    if side.completeness != COMPLETE:
        return side
    try:
        res = compute_severity(side.cej, side.intersection, side.apex)
    except (DegenerateTriple, ZeroRootLength) as exc:
        return replace(side, flags=side.flags + (type(exc).__name__,))
    flags = side.flags + (("OutOfRange",) if res.out_of_range else ())
    return replace(side, line=res.line, severity_percent=res.percent, flags=flags)


def assess_tooth(tooth: ToothRecord, iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> list[SideAssessment]:
    merged = ToothRecord(tooth.tooth_id, tooth.box, tooth.outline, tuple(nms_merge(tooth.keypoints, iou_threshold)))
    try:
        left, right = assemble_sides(merged)
    except AlveolarError as exc:
        return [SideAssessment(tooth.tooth_id, s, None, None, None, flags=(type(exc).__name__,)) for s in SIDES]
    return [assess_side(left), assess_side(right)]


def assess_radiograph_severity(
    record: RadiographRecord, iou_threshold: float = DEFAULT_IOU_THRESHOLD
) -> list[SideAssessment]:
    """Severity for every tooth side of a record, ordered by (tooth_id, side)."""
    out = []
    for tooth in sorted(record.teeth, key=lambda t: t.tooth_id):
        out.extend(assess_tooth(tooth, iou_threshold))
    return sorted(out, key=lambda s: s.key)
