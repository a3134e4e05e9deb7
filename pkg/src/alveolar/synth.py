"""Synthetic radiograph geometry with known severities and pattern angles.

Each tooth is a root-tapered capsule: two straight root faces running from
the CEJ points to the apex points, a half-ellipse crown and a rounded root
tip. For every side the intersection point sits on the root face at the
planted fraction of the CEJ-apex span, so the severity is exact by
construction. A straight bone stub leaves the intersection at the planted
angle from the crown-directed face tangent.

All randomness comes from ``numpy.random.default_rng`` seeded with
``[seed, index]``, so a batch is reproducible record by record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleSpec
from .geom import Box, Point2D, Polyline
from .pattern import ANGULAR_THRESHOLD_DEGREES, label_for
from .records import (
    GroundTruthBlock,
    KeypointDetection,
    RadiographRecord,
    SideSeverity,
    SiteLabel,
    ToothRecord,
)

TOOTH_WIDTH = 60.0
ROOT_LENGTH = 200.0
TIP_WIDTH = 16.0
CROWN_HEIGHT = 50.0
BONE_STUB = 40.0
KEYPOINT_BOX = 20.0
TOOTH_GAP = 90.0
MARGIN = 4.0

# random pattern angles stay this far from the threshold so planted labels are unambiguous
THETA_CLEARANCE = 4.0


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    teeth_count: int = 3
    severity: float | None = None  # None: drawn per side from [15, 85]
    theta: float | None = None  # None: drawn per side from [15, 165] away from the threshold
    jitter: float = 0.0
    canvas: tuple[int, int] = (800, 600)
    tilt: float = 0.0
    arch: str = "mandibular"
    label_noise: float = 0.0
    duplicate_rate: float = 0.0

    def __post_init__(self):
        if self.severity is not None and not 0.0 < self.severity < 100.0:
            raise ValueError("planted severity must lie in (0, 100)")
        if self.theta is not None and not 0.0 < self.theta < 180.0:
            raise ValueError("planted theta must lie in (0, 180)")
        if self.teeth_count < 1:
            raise ValueError("need at least one tooth")
        if self.jitter < 0:
            raise ValueError("jitter bound must be non-negative")
        if self.arch not in ("maxillary", "mandibular"):
            raise ValueError("arch must be maxillary or mandibular")
        if not 0.0 <= self.label_noise <= 1.0 or not 0.0 <= self.duplicate_rate <= 1.0:
            raise ValueError("rates must lie in [0, 1]")


def _arc(center, rx, ry, start, stop, step=1.0):
    """Points on an axis-aligned ellipse arc, endpoints included, about ``step`` apart."""
    approx = max(rx, ry) * abs(stop - start)
    t = np.linspace(start, stop, max(int(math.ceil(approx / step)), 2) + 1)
    return np.column_stack([center[0] + rx * np.cos(t), center[1] + ry * np.sin(t)])


def _segment(a, b, step=1.0):
    a, b = np.asarray(a, float), np.asarray(b, float)
    n = max(int(math.ceil(np.hypot(*(b - a)) / step)), 1)
    t = np.linspace(0.0, 1.0, n + 1)[:, None]
    return a + t * (b - a)


def tooth_template():
    """Outline and landmarks of an upright tooth in local coordinates.

    Local frame: x lateral (left negative), y toward the crown, origin at
    the midpoint between the two CEJ points.
    """
    w, tip = TOOTH_WIDTH / 2, TIP_WIDTH / 2
    cej = {"left": np.array([-w, 0.0]), "right": np.array([w, 0.0])}
    apex = {"left": np.array([-tip, -ROOT_LENGTH]), "right": np.array([tip, -ROOT_LENGTH])}
    crown = _arc((0.0, 0.0), w, CROWN_HEIGHT, math.pi, 0.0)
    right_face = _segment(cej["right"], apex["right"])
    root_tip = _arc((0.0, -ROOT_LENGTH), tip, tip, 0.0, -math.pi)
    left_face = _segment(apex["left"], cej["left"])
    ring = np.vstack([crown, right_face[1:], root_tip[1:], left_face[1:-1]])
    return ring, cej, apex


def _frame(angle_deg: float, crown_up: bool):
    """Rotation taking local (lateral, crownward) to image coordinates."""
    a = math.radians(angle_deg)
    up = np.array([math.sin(a), -math.cos(a)])  # crownward for a mandibular tooth
    if not crown_up:
        up = -up
    # image-left stays local-left whichever way the crown points
    lateral = np.array([-up[1], up[0]])
    if lateral[0] < 0 or (lateral[0] == 0 and lateral[1] < 0):
        lateral = -lateral
    return np.column_stack([lateral, up])


def _draw_theta(rng, threshold):
    lo, hi = 15.0, 165.0
    below = threshold - THETA_CLEARANCE - lo
    above = hi - threshold - THETA_CLEARANCE
    u = rng.uniform(0.0, below + above)
    return lo + u if u < below else threshold + THETA_CLEARANCE + (u - below)


def _jitter(rng, bound):
    if bound == 0:
        return np.zeros(2)
    r = bound * math.sqrt(rng.uniform())
    a = rng.uniform(0.0, 2 * math.pi)
    return np.array([r * math.cos(a), r * math.sin(a)])


def generate(spec: SynthSpec, index: int = 0) -> RadiographRecord:
    """Build one synthetic record; ``index`` selects the record within a batch."""
    rng = np.random.default_rng([spec.seed, index])
    crown_up = spec.arch == "mandibular"
    rot = _frame(spec.tilt, crown_up)
    ring, cej_local, apex_local = tooth_template()

    width, height = spec.canvas
    pitch = TOOTH_WIDTH + TOOTH_GAP
    span = spec.teeth_count * pitch
    if span + 2 * MARGIN > width:
        raise InfeasibleSpec(f"{spec.teeth_count} teeth need {span + 2 * MARGIN:.0f} px of width, canvas has {width}")
    mid_local = np.array([0.0, (CROWN_HEIGHT - ROOT_LENGTH) / 2])

    teeth, bones, severities, labels = [], [], [], []
    for i in range(spec.teeth_count):
        centre = np.array([(width - span) / 2 + (i + 0.5) * pitch, height / 2])
        shift = centre - rot @ mid_local

        def place(p):
            return rot @ p + shift

        outline = np.array([place(p) for p in ring])
        tooth_id = f"T{i + 1:02d}"
        keypoints = []
        for side in ("left", "right"):
            s = spec.severity if spec.severity is not None else float(rng.uniform(15.0, 85.0))
            theta = spec.theta if spec.theta is not None else _draw_theta(rng, ANGULAR_THRESHOLD_DEGREES)
            cej, apex = place(cej_local[side]), place(apex_local[side])
            inter = cej + (s / 100.0) * (apex - cej)
            u = (cej - apex) / np.linalg.norm(cej - apex)
            outward = rot @ np.array([-1.0 if side == "left" else 1.0, 0.0])
            n_out = np.array([-u[1], u[0]])
            if np.dot(n_out, outward) < 0:
                n_out = -n_out
            t = math.radians(theta)
            v = math.cos(t) * u + math.sin(t) * n_out
            bones.append(_segment(inter, inter + BONE_STUB * v))
            for kind, p in (("CEJ", cej), ("Intersection", inter), ("Apex", apex)):
                loc = p + _jitter(rng, spec.jitter)
                conf = float(rng.uniform(0.8, 1.0))
                keypoints.append(KeypointDetection(kind, Point2D(*loc), conf, Box.around(loc, KEYPOINT_BOX / 2)))
                if spec.duplicate_rate and rng.uniform() < spec.duplicate_rate:
                    dup = loc + _jitter(rng, 1.0)
                    keypoints.append(
                        KeypointDetection(kind, Point2D(*dup), conf * 0.9, Box.around(dup, KEYPOINT_BOX / 2))
                    )
            severities.append(SideSeverity(tooth_id, side, s))
            label = label_for(theta)
            if spec.label_noise and rng.uniform() < spec.label_noise:
                label = "Horizontal" if label == "Angular" else "Angular"
            labels.append(SiteLabel(tooth_id, side, label, theta))
        lo, hi = outline.min(axis=0), outline.max(axis=0)
        teeth.append(ToothRecord(tooth_id, Box(*lo, *hi), Polyline(outline, closed=True), tuple(keypoints)))

    everything = np.vstack([t.outline.vertices for t in teeth] + bones)
    kp = np.array([[k.box.x1, k.box.y1, k.box.x2, k.box.y2] for t in teeth for k in t.keypoints])
    if (
        everything.min() < 0
        or everything[:, 0].max() > width
        or everything[:, 1].max() > height
        or kp.min() < 0
        or kp[:, [0, 2]].max() > width
        or kp[:, [1, 3]].max() > height
    ):
        raise InfeasibleSpec(f"geometry does not fit a {width}x{height} canvas")

    split = ("train", "validation", "test")[int(np.searchsorted([0.65, 0.80], rng.uniform(), side="right"))]
    return RadiographRecord(
        image_id=f"synth-{spec.seed}-{index:04d}",
        width=width,
        height=height,
        arch=spec.arch,
        occlusal_direction="up" if crown_up else "down",
        teeth=tuple(teeth),
        bone_lines=tuple(Polyline(b) for b in bones),
        ground_truth=GroundTruthBlock(tuple(severities), tuple(labels), verified=True),
        split=split,
    )


def generate_batch(spec: SynthSpec, count: int) -> list[RadiographRecord]:
    return [generate(spec, i) for i in range(count)]
