"""Acceptance suite: one group of tests per criterion.

Run ``pytest tests/test_acceptance.py`` and read the "acceptance criteria"
section at the end of the output for one PASS/FAIL line per criterion.
"""

import json
import math
import time

import numpy as np
import pytest

from alveolar.cli import main
from alveolar.errors import RecordValidationError
from alveolar.evaluation import ConfusionMatrix2, confusion_metrics, icc_agreement, polyline_mse
from alveolar.geom import Box, Point2D, Polyline, fit_residuals, minimax_line
from alveolar.maskline import DEFAULT_THICKNESS, centerline_from_mask, mean_deviation, rasterize_polyline
from alveolar.pattern import ANGULAR_THRESHOLD_DEGREES, assess_radiograph_pattern
from alveolar.records import KeypointDetection, dump_records, map_geometry, parse_records
from alveolar.severity import assess_radiograph_severity, compute_severity, nms_merge
from alveolar.synth import SynthSpec, generate

from oracles import grid_minimax, icc_anova, lp_minimax, projection_parameter


def criterion(n, title):
    return pytest.mark.criterion(n, title)


def pipeline(rec):
    sev = assess_radiograph_severity(rec)
    return sev, assess_radiograph_pattern(rec, sev)


def rigid(rec, angle, shift):
    a = math.radians(angle)
    rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    c = np.array([rec.width / 2, rec.height / 2])
    return lambda p: (p - c) @ rot.T + c + shift


# -- 1 -----------------------------------------------------------------------


@criterion(1, "minimax fit: equal ripple and grid-oracle optimality on 1000 triples, < 5 s")
def test_minimax_fit_correctness():
    rng = np.random.default_rng(20240601)
    triples = []
    while len(triples) < 1000:
        p = rng.uniform(-100, 100, size=(3, 2))
        a = np.sort(p[:, 0] if np.ptp(p[:, 0]) >= np.ptp(p[:, 1]) else p[:, 1])
        if np.diff(a).min() > 1e-3:
            triples.append(p)
    start = time.perf_counter()
    fits_a, fits_b, ours = [], [], []
    for p in triples:
        line = minimax_line(*p)
        e = fit_residuals(p, line)
        s = math.copysign(1.0, e[0])
        assert abs(abs(e[0]) - abs(e[1])) <= 1e-9 and abs(abs(e[1]) - abs(e[2])) <= 1e-9
        assert math.copysign(1.0, e[1]) == -s and math.copysign(1.0, e[2]) == s
        fit = np.array(sorted(line.to_fit(q) for q in p))
        fits_a.append(fit[:, 0])
        fits_b.append(fit[:, 1])
        ours.append(max(abs(v) for v in e))
    fits_a, fits_b, ours = np.array(fits_a), np.array(fits_b), np.array(ours)
    for k in range(0, len(ours), 100):
        best, res = grid_minimax(fits_a[k : k + 100], fits_b[k : k + 100])
        # the grid never beats the closed form, and lands within its resolution of it
        assert np.all(best >= ours[k : k + 100] - 1e-9)
        assert np.all(best <= ours[k : k + 100] + res + 1e-9)
    assert time.perf_counter() - start < 5.0


# -- 2 -----------------------------------------------------------------------


@criterion(2, "severity oracle: 53.0% worked example, exact collinear cases, 500 planted severities")
def test_severity_worked_example():
    pts = [(0.0, 0.0), (1.0, 3.2), (2.0, 6.0)]
    m, c, _ = lp_minimax(pts)
    t = [projection_parameter(p, (0.0, c), (1.0, m + c)) for p in pts]
    assert 100 * (t[1] - t[0]) / (t[2] - t[0]) == pytest.approx(53.0, abs=1e-6)
    assert compute_severity(*pts).percent == pytest.approx(53.0, abs=1e-6)


@criterion(2, "severity oracle: 53.0% worked example, exact collinear cases, 500 planted severities")
def test_severity_collinear_exact():
    assert compute_severity((0, 0), (0, 3), (0, 10)).percent == 30.0
    assert round(compute_severity((0, 0), (3, 4), (6, 8)).percent, 12) == 50.0


@criterion(2, "severity oracle: 53.0% worked example, exact collinear cases, 500 planted severities")
def test_severity_planted_recovery():
    rng = np.random.default_rng(7)
    worst = 0.0
    for i in range(500):
        s = float(rng.uniform(0.5, 99.5))
        rec = generate(SynthSpec(seed=i, teeth_count=1, severity=s, tilt=float(rng.uniform(-40, 40))))
        for side in assess_radiograph_severity(rec):
            worst = max(worst, abs(side.severity_percent - s))
    assert worst <= 0.1


# -- 3 -----------------------------------------------------------------------


@criterion(3, "invariance: severity under translation/scale, theta and label under rigid transforms")
def test_severity_translation_scale():
    rng = np.random.default_rng(3)
    checked = 0
    while checked < 500:
        p = rng.uniform(-100, 100, size=(3, 2))
        a = np.sort(p[:, 0] if np.ptp(p[:, 0]) >= np.ptp(p[:, 1]) else p[:, 1])
        if np.diff(a).min() < 1.0 or abs(np.ptp(p[:, 0]) - np.ptp(p[:, 1])) < 1.0:
            continue
        base = compute_severity(*p).percent
        if abs(base) > 1e3:
            continue
        checked += 1
        shift = rng.uniform(-500, 500, size=2)
        k = rng.uniform(0.2, 5.0)
        centre = rng.uniform(-100, 100, size=2)
        for q in (p + shift, (p - centre) * k + centre):
            assert compute_severity(*q).percent == pytest.approx(base, rel=1e-9, abs=1e-9)


@criterion(3, "invariance: severity under translation/scale, theta and label under rigid transforms")
def test_pattern_rigid_invariance():
    rng = np.random.default_rng(4)
    compared = 0
    for i in range(40):
        rec = generate(SynthSpec(seed=100 + i, theta=float(rng.uniform(10, 170))))
        _, base = pipeline(rec)
        move = rigid(rec, float(rng.uniform(-180, 180)), rng.uniform(-60, 60, size=2))
        _, moved = pipeline(map_geometry(rec, move))
        assert len(moved) == len(base) == 6
        for r0 in base:
            target = move(np.array([r0.intersection]))[0]
            r1 = min(moved, key=lambda r: math.dist(r.intersection, target))
            assert abs(r1.theta - r0.theta) <= 0.5
            if abs(r0.theta - ANGULAR_THRESHOLD_DEGREES) > 1.0:
                assert r1.label == r0.label
                compared += 1
    assert compared > 200


# -- 4 -----------------------------------------------------------------------


@criterion(4, "threshold sweep 50, 54, 54.1372, 55, 60 degrees gives A, A, H, H, H")
def test_threshold_sweep():
    assert ANGULAR_THRESHOLD_DEGREES == 54.1372
    got = []
    for theta in (50.0, 54.0, 54.1372, 55.0, 60.0):
        labels = set()
        for seed, tilt in ((1, 0.0), (2, 23.0), (3, -35.0)):
            _, res = pipeline(generate(SynthSpec(seed=seed, theta=theta, severity=40.0, tilt=tilt)))
            labels |= {r.label[0] for r in res}
        assert len(labels) == 1
        got.append(labels.pop())
    assert got == ["A", "A", "H", "H", "H"]


# -- 5 -----------------------------------------------------------------------


@criterion(5, "mask-line roundtrip at 10 px: mean deviation <= 1.5 px on 100 smooth polylines, < 30 s")
def test_mask_line_roundtrip():
    rng = np.random.default_rng(5)
    start = time.perf_counter()
    devs = []
    for _ in range(100):
        length = rng.uniform(60, 220)
        x = np.linspace(0, length, 80)
        y = rng.uniform(0, 15) * np.sin(2 * np.pi * x / rng.uniform(80, 250) + rng.uniform(0, 2 * np.pi))
        a = rng.uniform(0, np.pi)
        pts = np.column_stack([x, y]) @ np.array([[np.cos(a), np.sin(a)], [-np.sin(a), np.cos(a)]])
        pts += 150 - pts.mean(axis=0)
        line = Polyline(pts)
        mask = rasterize_polyline(line, DEFAULT_THICKNESS, (300, 300))
        back = centerline_from_mask(mask)
        devs.append(mean_deviation(line, back, DEFAULT_THICKNESS / 2))
    assert max(devs) <= 1.5
    assert time.perf_counter() - start < 30.0


# -- 6 -----------------------------------------------------------------------


def _kp(kind, x, y, conf, box):
    return KeypointDetection(kind, Point2D(x, y), conf, Box(*box))


@criterion(6, "NMS: permutation invariance on 1000 sets at 0.6, IoU-1/3 and full-overlap examples")
def test_nms_permutation_invariance():
    rng = np.random.default_rng(6)
    kinds = ("CEJ", "Intersection", "Apex")
    for _ in range(1000):
        n = int(rng.integers(0, 15))
        dets = []
        for _ in range(n):
            x, y = rng.integers(0, 60, size=2).astype(float)
            h = float(rng.integers(3, 12))
            conf = float(rng.choice([0.5, 0.7, 0.9, rng.uniform()]))
            dets.append(_kp(kinds[int(rng.integers(0, 3))], x, y, conf, (x - h, y - h, x + h, y + h)))
        ref = nms_merge(dets, 0.6)
        for _ in range(3):
            perm = [dets[i] for i in rng.permutation(n)]
            assert nms_merge(perm, 0.6) == ref


@criterion(6, "NMS: permutation invariance on 1000 sets at 0.6, IoU-1/3 and full-overlap examples")
def test_nms_examples():
    a = _kp("CEJ", 5, 5, 0.9, (0, 0, 10, 10))
    b = _kp("CEJ", 5, 10, 0.8, (0, 5, 10, 15))
    assert nms_merge([a, b], 0.6) == [a, b]
    c = _kp("CEJ", 5, 5, 0.8, (0, 0, 10, 10))
    assert nms_merge([c, a], 0.6) == [a]


# -- 7 -----------------------------------------------------------------------


@criterion(7, "metric fidelity: confusion rounding, ICC fixtures, ramp MSE")
@pytest.mark.xfail(
    strict=True,
    reason="counts (371, 6, 78, 184) give precision 371/377 = 0.98408, which rounds to 0.984 not 0.985; "
    "no 2x2 matrix with 639 sites rounds to all three reported values",
)
def test_confusion_reported_rounding():
    m = confusion_metrics(ConfusionMatrix2(371, 6, 78, 184))
    assert round(m.accuracy, 3) == 0.869
    assert round(m.recall, 3) == 0.826
    assert round(m.precision, 3) == 0.985


@criterion(7, "metric fidelity: confusion rounding, ICC fixtures, ramp MSE")
def test_confusion_derived_values():
    m = confusion_metrics(ConfusionMatrix2(371, 6, 78, 184))
    assert m.accuracy == 555 / 639 and m.precision == 371 / 377 and m.recall == 371 / 449
    assert (round(m.accuracy, 3), round(m.recall, 3)) == (0.869, 0.826)


@criterion(7, "metric fidelity: confusion rounding, ICC fixtures, ramp MSE")
def test_icc_fixtures():
    fixtures = [
        ([1, 2, 3, 4], [2, 3, 4, 5]),
        ([10, 20, 35, 41, 52], [12, 18, 30, 45, 50]),
        ([30, 40, 50, 60, 70, 80], [35, 38, 57, 52, 75, 90]),
    ]
    for a, b in fixtures:
        icc2, icc3 = icc_anova(a, b)
        x = np.column_stack([a, b])
        assert abs(icc_agreement(x, "2,1") - icc2) <= 1e-9
        assert abs(icc_agreement(x, "3,1") - icc3) <= 1e-9
    assert abs(icc_agreement(np.column_stack(fixtures[0]), "2,1") - 10 / 13) <= 1e-9


@criterion(7, "metric fidelity: confusion rounding, ICC fixtures, ramp MSE")
def test_ramp_mse():
    mse = polyline_mse([(0, 0), (10, 0)], [(0, 0), (10, 10)])
    assert abs(mse - 100 / 3) <= 0.01 * 100 / 3


# -- 8 -----------------------------------------------------------------------


@criterion(8, "end-to-end determinism on 50 records; strict mode names every seeded malformation")
def test_analyze_deterministic(tmp_path):
    batch = tmp_path / "batch.json"
    assert main(["synth", "--n", "50", "--seed", "8", "--duplicate-rate", "0.2", "--jitter", "0.3", "--output", str(batch)]) == 0
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["analyze", "--mode", "both", "--overlays", "--input", str(batch), "--out", str(out)]) == 0
        outs.append(out)
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
    assert len(files) == 51
    for f in files:
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()


MALFORMATIONS = [
    ("teeth[0].keypoints[0].kind", lambda r: r["teeth"][0]["keypoints"][0].update(kind="Root")),
    ("teeth[0].keypoints[0].confidence", lambda r: r["teeth"][0]["keypoints"][0].update(confidence=2.0)),
    ("teeth[0].keypoints[0].x", lambda r: r["teeth"][0]["keypoints"][0].update(x=-5.0)),
    ("teeth[0].keypoints[1].y", lambda r: r["teeth"][0]["keypoints"][1].pop("y")),
    ("teeth[0].box", lambda r: r["teeth"][0].update(box=[5, 5, 1, 1])),
    ("teeth[0].outline", lambda r: r["teeth"][0].update(outline=[[1, 1]])),
    ("teeth[0].tooth_id", lambda r: r["teeth"][0].update(tooth_id=7)),
    ("bone_lines[0]", lambda r: r["bone_lines"].__setitem__(0, "line")),
    ("width", lambda r: r.update(width=-3)),
    ("arch", lambda r: r.update(arch="sideways")),
    ("occlusal_direction", lambda r: r.update(occlusal_direction="left")),
    ("split", lambda r: r.update(split="dev")),
    ("ground_truth.severity[0].tooth_id", lambda r: r["ground_truth"]["severity"][0].update(tooth_id="T99")),
    ("ground_truth.patterns[0].label", lambda r: r["ground_truth"]["patterns"][0].update(label="Vertical")),
    ("image_id", lambda r: r.update(image_id=None)),
]


@criterion(8, "end-to-end determinism on 50 records; strict mode names every seeded malformation")
def test_strict_rejects_seeded_malformations():
    clean = json.loads(dump_records([generate(SynthSpec(seed=80, teeth_count=2), i) for i in range(len(MALFORMATIONS))]))
    doc = json.loads(json.dumps(clean))
    for i, (_, mutate) in enumerate(MALFORMATIONS):
        mutate(doc["records"][i])
    with pytest.raises(RecordValidationError) as info:
        parse_records(doc)
    named = {(d.record, d.field) for d in info.value.diagnostics}
    for i, (field, _) in enumerate(MALFORMATIONS):
        assert (i, f"records[{i}].{field}") in named, field
    # and the untouched batch is accepted
    assert len(parse_records(clean).records) == len(MALFORMATIONS)
