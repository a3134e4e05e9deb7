"""Agreement and accuracy metrics.

Undefined values (zero denominators) are returned as ``None`` and written
out as ``undefined``; they are never coerced to zero.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateRatings, NoOverlap
from .geom import Box, as_polyline

OKS_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
ICC_FORMS = ("2,1", "3,1")


def box_iou(a, b) -> float:
    a, b = Box(*a), Box(*b)
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def oks(gt, pred, object_scale: float, falloff_k: float) -> float:
    """Object keypoint similarity of a single keypoint."""
    if object_scale <= 0 or falloff_k <= 0:
        raise ValueError("object_scale and falloff_k must be positive")
    d2 = (gt[0] - pred[0]) ** 2 + (gt[1] - pred[1]) ** 2
    return math.exp(-d2 / (2.0 * object_scale * falloff_k**2))


def object_oks(gt_points, pred_points, labeled, object_scale: float, falloff_ks) -> float | None:
    """Mean OKS over the labeled keypoints of one object; None if none labeled."""
    vals = [
        oks(g, p, object_scale, k)
        for g, p, v, k in zip(gt_points, pred_points, labeled, falloff_ks)
        if v
    ]
    return sum(vals) / len(vals) if vals else None


def average_precision(matches: Iterable[tuple[float, bool]], gt_count: int) -> float | None:
    """101-point interpolated AP of ranked detections.

    ``matches`` holds (confidence, is_true_positive) pairs. Returns None when
    ``gt_count`` is zero and there are detections to score.
    """
    if gt_count < 0:
        raise ValueError("gt_count must be non-negative")
    ranked = sorted(matches, key=lambda m: -m[0])
    if gt_count == 0:
        return None
    if not ranked:
        return 0.0
    tp = np.cumsum([bool(m[1]) for m in ranked])
    fp = np.cumsum([not m[1] for m in ranked])
    recall = tp / gt_count
    precision = tp / (tp + fp)
    # precision envelope: best precision at any recall >= r
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    levels = np.arange(101) / 100.0
    idx = np.searchsorted(recall, levels - 1e-12, side="left")
    hit = idx < len(recall)
    return float(np.where(hit, envelope[np.minimum(idx, len(recall) - 1)], 0.0).sum() / 101)


def greedy_match(confidences: Sequence[float], similarity, threshold: float) -> list[tuple[float, bool]]:
    """Match detections to ground truths in descending confidence order.

    ``similarity`` is a (detections, ground truths) matrix of OKS or IoU
    values. Each ground truth is claimed by at most one detection.
    """
    sim = np.asarray(similarity, dtype=float).reshape(len(confidences), -1)
    taken = np.zeros(sim.shape[1], dtype=bool)
    out = []
    for i in sorted(range(len(confidences)), key=lambda i: -confidences[i]):
        cand = np.where(taken, -1.0, sim[i])
        j = int(np.argmax(cand)) if cand.size else -1
        ok = j >= 0 and cand[j] >= threshold
        if ok:
            taken[j] = True
        out.append((confidences[i], ok))
    return out


def ap_over_thresholds(confidences, similarity, gt_count: int, thresholds=OKS_THRESHOLDS) -> dict:
    """AP at each threshold plus their mean (the AP50:95 figure)."""
    per = {t: average_precision(greedy_match(confidences, similarity, t), gt_count) for t in thresholds}
    vals = [v for v in per.values() if v is not None]
    mean = sum(vals) / len(vals) if len(vals) == len(per) else None
    return {"per_threshold": per, "mean": mean}


@dataclass(frozen=True)
class PairedRatings:
    items: tuple  # (subject_id, rating_a, rating_b)

    def __post_init__(self):
        if len(self.items) < 2:
            raise ValueError("need at least 2 subjects")
        for sid, a, b in self.items:
            if not (math.isfinite(a) and math.isfinite(b)):
                raise ValueError(f"non-finite rating for subject {sid}")

    def matrix(self) -> np.ndarray:
        return np.array([[a, b] for _, a, b in self.items], dtype=float)


def icc_agreement(ratings, form: str = "2,1") -> float:
    """Intraclass correlation of an (n subjects, k raters) table.

    ``form`` is ``"2,1"`` (two-way random, absolute agreement, single rater)
    or ``"3,1"`` (two-way mixed, consistency, single rater).
    """
    if form not in ICC_FORMS:
        raise ValueError(f"unknown ICC form {form!r}")
    x = ratings.matrix() if isinstance(ratings, PairedRatings) else np.asarray(ratings, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise ValueError("ratings must be an (n>=2, k>=2) table")
    n, k = x.shape
    grand = x.mean()
    ss_rows = k * ((x.mean(axis=1) - grand) ** 2).sum()
    ss_cols = n * ((x.mean(axis=0) - grand) ** 2).sum()
    ss_err = ((x - grand) ** 2).sum() - ss_rows - ss_cols
    msr = ss_rows / (n - 1)
    msc = ss_cols / (k - 1)
    mse = max(ss_err, 0.0) / ((n - 1) * (k - 1))
    scale = max(1.0, float(np.abs(x).max()) ** 2)
    if msr <= 1e-12 * scale:
        raise DegenerateRatings("between-subject variance is zero")
    if form == "3,1":
        return float((msr - mse) / (msr + (k - 1) * mse))
    return float((msr - mse) / (msr + (k - 1) * mse + k * (msc - mse) / n))


def _as_function_of(vertices: np.ndarray, swap: bool) -> tuple[np.ndarray, np.ndarray]:
    v = vertices[:, ::-1] if swap else vertices
    order = np.argsort(v[:, 0], kind="stable")
    return v[order, 0], v[order, 1]


def polyline_mse(gt, pred, samples: int = 100) -> float:
    """Mean squared ordinate difference over the shared abscissa range.

    Both lines are read as functions of the axis along which they spread
    more (extents summed over the two lines, so the choice is symmetric);
    vertices are taken in abscissa order.
    """
    gt, pred = as_polyline(gt), as_polyline(pred)
    ext = np.ptp(gt.vertices, axis=0) + np.ptp(pred.vertices, axis=0)
    swap = bool(ext[1] > ext[0])
    ga, gb = _as_function_of(gt.vertices, swap)
    pa, pb = _as_function_of(pred.vertices, swap)
    lo, hi = max(ga[0], pa[0]), min(ga[-1], pa[-1])
    if not hi > lo:
        raise NoOverlap("polylines share no abscissa range")
    xs = np.linspace(lo, hi, samples)
    diff = np.interp(xs, ga, gb) - np.interp(xs, pa, pb)
    return float(np.mean(diff**2))


@dataclass(frozen=True)
class ConfusionMatrix2:
    """Binary confusion counts; the positive class is Angular."""

    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @classmethod
    def from_labels(cls, truth, predicted, positive="Angular") -> "ConfusionMatrix2":
        tp = fp = fn = tn = 0
        for t, p in zip(truth, predicted, strict=True):
            if p == positive:
                tp, fp = (tp + 1, fp) if t == positive else (tp, fp + 1)
            else:
                fn, tn = (fn + 1, tn) if t == positive else (fn, tn + 1)
        return cls(tp, fp, fn, tn)


@dataclass(frozen=True)
class ConfusionMetrics:
    accuracy: float | None
    precision: float | None
    recall: float | None
    specificity: float | None
    f1: float | None

    @property
    def undefined(self) -> list[str]:
        return [k for k, v in asdict(self).items() if v is None]


def _ratio(num, den):
    return num / den if den > 0 else None


def confusion_metrics(m: ConfusionMatrix2) -> ConfusionMetrics:
    precision = _ratio(m.tp, m.tp + m.fp)
    recall = _ratio(m.tp, m.tp + m.fn)
    f1 = None
    if precision is not None and recall is not None and precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    return ConfusionMetrics(
        accuracy=_ratio(m.tp + m.tn, m.total),
        precision=precision,
        recall=recall,
        specificity=_ratio(m.tn, m.tn + m.fp),
        f1=f1,
    )


@dataclass(frozen=True)
class MetricRow:
    split: str
    metric: str
    value: float | None
    n: int


def _fmt(value):
    return "undefined" if value is None else repr(float(value))


def write_metrics(rows: Sequence[MetricRow], path, format: str = "csv") -> None:
    """Write metric rows as CSV or JSON, in the given order."""
    path = Path(path)
    if format == "csv":
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["split", "metric", "value", "n"])
            for r in rows:
                w.writerow([r.split, r.metric, _fmt(r.value), r.n])
    elif format == "json":
        doc = {"metrics": [asdict(r) for r in rows]}
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    else:
        raise ValueError(f"unknown format {format!r}")
