"""Assessment reports (CSV or JSON) and SVG overlays."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from xml.sax.saxutils import quoteattr

from .geom import project_onto_line
from .pattern import ANGULAR, CLASSIFIED, PatternResult
from .records import RadiographRecord
from .severity import COMPLETE, SideAssessment

REPORT_FORMAT = "alveolar-report"
REPORT_VERSION = 1

SEVERITY_COLUMNS = ("severity_percent",)
PATTERN_COLUMNS = ("theta_degrees", "pattern_label")
ALL_COLUMNS = ("image_id", "tooth_id", "side", "severity_percent", "flags", "theta_degrees", "pattern_label")
MODES = ("severity", "pattern", "both")

KIND_COLORS = {"CEJ": "#1f77b4", "Intersection": "#ff7f0e", "Apex": "#2ca02c"}


@dataclass(frozen=True)
class ReportRow:
    image_id: str
    tooth_id: str
    side: str
    severity_percent: float | None = None
    flags: tuple[str, ...] = ()
    theta_degrees: float | None = None
    pattern_label: str | None = None

    @property
    def key(self):
        return (self.image_id, self.tooth_id, self.side)


def report_rows(image_id: str, severity: list[SideAssessment], patterns: list[PatternResult] = ()) -> list[ReportRow]:
    """One row per tooth side, merging severity and pattern results."""
    by_side = {(p.tooth_id, p.side): p for p in patterns}
    rows = []
    for s in severity:
        flags = list(s.flags)
        if s.completeness != COMPLETE:
            flags.insert(0, "MissingPoints")
        p = by_side.pop((s.tooth_id, s.side), None)
        theta = label = None
        if p is not None:
            if p.status == CLASSIFIED:
                theta, label = p.theta, p.label
            else:
                flags.append("PatternUnmatched" if p.status == "unmatched" else "PatternError")
        rows.append(ReportRow(image_id, s.tooth_id, s.side, s.severity_percent, tuple(flags), theta, label))
    for p in by_side.values():
        rows.append(ReportRow(image_id, p.tooth_id, p.side, None, (), p.theta, p.label))
    return rows


def _columns(mode: str):
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    drop = {"severity": PATTERN_COLUMNS, "pattern": SEVERITY_COLUMNS, "both": ()}[mode]
    return [c for c in ALL_COLUMNS if c not in drop]


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, tuple):
        return ";".join(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_report(rows, format: str = "csv", mode: str = "both") -> str:
    """Render rows sorted by (image_id, tooth_id, side)."""
    cols = _columns(mode)
    rows = sorted(rows, key=lambda r: r.key)
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            d = asdict(r)
            w.writerow([_cell(d[c]) for c in cols])
        return buf.getvalue()
    if format == "json":
        out = []
        for r in rows:
            d = asdict(r)
            d["flags"] = list(d["flags"])
            out.append({c: d[c] for c in cols})
        doc = {"format": REPORT_FORMAT, "version": REPORT_VERSION, "mode": mode, "rows": out}
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"
    raise ValueError(f"unknown report format {format!r}")


def write_assessment_report(rows, path, format: str = "csv", mode: str = "both") -> None:
    text = format_report(rows, format, mode)
    try:
        Path(path).write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise OSError(f"cannot write report {path}: {exc.strerror or exc}") from exc


# -- overlays ----------------------------------------------------------------


def _f(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _pts(vertices) -> str:
    return " ".join(f"{_f(x)},{_f(y)}" for x, y in vertices)


def render_overlay_svg(record: RadiographRecord, severity=(), patterns=()) -> str:
    """SVG text with outlines, bone lines, side keypoints, fitted lines and labels."""
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{record.width}" '
        f'height="{record.height}" viewBox="0 0 {record.width} {record.height}">',
        f"<title>{quoteattr(record.image_id)[1:-1]}</title>",
        '<g fill="none" stroke="#808080" stroke-width="1">',
    ]
    for t in sorted(record.teeth, key=lambda t: t.tooth_id):
        if t.outline is not None:
            out.append(f'<polygon class="outline" data-tooth={quoteattr(t.tooth_id)} points="{_pts(t.outline.vertices)}"/>')
    for line in record.bone_lines:
        out.append(f'<polyline class="bone-line" stroke="#9467bd" points="{_pts(line.vertices)}"/>')
    out.append("</g>")

    drawn = set()
    for s in severity:
        for kind, p in (("CEJ", s.cej), ("Intersection", s.intersection), ("Apex", s.apex)):
            if p is None or (kind, s.tooth_id, p) in drawn:
                continue
            drawn.add((kind, s.tooth_id, p))
            out.append(
                f'<circle class="keypoint" data-kind="{kind}" cx="{_f(p.x)}" cy="{_f(p.y)}" r="3" fill="{KIND_COLORS[kind]}"/>'
            )
    for s in severity:
        if s.line is None:
            continue
        a, b = project_onto_line(s.cej, s.line), project_onto_line(s.apex, s.line)
        out.append(
            f'<line class="fit-line" x1="{_f(a.x)}" y1="{_f(a.y)}" x2="{_f(b.x)}" y2="{_f(b.y)}" stroke="#d62728" stroke-width="1"/>'
        )
        if s.severity_percent is not None:
            out.append(
                f'<text class="severity" x="{_f(s.intersection.x + 6)}" y="{_f(s.intersection.y)}" '
                f'font-size="12" fill="#d62728">{s.severity_percent:.1f}%</text>'
            )
    for p in patterns:
        if p.status == CLASSIFIED and p.label == ANGULAR:
            out.append(
                f'<circle class="angular-site" cx="{_f(p.intersection.x)}" cy="{_f(p.intersection.y)}" r="12" '
                'fill="none" stroke="#ff0000" stroke-width="2"/>'
            )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_overlay(record: RadiographRecord, severity, patterns, path) -> None:
    text = render_overlay_svg(record, severity, patterns)
    try:
        Path(path).write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise OSError(f"cannot write overlay {path}: {exc.strerror or exc}") from exc
