"""Command-line front end: analyze, eval, convert, synth.

Exit status: 0 on success, 1 on validation failure (bad records, bad
config, infeasible synth spec, missing ground truth), 2 on I/O failure or
usage error.

Settings are resolved as command-line flag, then the JSON config file named
by ``--config`` or the ``ALVEOLAR_CONFIG`` environment variable, then the
built-in default.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .annotations import convert_annotations
from .errors import AlveolarError, DegenerateRatings, InfeasibleSpec, NoOverlap, RecordValidationError, SchemaError
from .evaluation import (
    ICC_FORMS,
    ConfusionMatrix2,
    MetricRow,
    confusion_metrics,
    icc_agreement,
    polyline_mse,
    write_metrics,
)
from .maskline import DEFAULT_THICKNESS, centerline_from_mask, mean_deviation, rasterize_polyline
from .pattern import (
    ANGULAR_THRESHOLD_DEGREES,
    DEFAULT_MATCH_DISTANCE,
    DEFAULT_SEVERITY_FLOOR,
    PatternConfig,
    assess_radiograph_pattern,
)
from .records import SPLITS, parse_record_file, parse_records, write_record_file
from .report import MODES, render_overlay_svg, report_rows, write_assessment_report
from .severity import DEFAULT_IOU_THRESHOLD, assess_radiograph_severity
from .synth import SynthSpec, generate

CONFIG_ENV = "ALVEOLAR_CONFIG"

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2


@dataclass(frozen=True)
class RunConfig:
    inputs: tuple[str, ...] = ()
    out_dir: str = "out"
    mode: str = "both"
    strict: bool = True
    iou_threshold: float = DEFAULT_IOU_THRESHOLD
    threshold_degrees: float = ANGULAR_THRESHOLD_DEGREES
    tangent_window: int = 7
    snap_distance: float = DEFAULT_MATCH_DISTANCE
    severity_floor: float = DEFAULT_SEVERITY_FLOOR
    samples: int = 100
    split: str | None = None
    seed: int = 0
    workers: int = 0  # 0: one per available CPU
    format: str = "csv"
    overlays: bool = False
    icc_form: str = "2,1"

    def __post_init__(self):
        if not 0.0 < self.iou_threshold < 1.0:
            raise ValueError(f"iou_threshold must be in (0, 1), got {self.iou_threshold}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.split is not None and self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}")
        if self.samples < 2:
            raise ValueError("samples must be at least 2")
        if self.icc_form not in ICC_FORMS:
            raise ValueError(f"icc_form must be one of {ICC_FORMS}")
        if self.workers < 0:
            raise ValueError("workers must be non-negative")
        self.pattern_config()  # validates the pattern settings

    def pattern_config(self) -> PatternConfig:
        return PatternConfig(
            threshold_degrees=self.threshold_degrees,
            tangent_window=self.tangent_window,
            snap_distance=self.snap_distance,
            severity_floor=self.severity_floor,
        )


_CONFIG_KEYS = {f.name for f in fields(RunConfig)} - {"inputs", "out_dir"}


def _fail(code: int, message: str) -> int:
    print(f"alveolar: {message}", file=sys.stderr)
    return code


def load_config_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"config {path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ValueError(f"config {path}: expected a JSON object")
    unknown = sorted(set(data) - _CONFIG_KEYS)
    if unknown:
        raise ValueError(f"config {path}: unknown keys {unknown}")
    return data


def resolve_config(args, **fixed) -> RunConfig:
    """Merge flags over config file over defaults."""
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV)
    values = load_config_file(path) if path else {}
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    values.update(fixed)
    return RunConfig(**values)


def _load(path, strict: bool):
    """Parse a record file, printing diagnostics; None means stop with exit 1."""
    try:
        batch = parse_record_file(path, strict=strict)
    except RecordValidationError as exc:
        for d in exc.diagnostics:
            print(f"{path}: {d}", file=sys.stderr)
        return None
    except SchemaError as exc:
        print(f"{path}: error: {exc}", file=sys.stderr)
        return None
    for d in batch.diagnostics:
        print(f"{path}: {d}", file=sys.stderr)
    return batch.records


# -- analyze -----------------------------------------------------------------


def analyze_record(record, cfg: RunConfig):
    """Severity and pattern for one record; returns (rows, svg or None)."""
    severity = assess_radiograph_severity(record, cfg.iou_threshold)
    patterns = assess_radiograph_pattern(record, severity, cfg.pattern_config()) if cfg.mode != "severity" else []
    rows = report_rows(record.image_id, severity, patterns)
    svg = render_overlay_svg(record, severity, patterns) if cfg.overlays else None
    return rows, svg


def _analyze_job(job):
    return analyze_record(*job)


def run_analysis(records, cfg: RunConfig):
    workers = cfg.workers or os.cpu_count() or 1
    jobs = [(r, cfg) for r in records]
    if workers == 1 or len(jobs) < 2:
        return [_analyze_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        # map keeps submission order, so the merge is deterministic
        return list(pool.map(_analyze_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def _select(records, split):
    return [r for r in records if split is None or r.split == split]


def cmd_analyze(args) -> int:
    cfg = resolve_config(args, inputs=tuple(args.input), out_dir=args.out)
    records = []
    for path in cfg.inputs:
        loaded = _load(path, cfg.strict)
        if loaded is None:
            return EXIT_INVALID
        records.extend(loaded)
    ids = [r.image_id for r in records]
    if len(set(ids)) != len(ids):
        return _fail(EXIT_INVALID, "duplicate image_id across input files")
    records = sorted(_select(records, cfg.split), key=lambda r: r.image_id)
    results = run_analysis(records, cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [row for rows, _ in results for row in rows]
    report = out / f"report.{cfg.format}"
    write_assessment_report(rows, report, cfg.format, cfg.mode)
    if cfg.overlays:
        odir = out / "overlays"
        odir.mkdir(exist_ok=True)
        for rec, (_, svg) in zip(records, results):
            (odir / f"{rec.image_id}.svg").write_text(svg, encoding="utf-8", newline="\n")
    print(f"{len(records)} records, {len(rows)} sides -> {report}")
    return EXIT_OK


# -- eval --------------------------------------------------------------------


def _site_key(image_id, tooth_id, side):
    return (image_id, tooth_id, side)


def evaluate(pred_records, truth_records, cfg: RunConfig) -> list[MetricRow]:
    """ICC per split, bone-line MSE and pattern confusion of predictions vs truth."""
    truth = {r.image_id: r for r in truth_records}
    rows: list[MetricRow] = []
    pred_sev, pred_lab = {}, {}
    mses = []
    pairs_by_split: dict[str, list] = {}
    labels_t, labels_p = [], []

    preds = [p for p in pred_records if p.image_id in truth]
    results = run_analysis(preds, replace(cfg, mode="both", overlays=False))
    for rec, (rep, _) in zip(preds, results):
        for r in rep:
            key = _site_key(rec.image_id, r.tooth_id, r.side)
            if r.severity_percent is not None:
                pred_sev[key] = r.severity_percent
            if r.pattern_label is not None:
                pred_lab[key] = r.pattern_label

    for image_id in sorted(truth):
        t = truth[image_id]
        gt = t.ground_truth
        split = t.split or "unsplit"
        for s in gt.severity:
            key = _site_key(image_id, s.tooth_id, s.side)
            if key in pred_sev:
                pairs_by_split.setdefault(split, []).append((pred_sev[key], s.percent))
        for s in gt.patterns:
            key = _site_key(image_id, s.tooth_id, s.side)
            if key in pred_lab:
                labels_t.append(s.label)
                labels_p.append(pred_lab[key])
        pred = next((p for p in preds if p.image_id == image_id), None)
        if pred is None:
            continue
        pred_lines = list(pred.bone_lines)
        if not pred_lines and pred.bone_line_masks:
            for m in pred.bone_line_masks:
                try:
                    pred_lines.append(centerline_from_mask(m))
                except AlveolarError:
                    pass
        for g in t.bone_lines:
            best = None
            for p in pred_lines:
                try:
                    v = polyline_mse(g, p, cfg.samples)
                except NoOverlap:
                    continue
                best = v if best is None else min(best, v)
            if best is not None:
                mses.append(best)

    all_pairs = []
    for split in sorted(pairs_by_split) + ["all"]:
        pairs = all_pairs if split == "all" else pairs_by_split[split]
        if split != "all":
            all_pairs.extend(pairs)
        value = None
        if len(pairs) >= 2:
            try:
                value = icc_agreement(np.array(pairs), cfg.icc_form)
            except DegenerateRatings:
                value = None
        rows.append(MetricRow(split, f"icc({cfg.icc_form})", value, len(pairs)))

    rows.append(MetricRow("all", "bone_line_mse_mean", float(np.mean(mses)) if mses else None, len(mses)))
    cm = ConfusionMatrix2.from_labels(labels_t, labels_p)
    n = cm.total
    for name in ("tp", "fp", "fn", "tn"):
        rows.append(MetricRow("all", name, float(getattr(cm, name)), n))
    met = confusion_metrics(cm)
    for name in ("accuracy", "precision", "recall", "specificity", "f1"):
        rows.append(MetricRow("all", name, getattr(met, name), n))
    return rows


def cmd_eval(args) -> int:
    cfg = resolve_config(args, out_dir=args.out)
    pred = _load(args.pred, cfg.strict)
    truth = _load(args.truth, cfg.strict)
    if pred is None or truth is None:
        return EXIT_INVALID
    truth = _select(truth, cfg.split)
    missing = [r.image_id for r in truth if r.ground_truth is None]
    if missing:
        return _fail(EXIT_INVALID, f"no ground truth in {len(missing)} record(s), first {missing[0]!r}")
    if not truth:
        return _fail(EXIT_INVALID, "no ground-truth records to evaluate")
    rows = evaluate(pred, truth, cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"metrics.{cfg.format}"
    write_metrics(rows, path, cfg.format)
    for r in rows:
        value = "undefined" if r.value is None else f"{r.value:.4f}"
        print(f"{r.split:>10}  {r.metric:<20} {value:>10}  n={r.n}")
    return EXIT_OK


# -- convert -----------------------------------------------------------------


def _lines_to_masks(rec, thickness):
    masks = tuple(rasterize_polyline(p, thickness, (rec.width, rec.height)) for p in rec.bone_lines)
    return replace(rec, bone_lines=(), bone_line_masks=masks)


def _masks_to_lines(rec):
    lines, problems = [], []
    for i, m in enumerate(rec.bone_line_masks or ()):
        try:
            lines.append(centerline_from_mask(m))
        except AlveolarError as exc:
            problems.append(f"{rec.image_id}: bone_line_masks[{i}]: {type(exc).__name__}: {exc}")
    return replace(rec, bone_lines=tuple(lines), bone_line_masks=None), problems


def cmd_convert(args) -> int:
    strict = True if args.strict is None else args.strict
    if args.direction == "annotations-to-records":
        try:
            doc = json.loads(Path(args.input).read_text(encoding="utf-8"))
            name_map = json.loads(Path(args.name_map).read_text(encoding="utf-8")) if args.name_map else None
        except json.JSONDecodeError as exc:
            return _fail(EXIT_INVALID, f"invalid JSON: line {exc.lineno} column {exc.colno}: {exc.msg}")
        try:
            batch = parse_records(convert_annotations(doc, name_map), strict=strict)
        except RecordValidationError as exc:
            for d in exc.diagnostics:
                print(f"{args.input}: {d}", file=sys.stderr)
            return EXIT_INVALID
        except SchemaError as exc:
            return _fail(EXIT_INVALID, f"{args.input}: {exc}")
        for d in batch.diagnostics:
            print(f"{args.input}: {d}", file=sys.stderr)
        write_record_file(batch.records, args.output)
        return EXIT_OK

    records = _load(args.input, strict)
    if records is None:
        return EXIT_INVALID
    if args.direction == "lines-to-masks":
        out = [_lines_to_masks(r, args.thickness) for r in records]
    else:
        out, problems = [], []
        for r in records:
            conv, probs = _masks_to_lines(r)
            out.append(conv)
            problems.extend(probs)
        for p in problems:
            print(f"{'error' if strict else 'warning'}: {p}", file=sys.stderr)
        if problems and strict:
            return EXIT_INVALID
        if args.reference:
            ref = _load(args.reference, strict)
            if ref is None:
                return EXIT_INVALID
            devs = deviation_report(ref, out, args.thickness / 2)
            if devs:
                print(f"roundtrip mean deviation {np.mean(devs):.4f} px over {len(devs)} lines (max {np.max(devs):.4f})")
            else:
                print("roundtrip: no comparable lines")
    write_record_file(out, args.output)
    return EXIT_OK


def deviation_report(reference, converted, exclude) -> list[float]:
    """Mean deviation of each converted line from its reference, paired by position."""
    by_id = {r.image_id: r for r in converted}
    devs = []
    for ref in reference:
        conv = by_id.get(ref.image_id)
        if conv is None:
            continue
        for a, b in zip(ref.bone_lines, conv.bone_lines):
            devs.append(mean_deviation(a, b, exclude))
    return devs


# -- synth -------------------------------------------------------------------


def _canvas(text):
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}") from None


def cmd_synth(args) -> int:
    try:
        spec = SynthSpec(
            seed=args.seed,
            teeth_count=args.teeth,
            severity=args.severity,
            theta=args.theta,
            jitter=args.jitter,
            canvas=args.canvas,
            tilt=args.tilt,
            arch=args.arch,
            label_noise=args.label_noise,
            duplicate_rate=args.duplicate_rate,
        )
        records = [generate(spec, i) for i in range(args.n)]
    except (InfeasibleSpec, ValueError) as exc:
        return _fail(EXIT_INVALID, f"infeasible synth spec: {exc}")
    write_record_file(records, args.output)
    print(f"{len(records)} records -> {args.output}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _thickness(text):
    v = float(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"thickness must be at least 1 px, got {text}")
    return v


def _add_analysis_flags(p):
    p.add_argument("--iou-threshold", dest="iou_threshold", type=float, help=f"keypoint NMS IoU threshold (default: {DEFAULT_IOU_THRESHOLD})")
    p.add_argument(
        "--threshold",
        dest="threshold_degrees",
        type=float,
        help=f"angle below which a site is Angular, degrees (default: {ANGULAR_THRESHOLD_DEGREES})",
    )
    p.add_argument("--tangent-window", dest="tangent_window", type=int, help="vertices per tangent estimate (default: 7)")
    p.add_argument(
        "--snap-distance",
        dest="snap_distance",
        type=_positive_float,
        help=f"max px from intersection to outline/bone line (default: {DEFAULT_MATCH_DISTANCE})",
    )
    p.add_argument(
        "--severity-floor",
        dest="severity_floor",
        type=float,
        help=f"classify pattern only at sides with severity >= this percent (default: {DEFAULT_SEVERITY_FLOOR})",
    )
    p.add_argument("--split", choices=SPLITS, help="only use records with this split tag (default: all)")
    p.add_argument("--workers", type=int, help="worker processes, 0 = one per CPU (default: 0)")
    p.add_argument("--format", choices=("csv", "json"), help="output format (default: csv)")
    strict = p.add_mutually_exclusive_group()
    strict.add_argument("--strict", dest="strict", action="store_const", const=True, help="fail on any invalid record (default)")
    strict.add_argument("--lenient", dest="strict", action="store_const", const=False, help="skip invalid records with a warning")
    p.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV} if set)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="alveolar", description="Alveolar bone-loss geometry engine.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="severity and pattern per tooth side")
    p.add_argument("--input", nargs="+", required=True, help="record file(s)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--mode", choices=MODES, help="pipelines to run (default: both)")
    p.add_argument("--overlays", action="store_const", const=True, help="also write one SVG overlay per record")
    _add_analysis_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("eval", help="compare predictions with ground truth")
    p.add_argument("--pred", required=True, help="record file with detections")
    p.add_argument("--truth", required=True, help="record file with ground-truth blocks")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--samples", type=int, help="sample count for bone-line MSE (default: 100)")
    p.add_argument("--icc-form", dest="icc_form", choices=ICC_FORMS, help="ICC form (default: 2,1)")
    _add_analysis_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("convert", help="convert bone lines, masks and annotation exports")
    p.add_argument("--input", required=True, help="input file")
    p.add_argument("--output", required=True, help="output record file")
    p.add_argument(
        "--direction",
        required=True,
        choices=("lines-to-masks", "masks-to-lines", "annotations-to-records"),
        help="conversion to apply",
    )
    p.add_argument("--thickness", type=_thickness, default=DEFAULT_THICKNESS, help=f"stroke width in px (default: {DEFAULT_THICKNESS:g})")
    p.add_argument("--reference", help="records with original lines; prints the roundtrip deviation (masks-to-lines)")
    p.add_argument("--name-map", dest="name_map", help="JSON object mapping export feature names to roles")
    strict = p.add_mutually_exclusive_group()
    strict.add_argument("--strict", dest="strict", action="store_const", const=True, help="fail on any invalid input (default)")
    strict.add_argument("--lenient", dest="strict", action="store_const", const=False, help="skip invalid inputs with a warning")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("synth", help="write a synthetic record batch")
    p.add_argument("--output", required=True, help="output record file")
    p.add_argument("--n", type=int, default=10, help="number of records (default: 10)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    p.add_argument("--teeth", type=int, default=3, help="teeth per record (default: 3)")
    p.add_argument("--severity", type=float, help="planted severity percent (default: random in [15, 85])")
    p.add_argument("--theta", type=float, help="planted pattern angle, degrees (default: random in [15, 165])")
    p.add_argument("--jitter", type=float, default=0.0, help="keypoint jitter bound in px (default: 0)")
    p.add_argument("--canvas", type=_canvas, default=(800, 600), help="canvas WIDTHxHEIGHT (default: 800x600)")
    p.add_argument("--tilt", type=float, default=0.0, help="tooth tilt, degrees (default: 0)")
    p.add_argument("--arch", choices=("maxillary", "mandibular"), default="mandibular", help="arch (default: mandibular)")
    p.add_argument("--label-noise", dest="label_noise", type=float, default=0.0, help="probability of flipping a planted label (default: 0)")
    p.add_argument(
        "--duplicate-rate", dest="duplicate_rate", type=float, default=0.0, help="probability of a duplicate detection per keypoint (default: 0)"
    )
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        return _fail(EXIT_INVALID, str(exc))
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))


if __name__ == "__main__":
    sys.exit(main())
