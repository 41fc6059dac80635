"""Command-line front end.

Exit codes: 0 success, 1 validation failures, 2 usage error, 3 input format error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from . import __version__
from .annotations import FLAG_NAMES, dataset_stats, load_dataset, serialize_dataset, validate
from .errors import (
    CapacityError,
    ConsistencyError,
    DomainError,
    FormatError,
    MissingReferenceError,
    ValidationError,
)
from .metrics import (
    FramePool,
    map_classes,
    classify_segments,
    evaluate_deciles,
    evaluate_metadata_split,
    evaluate_online,
    mean_over_classes,
)
from .offline import DEFAULT_ALPHAS, DEFAULT_NMS_THETA, evaluate_offline, read_detections
from .report import (
    FORMATS,
    Column,
    ReportDocument,
    Table,
    dir_digest,
    file_digest,
    metadata_table,
    read_metadata_results,
    render,
)
from .scores import load_score_dir, read_scores, save_score_dir, write_scores
from .synth import generate_annotations, generate_scores, parse_model, tvseries_like_dataset

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_FORMAT = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _split_arg(value: str) -> str | None:
    return None if value == "all" else value


def _load_inputs(args):
    ds = load_dataset(args.annotations)
    scores = load_score_dir(args.scores)
    inputs = {"annotations": file_digest(args.annotations), "scores": dir_digest(args.scores)}
    return ds, scores, inputs


def _doc(args, command, parameters, inputs, tables):
    return ReportDocument(command, __version__, parameters, inputs, tables)


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args):
    ds = load_dataset(args.annotations, strict=False)
    problems = validate(ds)
    for p in problems:
        print(p)
    if problems:
        return EXIT_INVALID, None
    table = Table(
        "validation",
        [Column("videos", "int"), Column("classes", "int"), Column("instances", "int"), Column("violations", "int")],
        [[len(ds.videos), ds.num_classes, len(ds.instances), 0]],
    )
    return EXIT_OK, _doc(args, "validate", {}, {"annotations": file_digest(args.annotations)}, [table])


def cmd_stats(args):
    ds = load_dataset(args.annotations)
    st = dataset_stats(ds, _split_arg(args.split))
    table = Table(
        "per-class statistics",
        [Column("class"), Column("instances", "int"), Column("positive_frames", "int"), Column("prevalence", "raw")],
    )
    for row in st.classes:
        table.rows.append([row.name, row.instances, row.positive_frames, row.prevalence])
    totals = Table(
        "totals",
        [Column("videos", "int"), Column("frames", "int"), Column("instances", "int"), Column("hours", "raw")],
        [[st.num_videos, st.total_frames, st.total_instances, st.total_hours]],
    )
    params = {"split": args.split}
    return EXIT_OK, _doc(args, "stats", params, {"annotations": file_digest(args.annotations)}, [table, totals])


def cmd_eval_online(args):
    ds, scores, inputs = _load_inputs(args)
    split = _split_arg(args.split)
    pool = FramePool(ds, scores, split)
    results = map_classes(lambda c: evaluate_online(ds, scores, c, split, pool), ds.num_classes, args.jobs)
    report = mean_over_classes(results)
    table = Table(
        "online detection",
        [
            Column("class"),
            Column("P", "int"),
            Column("N", "int"),
            Column("w", "raw"),
            Column("AP", "pct"),
            Column("cAP", "pct"),
        ],
    )
    for r in report.results:
        table.rows.append([ds.catalog[r.class_id], r.P, r.N, r.w, r.ap, r.cap])
    table.rows.append(["mean", None, None, None, report.map_value, report.mcap_value])
    return EXIT_OK, _doc(args, "eval-online", {"split": args.split}, inputs, [table])


def _class_selection(ds, name):
    if name == "all":
        return list(range(ds.num_classes))
    return [ds.class_id(name)]


def cmd_eval_deciles(args):
    ds, scores, inputs = _load_inputs(args)
    split = _split_arg(args.split)
    pool = FramePool(ds, scores, split)
    classes = _class_selection(ds, args.class_name)
    values = map_classes(lambda i: evaluate_deciles(ds, scores, classes[i], split, pool), len(classes), args.jobs)
    columns = [Column("class")] + [Column(f"{10 * d}-{10 * d + 10}%", "pct") for d in range(10)]
    table = Table("cAP per tenth of the action", columns)
    for c, row in zip(classes, values):
        table.rows.append([ds.catalog[c], *row])
    means = []
    for d in range(10):
        present = [row[d] for row in values if row[d] is not None]
        means.append(math.fsum(present) / len(present) if present else None)
    table.rows.append(["mean", *means])
    return EXIT_OK, _doc(args, "eval-deciles", {"split": args.split, "class": args.class_name}, inputs, [table])


def cmd_eval_metadata(args):
    ds, scores, inputs = _load_inputs(args)
    split = _split_arg(args.split)
    pool = FramePool(ds, scores, split)
    flags = list(FLAG_NAMES) if args.flag == "all" else [args.flag]
    overall = map_classes(lambda c: evaluate_online(ds, scores, c, split, pool).cap, ds.num_classes, args.jobs)
    diffs = {}
    for flag in flags:
        results = map_classes(
            lambda c: evaluate_metadata_split(
                ds, scores, c, flag, args.min_instances, args.complement, split, pool
            ),
            ds.num_classes,
            args.jobs,
        )
        diffs[flag] = [r.diff for r in results]
    table = metadata_table("metadata analysis", ds.catalog, overall, diffs)
    params = {
        "split": args.split,
        "flag": args.flag,
        "min_instances": args.min_instances,
        "complement": args.complement,
    }
    return EXIT_OK, _doc(args, "eval-metadata", params, inputs, [table])


def cmd_classify(args):
    ds, scores, inputs = _load_inputs(args)
    res = classify_segments(ds, scores, _split_arg(args.split))
    table = Table("segment classification", [Column("class"), Column("accuracy", "pct")])
    for name, acc in zip(ds.catalog, res.per_class):
        table.rows.append([name, acc])
    table.rows.append(["mean", res.mean_accuracy])
    return EXIT_OK, _doc(args, "classify", {"split": args.split}, inputs, [table])


def _parse_window(text: str):
    if text == "median":
        return "median"
    if text.startswith("fixed:"):
        try:
            return int(text[6:])
        except ValueError:
            pass
    raise UsageError(f"--window must be 'median' or 'fixed:N', got {text!r}")


def _parse_alphas(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(a) for a in text.split(","))
    except ValueError:
        raise UsageError(f"--alpha must be a comma-separated list of numbers, got {text!r}") from None


def cmd_eval_offline(args):
    alphas = _parse_alphas(args.alpha)
    window = _parse_window(args.window)
    strict = args.strict_iou == "on"
    if (args.scores is None) == (args.detections is None):
        raise UsageError("pass exactly one of --scores or --detections")
    ds = load_dataset(args.annotations)
    inputs = {"annotations": file_digest(args.annotations)}
    if args.scores is not None:
        inputs["scores"] = dir_digest(args.scores)
        rep = evaluate_offline(
            ds, scores=load_score_dir(args.scores), alphas=alphas, theta=args.nms_theta,
            window=window, strict=strict, split=_split_arg(args.split),
        )  # fmt: skip
    else:
        inputs["detections"] = file_digest(args.detections)
        dets = read_detections(Path(args.detections).read_bytes(), ds)
        rep = evaluate_offline(
            ds, detections=dets, alphas=alphas, theta=args.nms_theta, strict=strict, split=_split_arg(args.split)
        )
    columns = [Column("class"), Column("window", "int")] + [Column(f"AP@{a:g}", "pct") for a in alphas]
    table = Table("offline detection", columns)
    for c, name in enumerate(ds.catalog):
        table.rows.append([name, rep.window_lengths[c], *(row[c] for row in rep.ap)])
    table.rows.append(["mean", None, *rep.map_values])
    params = {
        "split": args.split,
        "alpha": ",".join(f"{a:g}" for a in alphas),
        "nms_theta": args.nms_theta,
        "window": args.window,
        "strict_iou": args.strict_iou,
    }
    return EXIT_OK, _doc(args, "eval-offline", params, inputs, [table])


def _parse_flag_rates(items) -> dict[str, float]:
    rates = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        try:
            rates[name] = float(value)
        except ValueError:
            raise UsageError(f"--flag-rate expects name=probability, got {item!r}") from None
        if not sep:
            raise UsageError(f"--flag-rate expects name=probability, got {item!r}")
    return rates


def cmd_synth(args):
    model = parse_model(args.model)
    if args.tvseries:
        ds = tvseries_like_dataset(args.seed)
    else:
        try:
            lo, hi = (int(x) for x in args.duration.split(":"))
        except ValueError:
            raise UsageError(f"--duration expects MIN:MAX, got {args.duration!r}") from None
        ds = generate_annotations(
            args.seed,
            args.videos,
            args.frames,
            args.classes,
            args.instances,
            (lo, hi),
            splits=tuple(args.splits.split(",")),
            flag_rates=_parse_flag_rates(args.flag_rate),
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ann_path = out / "annotations.oad"
    ann_path.write_bytes(serialize_dataset(ds))
    scores = generate_scores(ds, model, args.seed)
    save_score_dir(scores, out / "scores")
    table = Table(
        "generated",
        [Column("videos", "int"), Column("classes", "int"), Column("instances", "int"), Column("frames", "int")],
        [[len(ds.videos), ds.num_classes, len(ds.instances), sum(v.num_frames for v in ds.videos.values())]],
    )
    params = {"seed": args.seed, "model": args.model, "tvseries": args.tvseries}
    inputs = {"annotations": file_digest(ann_path), "scores": dir_digest(out / "scores")}
    return EXIT_OK, _doc(args, "synth", params, inputs, [table])


def _score_format(path: Path) -> str:
    if path.suffix == ".oads":
        return "binary"
    if path.suffix == ".csv":
        return "csv"
    raise UsageError(f"cannot infer score format of {path.name!r} (use .oads or .csv)")


def cmd_convert(args):
    src, dst = Path(args.input), Path(args.output_file)
    names = load_dataset(args.annotations).catalog if args.annotations else None
    track = read_scores(src.read_bytes(), _score_format(src), src.stem, names)
    dst.write_bytes(write_scores(track, _score_format(dst), names))
    table = Table(
        "converted", [Column("frames", "int"), Column("classes", "int")], [[track.num_frames, track.num_classes]]
    )
    return EXIT_OK, _doc(args, "convert", {}, {"input": file_digest(src), "output": file_digest(dst)}, [table])


def cmd_report(args):
    text = Path(args.results).read_text(encoding="utf-8")
    models = read_metadata_results(text)
    tables = [metadata_table(model, names, overall, diffs) for model, (names, overall, diffs) in models.items()]
    return EXIT_OK, _doc(args, "report", {}, {"results": file_digest(args.results)}, tables)


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="oadeval", description="Online action detection evaluation toolkit.")
    parser.add_argument("--version", action="version", version=f"oadeval {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text, scored=True, split_default="test"):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--format", choices=FORMATS, default="markdown")
        p.add_argument("--output", "-o", help="write the report here instead of stdout")
        if scored:
            p.add_argument("--annotations", "-a", required=True)
            p.add_argument("--scores", "-s", required=True, help="directory of <video_id>.oads files")
        p.add_argument("--split", default=split_default, help="train|validation|test|all")
        p.add_argument("--jobs", "-j", type=int, default=1, help="worker threads for per-class work")
        return p

    p = add("validate", cmd_validate, "check an annotation file", scored=False)
    p.add_argument("annotations")
    p = add("stats", cmd_stats, "per-class statistics", scored=False, split_default="all")
    p.add_argument("annotations")
    add("eval-online", cmd_eval_online, "frame-level AP / cAP per class")
    p = add("eval-deciles", cmd_eval_deciles, "cAP per tenth of the action")
    p.add_argument("--class", dest="class_name", default="all")
    p = add("eval-metadata", cmd_eval_metadata, "cAP difference between flagged and unflagged instances")
    p.add_argument("--flag", default="all", help="flag name, length_q=K, motion_q=K, or all")
    p.add_argument("--min-instances", type=int, default=5)
    p.add_argument("--complement", choices=("exclude", "negative"), default="exclude")
    add("classify", cmd_classify, "segment classification accuracy")

    p = add("eval-offline", cmd_eval_offline, "offline detection AP per overlap ratio", scored=False)
    p.add_argument("--annotations", "-a", required=True)
    p.add_argument("--scores", "-s")
    p.add_argument("--detections", "-d")
    p.add_argument("--alpha", default=",".join(f"{a:g}" for a in DEFAULT_ALPHAS))
    p.add_argument("--nms-theta", type=float, default=DEFAULT_NMS_THETA)
    p.add_argument("--window", default="median", help="median | fixed:N")
    p.add_argument("--strict-iou", choices=("on", "off"), default="on")

    p = add("synth", cmd_synth, "generate a synthetic dataset and scores", scored=False)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--model", default="oracle", help="oracle | random | noisy:S | ramp | delayed:N[%%][@flag]")
    p.add_argument("--videos", type=int, default=4)
    p.add_argument("--frames", type=int, default=5000)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--instances", type=int, default=20, help="instances per class")
    p.add_argument("--duration", default="20:100", help="MIN:MAX instance length in frames")
    p.add_argument("--splits", default="test", help="comma-separated splits assigned round-robin")
    p.add_argument("--flag-rate", action="append", help="flag=probability, repeatable")
    p.add_argument("--tvseries", action="store_true", help="27 videos, 30 classes, 6,231 instances")

    p = add("convert", cmd_convert, "convert scores between .oads and .csv", scored=False)
    p.add_argument("input")
    p.add_argument("output_file")
    p.add_argument("--annotations", "-a", help="take csv class names from this catalog")

    p = add("report", cmd_report, "render a per-class metadata results csv", scored=False)
    p.add_argument("results")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        code, doc = args.func(args)
    except UsageError as exc:
        print(f"oadeval: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"oadeval: invalid dataset: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (DomainError, CapacityError) as exc:
        print(f"oadeval: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, MissingReferenceError, ConsistencyError, UnicodeDecodeError) as exc:
        print(f"oadeval: input error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"oadeval: input error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    if doc is not None:
        text = render(doc, args.format)
        if args.output:
            Path(args.output).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
    else:
        print(f"oadeval: {args.command}: validation failures found", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
