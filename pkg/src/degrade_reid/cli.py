"""Command-line entry point: kernel-dump, degrade, split, eval, bench, plot.

Exit codes: 0 success, 1 parameter/validation/usage error, 2 I/O error.
Every randomized subcommand takes an explicit --seed; nothing is seeded from
the clock, so identical invocations produce identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import PIL

from . import __version__, kernels
from .embeddings import read_embeddings
from .errors import GenerationError, ParameterError, TrainingError, ValidationError
from .imageops import load_image, save_image_png
from .metrics import DEFAULT_KS, search, stratified_report
from .pipeline import (
    PIPELINE_SIDE,
    OpTrace,
    degrade_batch,
    load_ranges,
    normalize_kind,
    write_traces,
)
from .splitting import (
    SplitConfig,
    read_assignment,
    read_manifest,
    split_dataset,
    validate_split,
    write_assignment,
)

log = logging.getLogger("degrade_reid")


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; usage errors are exit 1 here
        raise UsageError(message)


def _jpeg_identity() -> str:
    return f"Pillow {PIL.__version__}"


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="degrade-reid",
                     description="Deterministic image degradation and re-id evaluation")
    parser.add_argument("--version", action="version",
                        version=f"degrade-reid {__version__} (jpeg codec: {_jpeg_identity()})")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kernel-dump", parents=[], help="print one blur kernel as text")
    p.add_argument("--family", required=True, choices=kernels.BLUR_FAMILIES)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--spec", default=None,
                   help="comma-separated k=v overrides; omitted fields use defaults")
    p.add_argument("--out", default=None, help="output file (default stdout)")

    p = sub.add_parser("degrade", help="run a degradation pipeline over a directory")
    p.add_argument("--pipeline", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--input", required=True, help="image directory or manifest file")
    p.add_argument("--output", required=True, help="output directory for PNGs")
    p.add_argument("--trace", required=True, help="trace JSONL path")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--ranges", default=None, help="TOML file overriding parameter ranges")

    p = sub.add_parser("split", help="assign database/query roles to a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--time-aware", action="store_true")
    p.add_argument("--unseen-frac", type=float, default=0.17)
    p.add_argument("--query-frac-seen", type=float, default=0.20)
    p.add_argument("--query-frac-unseen", type=float, default=0.24)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="retrieval metrics from embedding files")
    p.add_argument("--query", required=True, help="query EMB1 file")
    p.add_argument("--db", required=True, help="database EMB1 file")
    p.add_argument("--manifest", required=True)
    p.add_argument("--assignment", default=None)
    p.add_argument("--k", default="1,5,10,20", help="comma-separated rank cutoffs")
    p.add_argument("--strata", default="", help="comma-separated: clarity,group,dataset")
    p.add_argument("--out", required=True, help="report JSON path")

    p = sub.add_parser("bench", help="run the synthetic benchmark grid")
    p.add_argument("--config", default=None, help="TOML benchmark config")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--out", required=True, help="grid report JSON path")

    p = sub.add_parser("plot", help="flatten a report to CSV plus a rendered figure")
    p.add_argument("--report", required=True, help="eval or bench report JSON")
    p.add_argument("--out", required=True, help="output CSV path (figure lands beside it)")
    return parser


def _parse_spec_overrides(text: str) -> dict:
    out: dict = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise UsageError(f"bad --spec item {item!r}, expected k=v")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _coerce(value: str):
    low = value.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        return value


def _spec_from_overrides(family: str, overrides: dict):
    classes = {
        kernels.GAUSSIAN: kernels.GaussianBlurSpec,
        kernels.GENERALIZED_GAUSSIAN: kernels.GeneralizedGaussianSpec,
        kernels.MOTION: kernels.MotionBlurSpec,
        kernels.DEFOCUS: kernels.DefocusSpec,
    }
    cls = classes[family]
    kwargs = {}
    shift = [0, 0]
    for key, raw in overrides.items():
        value = _coerce(raw)
        if family == kernels.MOTION and key in ("shift_x", "shift_y"):
            shift["xy".index(key[-1])] = int(value)
            continue
        if key not in cls.__dataclass_fields__:
            raise UsageError(f"unknown spec field {key!r} for family {family}")
        kwargs[key] = value
    if family == kernels.MOTION and (shift[0] or shift[1]):
        kwargs["shift"] = tuple(shift)
    return cls(**kwargs)


def cmd_kernel_dump(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.spec:
        spec = _spec_from_overrides(args.family, _parse_spec_overrides(args.spec))
    else:
        spec = kernels.sample_blur_spec(args.family, rng)
    kernel = kernels.make_kernel(spec, rng=rng)
    fields = {name: getattr(spec, name) for name in spec.__dataclass_fields__}
    parts = [f"family={args.family}"]
    for key, value in fields.items():
        if isinstance(value, tuple):
            parts.append(f"{key}={':'.join(str(v) for v in value)}")
        else:
            parts.append(f"{key}={value}")
    lines = ["# " + " ".join(parts)]
    for row in kernel:
        lines.append(" ".join(repr(float(w)) for w in row))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _collect_input_images(input_arg: str) -> list[tuple[str, Path]]:
    path = Path(input_arg)
    if path.is_dir():
        files = sorted(p for p in path.iterdir()
                       if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
        if not files:
            raise ValidationError(f"no images found in {path}")
        return [(p.stem, p) for p in files]
    records = read_manifest(path)
    out = []
    for rec in records:
        img_path = Path(rec.path)
        if not img_path.is_absolute():
            img_path = path.parent / img_path
        out.append((rec.image_id, img_path))
    return out


def _worker_count(args) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    env = os.environ.get("DEGRADE_REID_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"DEGRADE_REID_THREADS={env!r} is not an integer")
    return 1


def cmd_degrade(args) -> int:
    kind = normalize_kind(args.pipeline)
    ranges = load_ranges(args.ranges) if args.ranges else None
    entries = _collect_input_images(args.input)
    images = {}
    for image_id, img_path in entries:
        img = load_image(img_path)
        if img.shape[0] != PIPELINE_SIDE or img.shape[1] != PIPELINE_SIDE:
            raise ValidationError(
                f"{img_path}: pipelines expect {PIPELINE_SIDE}x{PIPELINE_SIDE} input, "
                f"got {img.shape[0]}x{img.shape[1]}")
        images[image_id] = img
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    workers = _worker_count(args)
    log.info("degrading %d images with pipeline=%s workers=%d", len(images), kind, workers)
    results = degrade_batch(images, kind, args.seed, workers=workers, ranges=ranges)
    traces = []
    for image_id in sorted(results):
        out_img, trace = results[image_id]
        save_image_png(out_dir / f"{image_id}.png", out_img)
        traces.append(trace)
    write_traces(args.trace, traces)
    return 0


def cmd_split(args) -> int:
    manifest = read_manifest(args.manifest)
    config = SplitConfig(seed=args.seed, unseen_id_fraction=args.unseen_frac,
                         query_fraction_seen=args.query_frac_seen,
                         query_fraction_unseen=args.query_frac_unseen,
                         time_aware=args.time_aware)
    assignment = split_dataset(manifest, config)
    for warning in assignment.warnings:
        log.warning("%s", warning)
    write_assignment(args.out, assignment, manifest)
    report = validate_split(assignment, manifest)
    sys.stdout.write(report.render() + "\n")
    return 0 if report.ok else 1


def cmd_eval(args) -> int:
    queries = read_embeddings(args.query)
    database = read_embeddings(args.db)
    manifest = read_manifest(args.manifest)
    strata_keys = tuple(s.strip() for s in args.strata.split(",") if s.strip())
    assignment = None
    if args.assignment:
        assignment = read_assignment(args.assignment, manifest)
    elif "group" in strata_keys:
        raise UsageError("--strata group requires --assignment")
    try:
        ks = tuple(int(k) for k in args.k.split(",") if k.strip())
    except ValueError:
        raise UsageError(f"bad --k list {args.k!r}")
    results = search(queries, database)
    report = stratified_report(results, manifest, assignment=assignment,
                               ks=ks or DEFAULT_KS, strata_keys=strata_keys)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("evaluated %d queries against %d database images", queries.n, database.n)
    return 0


def cmd_bench(args) -> int:
    import dataclasses

    from .synthbench import BenchConfig, load_bench_config, run_experiment_grid, write_grid_report

    if args.config:
        config = load_bench_config(args.config)
    else:
        config = BenchConfig()
    if args.seed is not None:
        config = dataclasses.replace(config, master_seed=args.seed)
    report = run_experiment_grid(config)
    write_grid_report(args.out, report)
    return 0


def cmd_plot(args) -> int:
    from .figures import render_cmc_figure, render_grid_figure

    with open(args.report, "r", encoding="utf-8") as fh:
        report = json.load(fh)
    out_csv = Path(args.out)
    out_png = out_csv.with_suffix(".png")
    if "cmc" in report:
        with open(out_csv, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["rank", "accuracy"])
            for rank, acc in enumerate(report["cmc"], start=1):
                writer.writerow([rank, acc])
        render_cmc_figure(report, out_png)
    elif "records" in report:
        ks = sorted({int(k) for rec in report["records"] for k in rec["rank_k"]})
        with open(out_csv, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["train_pipeline", "query_condition", "stratum", "n_queries"]
                            + [f"rank_{k}" for k in ks] + ["map"])
            for rec in report["records"]:
                writer.writerow([rec["train_pipeline"], rec["query_condition"],
                                 rec["stratum"], rec["n_queries"]]
                                + [rec["rank_k"].get(str(k), "") for k in ks]
                                + [rec["map"]])
        render_grid_figure(report, out_png)
    else:
        raise ValidationError(f"{args.report}: neither an eval report nor a grid report")
    log.info("wrote %s and %s", out_csv, out_png)
    return 0


_COMMANDS = {
    "kernel-dump": cmd_kernel_dump,
    "degrade": cmd_degrade,
    "split": cmd_split,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.DEBUG if args.verbose else logging.INFO,
            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return 1
    except (ParameterError, ValidationError, GenerationError, TrainingError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except OSError as exc:
        sys.stderr.write(f"i/o error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
