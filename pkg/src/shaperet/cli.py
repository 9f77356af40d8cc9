"""Command-line entry point: ``shaperet <subcommand> [options]``."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from .artifacts import write_atomic
from .bow import DistanceMatrix
from .config import COMBINATIONS, SAMPLERS, ConfigError, load_config
from .evaluation import evaluate, format_pr_csv, format_stats_csv, load_labels, read_pr_csv, read_stats_csv
from .keypoints import detect, format_point_set
from .mesh import estimate_geometry, load_off
from .pipeline import Pipeline, StageError
from .plotting import plot_pr_curves, plot_sweep
from .shapes import write_toy_dataset

log = logging.getLogger("shaperet")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value run configuration file")
    p.add_argument("--dataset", help="directory of .off meshes")
    p.add_argument("--labels", help=".cla or id,class CSV label file")
    p.add_argument("--kinds", help="descriptor kind(s), comma separated")
    p.add_argument("--combination", choices=COMBINATIONS)
    p.add_argument("--sampler", choices=SAMPLERS)
    p.add_argument("--n", dest="n_points", help="sample points per mesh (random sampler)")
    p.add_argument("--D", dest="dictionary_size", help="dictionary size")
    p.add_argument("--seed")
    p.add_argument("--workers", help="threads for the k-means assignment step")
    p.add_argument("--out", help="output directory")
    p.add_argument("--cache", help="cache directory (default $SHAPERET_CACHE or ./.shaperet-cache)")
    p.add_argument("-v", "--verbose", action="store_true")


def _config(args, need_dataset=True):
    keys = ("dataset", "labels", "kinds", "combination", "sampler", "n_points", "dictionary_size",
            "seed", "workers", "out", "cache")
    overrides = {k: getattr(args, k, None) for k in keys}
    return load_config(args.config, **overrides).validate(need_dataset)


def _print_stats(stats) -> None:
    for k, v in stats.as_row().items():
        print(f"{k:10s} {v:.4f}")


def cmd_stage(args) -> int:
    cfg = _config(args)
    stage = args.command
    pipe = Pipeline(cfg, only={stage})
    if stage == "ingest":
        meshes = pipe.meshes()
        print(f"ingested {len(meshes)} meshes")
    elif stage == "describe":
        for k in cfg.kinds:
            fields = pipe.fields(k)
            print(f"{k}: {len(fields)} descriptor fields")
    elif stage == "reduce":
        for k in cfg.kinds:
            _, model = pipe.reduction(k)
            print(f"{k}: kept {model.kept} of {model.input_dim} dimensions")
    elif stage == "keypoints":
        streams = ("a", "b") if cfg.combination in ("VD", "HistD") else ("a",)
        for s in streams:
            pts = pipe.keypoints(s)
            print(f"{len(pts)} point sets, {sum(len(p) for _, p in pts.values())} points")
    elif stage == "dictionary":
        for _, d, _ in pipe.dictionaries():
            print(f"dictionary {d.kind}: D={d.size} dim={d.dim} objective={d.objective:.6g} "
                  f"after {d.iterations} iterations")
    elif stage == "signatures":
        _, sigs = pipe.signatures()
        print(f"{len(sigs)} signatures of length {len(sigs[0].histogram)}")
    elif stage == "distmat":
        _, dm = pipe.distmat()
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        dm.save(out / "distmat.csv")
        print(f"wrote {out / 'distmat.csv'}")
    return 0


def cmd_keypoints(args) -> int:
    if args.mesh is None:
        if args.method:
            args.sampler = args.method
        return cmd_stage(args)
    mesh = load_off(args.mesh)
    method = args.method or "random"
    geo = estimate_geometry(mesh) if method == "mesh-saliency" else None
    n = int(args.n_points or min(200, mesh.n_vertices))
    pts = detect(mesh, method, n, int(args.seed or 0), geo)
    out = Path(args.out or ".")
    path = out / f"{mesh.id}.{method}.txt"
    write_atomic(path, format_point_set(pts))
    flag = f" (flagged: {pts.note})" if pts.flagged else ""
    print(f"{len(pts)} of {mesh.n_vertices} vertices -> {path}{flag}")
    return 0


def cmd_evaluate(args) -> int:
    if args.matrix is None:
        cfg = _config(args)
        result = Pipeline(cfg, only={"evaluate"}).evaluate()
        if result.stats is not None:
            _print_stats(result.stats)
        return 0
    if args.labels is None:
        raise ConfigError("--matrix needs --labels")
    dm = DistanceMatrix.load(args.matrix)
    stats = evaluate(dm, load_labels(args.labels))
    out = Path(args.out or ".")
    method = args.method or Path(args.matrix).stem
    write_atomic(out / "stats.csv", format_stats_csv([(method, args.parameters or "", stats)]))
    write_atomic(out / "pr.csv", format_pr_csv(stats.pr_curve))
    plot_pr_curves({method: stats.pr_curve}, out / "pr.svg")
    _print_stats(stats)
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    result = Pipeline(cfg).run()
    misses = sum(s["misses"] for s in result.manifest["stages"].values())
    print(f"{len(result.matrix.ids)} meshes, {misses} artifacts computed, outputs in {cfg.out}")
    if result.stats is not None:
        _print_stats(result.stats)
    return 0


def cmd_bench(args) -> int:
    cfg = _config(args)
    with tempfile.TemporaryDirectory() as tmp:
        result = Pipeline(replace(cfg, cache=Path(tmp) / "cache", out=Path(tmp) / "out")).run()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["stage", "seconds", "artifacts"])
    for stage, rec in result.manifest["stages"].items():
        w.writerow([stage, f"{rec['seconds']:.3f}", rec["misses"]])
    out = Path(cfg.out)
    write_atomic(out / "bench.csv", buf.getvalue())
    sys.stdout.write(buf.getvalue())
    return 0


def cmd_plot(args) -> int:
    out = Path(args.out or ".")
    if not args.pr and not args.sweep:
        raise ConfigError("plot needs --pr and/or --sweep inputs")
    if args.pr:
        curves = {Path(p).parent.name or Path(p).stem: read_pr_csv(p) for p in args.pr}
        print(plot_pr_curves(curves, out / "pr.svg"))
    if args.sweep:
        rows = [r for p in args.sweep for r in read_stats_csv(p)]
        print(plot_sweep(rows, args.param, out / f"sweep_{args.param}.svg"))
    return 0


def cmd_make_toy(args) -> int:
    path = write_toy_dataset(args.directory, args.instances, args.seed)
    print(f"wrote toy dataset to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shaperet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("ingest", "describe", "reduce", "dictionary", "signatures", "distmat"):
        p = sub.add_parser(name, help=f"run the {name} stage against the cache")
        _common(p)
        p.set_defaults(func=cmd_stage)

    p = sub.add_parser("keypoints", help="select sample points (whole dataset or one --mesh)")
    _common(p)
    p.add_argument("--method", choices=SAMPLERS)
    p.add_argument("--mesh", type=Path, help="single OFF file; writes a point-set text file")
    p.set_defaults(func=cmd_keypoints)

    p = sub.add_parser("evaluate", help="retrieval statistics from the cached or a given matrix")
    _common(p)
    p.add_argument("--matrix", help="distance matrix CSV or .bin")
    p.add_argument("--method", help="method name for the stats row")
    p.add_argument("--parameters", help="parameter string for the stats row")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="run every stage, reusing cached artifacts")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="time every stage on a fresh cache")
    _common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("plot", help="render PR curves and parameter sweeps to SVG")
    p.add_argument("--pr", nargs="+", help="PR-curve CSV files")
    p.add_argument("--sweep", nargs="+", help="stats CSV files of a parameter sweep")
    p.add_argument("--param", default="D", help="swept parameter name (default D)")
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("make-toy", help="write the bundled toy dataset")
    p.add_argument("directory", type=Path)
    p.add_argument("--instances", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_make_toy)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error in stage {exc}", file=sys.stderr)
        return 2
    except (ConfigError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
