"""Command line entry point.

Precedence for settings: ``--config`` JSON file > explicit flags > defaults.
Exit codes: 0 success, 1 runtime error, 2 usage error (including missing input).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import codec, pipeline
from .histogram import PdfGrid, WeightedPoints, to_pdf
from .metrics import jsd
from .pipeline import InputNotFoundError, PipelineConfig, PipelineError
from .synthdata import generate
from .wgmm import evaluate_pdf

log = logging.getLogger("vdfgmm")

# argparse dest -> PipelineConfig field
FLAG_FIELDS = {
    "scenario": "scenario", "scenario_file": "scenario_file", "input": "input_path",
    "particles": "particles", "dimension": "dimension", "seed": "seed", "bins": "bins",
    "vrange": "vrange", "planes": "planes", "components": "components",
    "max_iter": "max_iterations", "prune_threshold": "prune_threshold",
    "prune_interval": "prune_interval", "tol": "tolerance", "out": "out_dir",
    "format": "formats", "repeat": "repeat", "original_bins": "original_bins",
    "subdomains": "subdomains", "cycles": "cycles", "da_interval": "da_interval",
    "drift": "drift", "warm_start": "warm_start",
}


class UsageError(Exception):
    pass


def _vrange(text: str):
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected MIN:MAX") from None
    if not lo < hi:
        raise argparse.ArgumentTypeError("MIN must be < MAX")
    return (lo, hi)


def _floats(text: str):
    return tuple(float(x) for x in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--format", choices=["json", "csv"], action="append", default=None)
    common.add_argument("--config", default=None, help="JSON file overriding flags")
    common.add_argument("-v", "--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--scenario", default=None)
    data.add_argument("--scenario-file", default=None)
    data.add_argument("--input", default=None, help="particle file (.npz)")
    data.add_argument("--particles", type=int, default=None)
    data.add_argument("--dimension", type=int, choices=[2, 3], default=None)

    fitting = argparse.ArgumentParser(add_help=False)
    fitting.add_argument("--bins", type=int, default=None)
    fitting.add_argument("--vrange", type=_vrange, default=None, metavar="MIN:MAX")
    fitting.add_argument("--plane", "--planes", dest="planes", choices=["uv", "vw", "uw", "all"],
                         action="append", default=None)
    fitting.add_argument("--components", type=int, default=None)
    fitting.add_argument("--max-iter", type=int, default=None)
    fitting.add_argument("--prune-threshold", type=float, default=None)
    fitting.add_argument("--prune-interval", type=int, default=None)
    fitting.add_argument("--tol", type=float, default=None)
    fitting.add_argument("--original-bins", type=int, default=None)

    parser = argparse.ArgumentParser(prog="vdfgmm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common, data], help="sample a scenario to a particle file")
    p_fit = sub.add_parser("fit", parents=[common, data, fitting], help="bin, fit, encode and score")
    p_fit.add_argument("--subdomains", type=int, default=None)
    p_rec = sub.add_parser("reconstruct", parents=[common], help="evaluate a model on a grid")
    p_rec.add_argument("--model", required=True)
    p_rec.add_argument("--bins", type=int, default=None)
    p_rec.add_argument("--vrange", type=_vrange, default=None, metavar="MIN:MAX")
    p_met = sub.add_parser("metrics", parents=[common], help="score a model against a histogram")
    p_met.add_argument("--model", required=True)
    p_met.add_argument("--histogram", required=True)
    p_bench = sub.add_parser("bench", parents=[common, data, fitting], help="compare against baselines")
    p_bench.add_argument("--repeat", type=int, default=None)
    p_ts = sub.add_parser("timeseries", parents=[common, data, fitting], help="warm-start demo")
    p_ts.add_argument("--cycles", type=int, default=None)
    p_ts.add_argument("--da-interval", type=int, default=None)
    p_ts.add_argument("--drift", type=_floats, default=None, help="per-cycle mean shift, e.g. 0.05,0,0")
    p_ts.add_argument("--no-warm-start", dest="warm_start", action="store_false", default=None)
    return parser


BENCH_DEFAULTS = {"bins": 100, "components": 8, "prune_threshold": 0.0}


def resolve_config(args, defaults: dict | None = None) -> PipelineConfig:
    config = PipelineConfig().updated(defaults or {})
    flags = {FLAG_FIELDS[k]: v for k, v in vars(args).items() if k in FLAG_FIELDS and v is not None}
    config = config.updated(flags)
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise InputNotFoundError("cli", f"input not found: {path}")
        with open(path) as fh:
            config = config.updated(json.load(fh))
    return config


def cmd_generate(args) -> int:
    config = resolve_config(args)
    particles = generate(pipeline.scenario_spec(config))
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "particles.npz"
    particles.save(path)
    print(path)
    return 0


def cmd_fit(args) -> int:
    config = resolve_config(args)
    rows = pipeline.run_pipeline(config)
    for row in rows:
        print(f"{row['stem']}: M={row['n_components']} jsd={row['jsd']:.4g} iterations={row['iterations']}")
    return 0


def _require(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise InputNotFoundError("cli", f"input not found: {p}")
    return p


def _load_model(path: Path):
    if path.name.endswith(".gmm.json"):
        return codec.model_from_json(path.read_text())
    return codec.decode_model(path.read_bytes())


def cmd_reconstruct(args) -> int:
    model, meta = _load_model(_require(args.model))
    if model.dimension != 2:
        raise PipelineError("cli", "reconstruct works on 2D plane models")
    n_bins = args.bins or 200
    if args.vrange:
        ranges = (args.vrange, args.vrange)
    elif meta.axis_ranges:
        ranges = meta.axis_ranges
    else:
        raise UsageError("model carries no axis ranges; pass --vrange")
    grid = PdfGrid(evaluate_pdf(model, ranges, n_bins), ranges)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    stem = out / (Path(args.model).name.split(".")[0] + ".pdf")
    stem.with_suffix(".pdf.bin").write_bytes(np.ascontiguousarray(grid.values, dtype="<f8").tobytes())
    sidecar = {"format": "pdf-grid", "dtype": "<f8", "order": "row-major", "n_bins": n_bins,
               "axis_ranges": [list(r) for r in ranges], "plane": meta.plane}
    stem.with_suffix(".pdf.bin.json").write_text(json.dumps(sidecar, indent=2) + "\n")
    print(stem.with_suffix(".pdf.bin"))
    return 0


def cmd_metrics(args) -> int:
    model, _ = _load_model(_require(args.model))
    _require(args.histogram + ".json")
    hist = codec.read_histogram(_require(args.histogram))
    report = pipeline.compute_metrics(model, hist)
    fmt = (args.format or ["json"])[0]
    text = report.to_json() if fmt == "json" else report.csv_row()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / ("metrics." + fmt)).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_bench(args) -> int:
    config = resolve_config(args, BENCH_DEFAULTS)
    rows = pipeline.run_benchmark(config)
    for r in rows:
        print(f"{r.codec:>10} {r.input:>9} ratio={r.ratio:10.2f} jsd_orig={r.jsd_vs_original:.4g} "
              f"t={r.compress_seconds:.4f}s")
    return 0


def cmd_timeseries(args) -> int:
    config = resolve_config(args)
    report = pipeline.run_timeseries(config)
    for c in report["cycles"]:
        print(f"cycle {c['cycle']}: iterations={c['iterations']} M={c['components']} jsd={c['jsd_vs_histogram']:.4g}")
    return 0


COMMANDS = {
    "generate": cmd_generate, "fit": cmd_fit, "reconstruct": cmd_reconstruct,
    "metrics": cmd_metrics, "bench": cmd_bench, "timeseries": cmd_timeseries,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InputNotFoundError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"error: [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
