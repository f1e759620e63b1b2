"""Command-line interface.

Exit codes: 0 success, 1 verification failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import statistics
import sys
import time
from pathlib import Path

import numba
import numpy as np

from . import __version__
from .config import load_run_config, prepare_run
from .geometry import default_geometry, load_geometry
from .losses import cycle_consistency_loss, reconstruction_loss, total_loss
from .metrics import evaluate
from .projector import (
    forward_project,
    load_projection,
    normalize_unit,
    projection_stem,
    save_projection,
    write_pgm,
)
from .selftest import run_selftest
from .synthesis import synthesize
from .volume import (
    hu_to_attenuation,
    load_phantom_spec,
    load_volume,
    make_phantom,
    pad_z,
    resample_z,
    resize_xy,
    save_volume,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _dump(doc, out=None) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    sys.stdout.write(text)


def _csv_value(v):
    return "inf" if isinstance(v, float) and math.isinf(v) else repr(v) if isinstance(v, float) else v


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_phantom(args) -> int:
    volume = make_phantom(load_phantom_spec(args.spec))
    save_volume(volume, args.out)
    _dump({"volume": str(args.out), "dims": list(volume.dims), "spacing": list(volume.spacing)})
    return EXIT_OK


def cmd_project(args) -> int:
    volume = load_volume(args.volume)
    if args.hu:
        volume = hu_to_attenuation(volume, args.mu_water)
    if args.resample_z is not None:
        volume = resample_z(volume, args.resample_z)
    if args.resize_xy is not None:
        volume = resize_xy(volume, tuple(args.resize_xy))
    if args.pad_z is not None:
        volume = pad_z(volume, args.pad_z, args.pad_fill)
    geom = load_geometry(args.geometry) if args.geometry else default_geometry()
    if args.binning != 1:
        geom = geom.binned(args.binning)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for angle in args.angles:
        proj = forward_project(volume, geom, angle, args.step)
        if args.normalize:
            proj = normalize_unit(proj)
        stem = projection_stem(out_dir, "drr", angle)
        save_projection(proj, stem)
        if args.pgm:
            write_pgm(normalize_unit(proj).data[0], stem.with_suffix(".pgm"))
        written.append(str(stem.with_suffix(".json")))
    _dump({"projections": written})
    return EXIT_OK


def _report(run, result) -> dict:
    cfg = run.config
    targets = []
    for pred in result.targets:
        entry = {"angle": pred.angle}
        truth = run.truths.get(pred.angle)
        if truth is not None:
            entry["metrics"] = evaluate(pred, truth).to_dict()
        targets.append(entry)

    sources, cyc_terms, rec_terms = [], [], []
    for given, resynth in zip(run.sources, result.sources):
        rec = reconstruction_loss(resynth, given)
        sources.append({"angle": given.angle, "consistency_mae": rec})
        rec_terms.append(rec)
        cyc_terms.append(cycle_consistency_loss(run.encoder.encode(resynth), run.encoder.encode(given)))
    rec_terms += [reconstruction_loss(p, run.truths[p.angle]) for p in result.targets if p.angle in run.truths]

    cyc = float(np.mean(cyc_terms))
    rec = float(np.mean(rec_terms))
    w = cfg.loss_weights
    return {
        "schema": 1,
        "stages": cfg.stages,
        "output": cfg.output,
        "texture": [float(t) for t in result.texture],
        "sources": sources,
        "targets": targets,
        "losses": {
            "cyc": cyc,
            "rec": rec,
            # no discriminator is available outside training
            "adv": None,
            "total_without_adv": total_loss(cyc, rec, 0.0, w),
            "weights": {"lambda_cyc": w.lambda_cyc, "lambda_rec": w.lambda_rec, "lambda_adv": w.lambda_adv},
        },
    }


def cmd_synthesize(args) -> int:
    run = prepare_run(load_run_config(args.config))
    result = synthesize(run.sources, run.target_angles, **run.synthesize_kwargs())

    out_dir = run.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    for prefix, projections in (("src", result.sources), ("tgt", result.targets)):
        for p in projections:
            stem = projection_stem(out_dir, prefix, p.angle)
            save_projection(p, stem)
            if run.config.pgm:
                write_pgm(p.data[0], stem.with_suffix(".pgm"))

    report = _report(run, result)
    (out_dir / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    rows = [t for t in report["targets"] if "metrics" in t]
    if rows:
        with open(out_dir / "metrics.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["angle", "mae", "rmse", "ssim", "psnr"])
            for t in rows:
                m = t["metrics"]
                psnr = math.inf if m["psnr_infinite"] else m["psnr"]
                writer.writerow([_csv_value(t["angle"])] + [_csv_value(m[k]) for k in ("mae", "rmse", "ssim")] + [_csv_value(psnr)])
    if args.plot:
        from .plotting import plot_synthesis

        truths = [run.truths.get(p.angle) for p in result.targets]
        plot_synthesis(out_dir / "report.png", list(zip(run.sources, result.sources)), result.targets, truths)
    _dump(report)
    return EXIT_OK


def cmd_metrics(args) -> int:
    pred, ref = load_projection(args.pred), load_projection(args.reference)
    report = evaluate(pred, ref, args.data_range)
    _dump(report.to_dict())
    if args.csv:
        path = Path(args.csv)
        new = not path.exists() or path.stat().st_size == 0
        with open(path, "a", newline="") as fh:
            writer = csv.writer(fh)
            if new:
                writer.writerow(["pred", "reference", "mae", "rmse", "ssim", "psnr"])
            writer.writerow([args.pred, args.reference] + [_csv_value(v) for v in (report.mae, report.rmse, report.ssim, report.psnr)])
    return EXIT_OK


def cmd_selftest(args) -> int:
    report = run_selftest(step=args.step)
    _dump(report, args.out)
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_bench(args) -> int:
    if args.repetitions < 1:
        raise UsageError("--repetitions must be at least 1")
    run = prepare_run(load_run_config(args.config))
    kwargs = run.synthesize_kwargs()
    synthesize(run.sources, run.target_angles, **kwargs)  # warm-up: JIT compilation
    samples = []
    for _ in range(args.repetitions):
        profile = {}
        t = time.perf_counter()
        synthesize(run.sources, run.target_angles, profile=profile, **kwargs)
        profile["total"] = time.perf_counter() - t
        samples.append(profile)
    stages = {
        name: {"mean": statistics.fmean(s[name] for s in samples), "min": min(s[name] for s in samples)}
        for name in samples[0]
    }
    _dump(
        {
            "schema": 1,
            "repetitions": args.repetitions,
            "threads": numba.get_num_threads(),
            "refiner": run.config.stages["refiner"],
            "seconds": stages,
        },
        args.out,
    )
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="viewsynth", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, default=None, help="numba worker threads")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="rasterize a phantom spec into a volume file pair")
    p.add_argument("spec", help="phantom spec JSON")
    p.add_argument("out", help="output volume path (<name>[.json])")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("project", help="render DRRs of a volume")
    p.add_argument("volume")
    p.add_argument("--geometry", help="geometry JSON (default: shipped 180x300 geometry)")
    p.add_argument("--binning", type=int, default=1, help="detector binning factor")
    p.add_argument("--angles", type=float, nargs="+", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--step", type=float, default=None, help="ray step in mm")
    p.add_argument("--hu", action="store_true", help="input is in Hounsfield units")
    p.add_argument("--mu-water", type=float, default=0.02)
    p.add_argument("--resample-z", type=float, metavar="MM")
    p.add_argument("--resize-xy", type=int, nargs=2, metavar=("H", "W"))
    p.add_argument("--pad-z", type=int, metavar="D")
    p.add_argument("--pad-fill", type=float, default=0.0)
    p.add_argument("--normalize", action="store_true", help="min-max scale each DRR to [0, 1]")
    p.add_argument("--pgm", action="store_true", help="also write 16-bit PGM previews")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("synthesize", help="run the synthesis pipeline from a run config")
    p.add_argument("config")
    p.add_argument("--plot", action="store_true", help="render report.png next to the outputs")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("metrics", help="compare a projection against a reference")
    p.add_argument("pred")
    p.add_argument("reference")
    p.add_argument("--data-range", type=float, default=1.0)
    p.add_argument("--csv", help="append a CSV row to this file")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("selftest", help="adjoint, chord and rotation checks")
    p.add_argument("--out", help="also write the report here")
    p.add_argument("--step", type=float, default=None, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("bench", help="time the synthesis pipeline per stage")
    p.add_argument("config")
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--out", help="also write the report here")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.threads is not None:
            limit = numba.config.NUMBA_NUM_THREADS
            if not 1 <= args.threads <= limit:
                raise UsageError(f"--threads must be in [1, {limit}]; raise NUMBA_NUM_THREADS for more")
            numba.set_num_threads(args.threads)
        return args.func(args)
    except (UsageError, OSError, ValueError, KeyError, TypeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"viewsynth {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
