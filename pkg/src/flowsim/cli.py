"""Command-line interface: validate, simulate, train, evaluate, sweep, metrics."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .engine import load_config, persist_raw, load_raw, run_scenario
from .evalharness import (
    CHECKPOINTS,
    DesignSpace,
    compute_metrics,
    load_metrics_csv,
    run_sweep,
    select_rows,
    train_models,
)
from .localization import infer_stream
from .neural import load_model
from .topology import default_body_path, load_and_validate


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowsim",
        description="Flow-guided nanoscale localization simulator and benchmark",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("topology-validate", help="validate a vascular topology file")
    p.add_argument("file", help="topology JSON path")
    p.add_argument("--relax-speeds", action="store_true",
                   help="allow non-default vessel speeds")

    p = sub.add_parser("simulate", help="run one scenario and write raw records")
    p.add_argument("--config", required=True, help="scenario config JSON")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", required=True, help="raw CSV output path")
    p.add_argument("--audit", action="store_true", help="enable the energy audit")

    p = sub.add_parser("train", help="run the 25-region training protocol")
    p.add_argument("--topology", default=None, help="topology file (default: shipped body)")
    p.add_argument("--out", required=True, help="directory for model files")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--sim-time", type=float, default=5000.0)
    p.add_argument("--max-per-class", type=int, default=1000)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--raw-dir", default=None, help="also persist the raw training runs")

    p = sub.add_parser("evaluate", help="estimate an event from a raw capture")
    p.add_argument("--model", required=True, help="trained model JSON")
    p.add_argument("--topology", default=None)
    p.add_argument("--raw", required=True, help="raw records CSV")
    p.add_argument("--checkpoints", type=int, nargs="*", default=list(CHECKPOINTS))
    p.add_argument("--out", default=None, help="write estimates JSON here (default stdout)")

    p = sub.add_parser("sweep", help="run the design-space sweep")
    p.add_argument("--space", required=True, help="design-space JSON (Table-2 layout)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--train", action="store_true", help="run the training protocol first")
    p.add_argument("--models", default=None, help="directory with solution{1,2}.json")
    p.add_argument("--no-raw", action="store_true", help="skip per-scenario raw files")

    p = sub.add_parser("metrics", help="summarize a metrics.csv")
    p.add_argument("--csv", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except Exception as exc:  # CLI boundary: every failure becomes exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "topology-validate":
        topo = load_and_validate(args.file, relax_speeds=args.relax_speeds)
        print(f"ok: {len(topo.segments)} segments, {len(topo.regions)} regions")
        return 0

    if args.command == "simulate":
        config = load_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
        config.audit = args.audit
        result = run_scenario(config)
        persist_raw(result.records, args.out)
        print(f"wrote {len(result.records)} records to {args.out}")
        return 0

    if args.command == "train":
        topo = args.topology or default_body_path()
        paths = train_models(
            topo, args.seed, args.out,
            train_time=args.sim_time,
            max_per_class=args.max_per_class,
            epochs=args.epochs,
            raw_dir=args.raw_dir,
        )
        for solution, path in sorted(paths.items()):
            print(f"solution {solution}: {path}")
        return 0

    if args.command == "evaluate":
        topo = load_and_validate(args.topology or default_body_path())
        model = load_model(args.model)
        records = load_raw(args.raw)
        estimates = {}
        for cp in args.checkpoints:
            est = infer_stream(model, records, topo, up_to=float(cp))
            estimates[str(cp)] = {
                "region": est.region,
                "point_cm": list(est.point) if est.point else None,
                "n_reports_used": est.n_reports_used,
                "available": est.available,
            }
        text = json.dumps(estimates, indent=1)
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        else:
            print(text)
        return 0

    if args.command == "sweep":
        space = DesignSpace.from_dict(json.loads(Path(args.space).read_text()))
        csv_path = run_sweep(
            space, args.seed, args.out,
            model_dir=args.models,
            do_train=args.train,
            keep_raw=not args.no_raw,
        )
        print(f"wrote {csv_path}")
        return 0

    if args.command == "metrics":
        rows = load_metrics_csv(args.csv)
        groups = sorted({(r.sweep_axis, r.sweep_value, r.solution) for r in rows})
        for axis, value, solution in groups:
            sel = select_rows(rows, axis=axis, value=value, solution=solution)
            stats = compute_metrics(sel)
            print(f"{axis}={value:g} solution {solution}:")
            for cp, s in stats.items():
                err = s["point_errors"]
                err_txt = (
                    f"err[min {err[0]:.1f} q1 {err[1]:.1f} med {err[2]:.1f} "
                    f"q3 {err[3]:.1f} max {err[4]:.1f}]" if err else "err[none]"
                )
                print(f"  t={cp:4d}s acc {s['region_accuracy']:.2f} "
                      f"rel {s['reliability']:.2f} {err_txt}")
        return 0

    raise RuntimeError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
