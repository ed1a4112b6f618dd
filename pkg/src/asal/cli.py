"""Command-line entry points: run experiments, benchmark selection, serve annotation.

Outputs land under --out (or $ASAL_OUT, default ./runs): per-seed metrics
JSON-lines, a run manifest, and benchmark CSVs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

from . import __version__
from .bench import time_selection, transition_point, write_scaling_csv
from .loop import ExperimentConfig, run_experiment, write_metrics
from .models import ConfigError, save_checkpoint
from .strategies import STRATEGIES


def _out_dir(args) -> str:
    out = args.out or os.environ.get("ASAL_OUT") or "runs"
    os.makedirs(out, exist_ok=True)
    return out


def _config_hash(doc: dict) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def cmd_run(args) -> int:
    try:
        cfg = ExperimentConfig.load(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.strategy:
        cfg = ExperimentConfig.from_json({**cfg.to_json(), "strategy": args.strategy})
    seeds = [args.seed] if args.seed is not None else list(cfg.seeds)

    if args.dry_run:
        print(f"config ok: strategy={cfg.strategy} extractor={cfg.extractor} "
              f"budget={cfg.budget} initial={cfg.initial} new={cfg.new_per_cycle} "
              f"cycles={cfg.planned_cycles} seeds={seeds}")
        return 0

    out = _out_dir(args)
    manifest = {
        "version": __version__,
        "config": cfg.to_json(),
        "config_hash": _config_hash(cfg.to_json()),
        "seeds": seeds,
        "metrics_files": [],
    }
    for seed in seeds:
        result = run_experiment(cfg, seed)
        path = os.path.join(out, f"metrics_{cfg.strategy}_seed{seed}.jsonl")
        write_metrics(path, result.records)
        manifest["metrics_files"].append(os.path.basename(path))
        if result.final_classifier is not None:
            ckpt = os.path.join(out, f"classifier_{cfg.strategy}_seed{seed}.json")
            save_checkpoint(result.final_classifier, ckpt)
            manifest.setdefault("checkpoints", []).append(os.path.basename(ckpt))
        final = result.records[-1]
        print(f"seed {seed}: {result.cycles_completed} cycles, "
              f"final accuracy {final.accuracy:.4f}, status {result.status}")
    with open(os.path.join(out, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)
    return 0


def cmd_bench(args) -> int:
    if args.repeats < 3:
        print("error: --repeats must be >= 3", file=sys.stderr)
        return 2
    sizes = sorted(int(s) for s in args.sizes)
    out = _out_dir(args)
    reports = []
    for strategy in args.strategies:
        report = time_selection(strategy, sizes, repeats=args.repeats,
                                count=args.count, seed=args.seed or 0)
        reports.append(report)
        for rec in report.records:
            if rec.failed:
                print(f"{strategy} n={rec.pool_size}: FAILED ({rec.failed})")
            else:
                pre = sum(rec.preprocessing_s.values())
                print(f"{strategy} n={rec.pool_size}: selection {rec.selection_s:.4f}s "
                      f"(preproc {pre:.2f}s)")
        slope = "n/a (need >= 4 sizes)" if report.loglog_slope is None else f"{report.loglog_slope:.3f}"
        print(f"{strategy}: log-log slope {slope}")
    _print_transition(reports, sizes[-1])
    path = os.path.join(out, "scaling.csv")
    write_scaling_csv(path, reports)
    print(f"wrote {path}")
    return 0


def _print_transition(reports, size) -> int | None:
    """Cycles until the pre-processing of the fastest strategy pays off."""
    timed = {}
    for report in reports:
        try:
            timed[report.strategy] = (report.selection_at(size),
                                      report.preprocessing_total(size))
        except KeyError:
            continue
    if len(timed) < 2:
        return None
    fast = min(timed, key=lambda s: timed[s][0])
    slow = max(timed, key=lambda s: timed[s][0])
    cycles = transition_point(timed[fast][1], timed[fast][0], timed[slow][0])
    if cycles is None:
        print(f"no transition: {fast} is not faster per cycle than {slow} at n={size}")
    else:
        print(f"transition point at n={size}: {fast} overtakes {slow} "
              f"after {cycles} cycles (preproc {timed[fast][1]:.2f}s amortized)")
    return cycles


def cmd_serve(args) -> int:
    try:
        cfg = ExperimentConfig.load(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if cfg.oracle != "human":
        print("error: serve requires a config with \"oracle\": \"human\"", file=sys.stderr)
        return 2
    from .service import serve_annotation

    serve_annotation(cfg, port=args.port, seed=args.seed or cfg.seeds[0],
                     frontend_dir=args.frontend)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="asal", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--strategy", choices=sorted(STRATEGIES), help="override config strategy")
    run.add_argument("--seed", type=int, help="run a single seed instead of the config list")
    run.add_argument("--out")
    run.add_argument("--dry-run", action="store_true", help="validate config and exit")
    run.set_defaults(fn=cmd_run)

    bench = sub.add_parser("bench", help="time selection across pool sizes")
    bench.add_argument("--sizes", nargs="+", type=int, required=True)
    bench.add_argument("--strategies", nargs="+", choices=sorted(STRATEGIES),
                       default=["asal", "max_entropy"])
    bench.add_argument("--repeats", type=int, default=3)
    bench.add_argument("--count", type=int, default=10)
    bench.add_argument("--seed", type=int)
    bench.add_argument("--out")
    bench.set_defaults(fn=cmd_bench)

    serve = sub.add_parser("serve", help="serve the human-annotation loop over HTTP")
    serve.add_argument("--config", required=True)
    serve.add_argument("--port", type=int, default=8008)
    serve.add_argument("--seed", type=int)
    serve.add_argument("--frontend", help="directory of static UI files to serve at /")
    serve.set_defaults(fn=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
