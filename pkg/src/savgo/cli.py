"""Command line entry point: run / sweep / ablate / plot."""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .harness import (RUNS_DIR_ENV, SWEEP_AXES, VARIANTS, SweepSpec,
                      emit_plots, run_ablation, run_experiment, run_sweep)


def _parse_seed_list(text: str | None) -> list[int] | None:
    if text is None:
        return None
    try:
        return [int(s) for s in text.split(",") if s.strip() != ""]
    except ValueError as err:
        raise ConfigError(f"bad --seed-list {text!r}: {err}") from err


def _parse_values(text: str, axis: str) -> list:
    out = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if chunk == "":
            continue
        if axis == "variant":
            out.append(chunk)
        elif axis in ("K", "seed"):
            out.append(int(chunk))
        else:
            out.append(float(chunk))
    if not out:
        raise ConfigError(f"no values parsed from {text!r}")
    return out


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="path to a JSON config")
    p.add_argument("--seed-list", default=None,
                   help="comma-separated seeds, e.g. 0,1,2")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel seed workers")
    p.add_argument("--out", default=None,
                   help=f"output root (default ${RUNS_DIR_ENV} or ./runs)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="savgo",
        description="Kernel-weighted actor-critic experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train one config over its seeds")
    _add_common(run)

    sweep = sub.add_parser("sweep", help="sweep one config axis")
    _add_common(sweep)
    sweep.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    sweep.add_argument("--values", required=True,
                       help="comma-separated axis values")

    ablate = sub.add_parser("ablate", help="run a named ablation variant")
    _add_common(ablate)
    ablate.add_argument("--variant", required=True, choices=list(VARIANTS))

    plot = sub.add_parser("plot", help="render learning-curve SVGs")
    plot.add_argument("--inputs", required=True, nargs="+",
                      help="glob(s) for metrics.csv files")
    plot.add_argument("--out", required=True, help="directory for SVGs")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "plot":
            written = emit_plots(args.inputs, args.out)
            for path in written:
                print(path)
            return 0

        cfg = load_config(args.config)
        seeds = _parse_seed_list(args.seed_list)
        if args.command == "run":
            summaries, aggregate = run_experiment(
                cfg, seed_list=seeds, jobs=args.jobs, out_root=args.out)
            for s in summaries:
                print(f"seed {s.seed}: best {s.best_eval_return:.2f} "
                      f"final {s.final_eval_return:.2f} ({s.run_dir})")
            print(f"best over seeds: {aggregate['best_eval_return_mean']:.2f}"
                  f" +- {aggregate['best_eval_return_std']:.2f}")
        elif args.command == "sweep":
            spec = SweepSpec(args.axis, _parse_values(args.values, args.axis))
            results = run_sweep(cfg, spec, seed_list=seeds, jobs=args.jobs,
                                out_root=args.out)
            for value, aggregate in results.items():
                print(f"{args.axis}={value}: "
                      f"best {aggregate['best_eval_return_mean']:.2f} "
                      f"+- {aggregate['best_eval_return_std']:.2f}")
        else:
            summaries, aggregate = run_ablation(
                cfg, args.variant, seed_list=seeds, jobs=args.jobs,
                out_root=args.out)
            for s in summaries:
                print(f"{args.variant} seed {s.seed}: "
                      f"best {s.best_eval_return:.2f} ({s.run_dir})")
            print(f"{args.variant}: {aggregate['best_eval_return_mean']:.2f}"
                  f" +- {aggregate['best_eval_return_std']:.2f}")
        return 0
    except (ConfigError, ValueError, OSError, RuntimeError) as err:
        print(f"savgo: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
