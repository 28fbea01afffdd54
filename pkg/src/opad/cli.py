"""Command-line entry point: ``opad {run,summarize,plot,exact-info,gen-data}``.

Exit status is 0 on success, 1 on usage errors and 2 on runtime errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import warnings

from .datagen import generate_bsl, generate_bvs, save_csv
from .exact import build_exact_target
from .experiment import (
    ExperimentConfig,
    KlTrace,
    build_target,
    read_summary,
    run_experiment,
    summarize,
    write_summary,
)
from .plotting import emit_plot

EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value file with an [experiment] section")
    p.add_argument("--target", choices=["ising", "bvs", "bsl"])
    p.add_argument("--kernel", choices=["flip", "structure"])
    p.add_argument("--seed", type=int)
    p.add_argument("--chains", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out-dir", dest="out_dir")
    taken = {"target", "kernel", "seed", "chains", "iterations", "stride", "workers", "out_dir"}
    group = p.add_argument_group("target parameters")
    for f in dataclasses.fields(ExperimentConfig):
        if f.name not in taken:
            group.add_argument("--" + f.name.replace("_", "-"), dest=f.name, metavar=f.name.upper())


def _resolve_config(args) -> ExperimentConfig:
    values = {}
    if args.config:
        base = ExperimentConfig.from_file(args.config)
        values = {f.name: getattr(base, f.name) for f in dataclasses.fields(base)}
        if "kernel" in values and args.target and args.target != base.target:
            values.pop("kernel")
    for f in dataclasses.fields(ExperimentConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    try:
        return ExperimentConfig.from_mapping(values)
    except (KeyError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def cmd_run(args) -> None:
    config = _resolve_config(args)
    if not config.out_dir:
        config = config.replace(out_dir="results")
    trace = run_experiment(config)
    summary = summarize(trace) if len(trace.chains()) > 1 else _single_chain_summary(trace)
    write_summary(summary, os.path.join(config.out_dir, "summary.csv"))
    emit_plot(summary, os.path.join(config.out_dir, "plot.svg"), title=f"KL divergence: {config.target}")
    last = [r for r in summary if r.iteration == config.iterations]
    for r in last:
        print(f"{r.method:6s} mean KL at iteration {r.iteration}: {r.mean:.6g}")
    print(f"wrote {config.out_dir}")


def _single_chain_summary(trace):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return summarize(trace)


def cmd_summarize(args) -> None:
    trace = KlTrace.from_csv(args.trace)
    write_summary(summarize(trace), args.output)
    print(f"wrote {args.output}")


def cmd_plot(args) -> None:
    emit_plot(read_summary(args.summary), args.output, title=args.title)
    print(f"wrote {args.output}")


def cmd_exact_info(args) -> None:
    config = _resolve_config(args)
    exact = build_exact_target(build_target(config))
    print(f"target: {config.target}")
    print(f"support size: {exact.cardinality}")
    print(f"log Z: {exact.log_z!r}")


def cmd_gen_data(args) -> None:
    if args.target == "bvs":
        ds, truth = generate_bvs(args.m, args.n, args.rho, seed=args.seed)
        print("true gamma:", "".join(map(str, truth.gamma.tolist())))
    else:
        ds, truth = generate_bsl(args.nodes, args.degree, args.n, seed=args.seed)
        print("true adjacency:", truth.adjacency.tolist())
    save_csv(ds, args.output)
    print(f"wrote {args.output}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="opad", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run chains and write kl_trace.csv, summary.csv, plot.svg")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("summarize", help="mean and 95%% interval per iteration and method")
    p.add_argument("trace")
    p.add_argument("-o", "--output", default="summary.csv")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("plot", help="render a summary CSV as SVG")
    p.add_argument("summary")
    p.add_argument("-o", "--output", default="plot.svg")
    p.add_argument("--title", default="KL divergence")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("exact-info", help="print support size and log normalizer")
    _add_config_flags(p)
    p.set_defaults(func=cmd_exact_info)

    p = sub.add_parser("gen-data", help="write a synthetic dataset to CSV")
    p.add_argument("--target", choices=["bvs", "bsl"], required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--m", type=int, default=20, help="predictors (bvs)")
    p.add_argument("--n", type=int, default=200, help="rows")
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--nodes", type=int, default=5, help="nodes (bsl)")
    p.add_argument("--degree", type=float, default=1.0, help="expected degree (bsl)")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"opad: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        print(f"opad: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
