"""Command-line entry point.

Subcommands: run, ablate, compare-optimizers, pso-study, gradcheck, synth.
Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .gradcheck import composed_gradcheck_suite
from .harness import (
    ExperimentSpec,
    run_ablation_suite,
    run_experiment,
    run_optimizer_comparison,
    run_pso_distribution_study,
)
from .preprocessing import SyntheticSpec, synthesize_series, write_csv


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def build_parser() -> _Parser:
    parser = _Parser(prog="ltpnet", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--seed", type=int, default=None,
                       help="override all spec seeds (data/init/shuffle/swarm = seed..seed+3)")
        p.add_argument("--out-dir", default=None, help="override the output directory")

    p_run = sub.add_parser("run", parents=[], help="run one experiment from a JSON spec")
    p_run.add_argument("--config", required=True, help="path to an experiment spec JSON")
    common(p_run)

    p_abl = sub.add_parser("ablate", help="run the four-variant ablation suite")
    p_abl.add_argument("--config", required=True)
    common(p_abl)

    p_cmp = sub.add_parser("compare-optimizers", help="adam vs adaptive-momentum vs sgd+pso")
    p_cmp.add_argument("--config", required=True)
    common(p_cmp)

    p_pso = sub.add_parser("pso-study", help="swarm run-distribution study")
    p_pso.add_argument("--objective", default="sphere", choices=["sphere", "rastrigin"])
    p_pso.add_argument("--runs", type=int, default=10)
    p_pso.add_argument("--dim", type=int, default=5)
    common(p_pso)

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p_grad.add_argument("--seeds", type=int, default=20, help="number of random configurations")
    p_grad.add_argument("--tolerance", type=float, default=1e-4)
    common(p_grad)

    p_synth = sub.add_parser("synth", help="write a synthetic dataset CSV")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--length", type=int, default=400)
    p_synth.add_argument("--features", type=int, default=2)
    p_synth.add_argument("--period", type=float, default=12.0)
    p_synth.add_argument("--slope", type=float, default=0.0)
    p_synth.add_argument("--noise", type=float, default=0.1)
    p_synth.add_argument("--seed", type=int, default=0)
    return parser


def _load_spec(args) -> ExperimentSpec:
    spec = ExperimentSpec.from_json_file(args.config)
    if args.out_dir is not None:
        spec = replace(spec, output_dir=args.out_dir)
    if args.seed is not None:
        spec.seeds.data = args.seed
        spec.seeds.init = args.seed + 1
        spec.seeds.shuffle = args.seed + 2
        spec.seeds.swarm = args.seed + 3
    return spec


def cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    if args.command is None:
        print(parser.format_help(), file=sys.stderr)
        return 1
    try:
        return _dispatch(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - boundary of the program
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "run":
        report = run_experiment(_load_spec(args))
        print(json.dumps(report.deterministic_payload()["eval"], indent=2))
        print(f"report version {report.version}")
        return 0

    if args.command == "ablate":
        result = run_ablation_suite(_load_spec(args))
        print(f"ablation table: {result['summary']['table']}")
        return 0

    if args.command == "compare-optimizers":
        result = run_optimizer_comparison(_load_spec(args))
        print(f"optimizer table: {result['summary']['table']}")
        return 0

    if args.command == "pso-study":
        summary = run_pso_distribution_study(
            args.objective,
            run_count=args.runs,
            out_dir=args.out_dir or "out",
            dim=args.dim,
            base_seed=args.seed or 0,
        )
        for config, stats in summary["configs"].items():
            print(
                f"{args.objective}/{config}: median best {stats['median']:.6g}, "
                f"mean {stats['mean']:.6g}"
            )
        return 0

    if args.command == "gradcheck":
        cases = composed_gradcheck_suite(n_seeds=args.seeds, seed_base=args.seed or 0)
        worst = max(c.error for c in cases)
        print(f"max relative error over {len(cases)} seeds: {worst:.3e}")
        if worst >= args.tolerance:
            print(f"FAIL: exceeds tolerance {args.tolerance:g}", file=sys.stderr)
            return 2
        print(f"PASS: within tolerance {args.tolerance:g}")
        return 0

    if args.command == "synth":
        spec = SyntheticSpec(
            length=args.length,
            feature_count=args.features,
            seasonal_period=args.period,
            trend_slope=args.slope,
            noise_std=args.noise,
            seed=args.seed,
        )
        table = synthesize_series(spec)
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        write_csv(table, args.out)
        print(f"wrote {table.n_rows} rows x {len(table.names)} columns to {args.out}")
        return 0

    raise UsageError(f"unknown command {args.command!r}")


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
