"""Command-line interface.

Three subcommands::

    bayens run     --config FILE | --dataset PATH [--method a,b] [--trials N]
                   [--seed S] [--out DIR] [...]
    bayens report  --in DIR [--format csv|md] [--out DIR]
    bayens verify  --check variance|bound|normality|gap [options] [--out DIR]

``run`` executes the prequential experiment and writes per-trial record CSVs
plus a summary; ``report`` turns a run directory into a dataset-by-method
table and mean curve files; ``verify`` emits a CSV per convergence check.
All CSVs are UTF-8 with a header row.  Exit status is 0 on success and
nonzero with a diagnostic on stderr otherwise.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness, verify
from .data import SplitPlan, load_dataset, split
from .errors import BayensError
from .rng import STREAM_SYNTHETIC, stream_rng
from .weak import build_pool


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bayens",
        description="Online ensemble-weight estimation: experiments, reports, and checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a prequential experiment")
    run.add_argument("--config", help="flat key = value config file")
    run.add_argument("--dataset", help="LIBSVM dataset path (overrides config)")
    run.add_argument("--method", help="comma-separated methods (overrides config)")
    run.add_argument("--trials", type=int, help="number of random trials")
    run.add_argument("--seed", type=int, help="experiment seed")
    run.add_argument("--m", type=int, help="pool size")
    run.add_argument("--learner-kind", choices=("perceptron", "naive_bayes"))
    run.add_argument("--base-loss", choices=("ramp", "logistic", "hinge", "zero_one"))
    run.add_argument("--theta", type=float)
    run.add_argument("--frozen-pool", choices=("true", "false"))
    run.add_argument("--out", default="results", help="output directory")

    report = sub.add_parser("report", help="tabulate a run directory")
    report.add_argument("--in", dest="in_dir", required=True)
    report.add_argument("--format", choices=("csv", "md"), default="csv")
    report.add_argument("--out", help="output directory (default: the run directory)")

    ver = sub.add_parser("verify", help="run a convergence check")
    ver.add_argument(
        "--check", required=True, choices=("variance", "bound", "normality", "gap")
    )
    ver.add_argument("--stream", default="exponential:2", help="e.g. exponential:2, uniform:1,3")
    ver.add_argument("--horizon", type=int, default=10_000, help="stream length T")
    ver.add_argument("--replications", type=int, default=500)
    ver.add_argument(
        "--gamma-tilde",
        default="0.5",
        help="comma-separated SGD gains on the theta^-2 scale (variance check)",
    )
    ver.add_argument("--theta", type=float, default=0.1)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--seeds", type=int, default=10, help="seed count (normality check)")
    ver.add_argument("--horizons", default="100,1000,10000", help="normality horizons")
    ver.add_argument("--samples", type=int, default=100_000, help="posterior draws per horizon")
    ver.add_argument("--dataset", help="dataset path (bound check)")
    ver.add_argument("--p", default="1.5,2,4", help="bound exponents (bound check)")
    ver.add_argument("--m", type=int, default=100, help="pool size (bound check)")
    ver.add_argument("--learner-kind", default="perceptron", choices=("perceptron", "naive_bayes"))
    ver.add_argument("--base-loss", default="ramp", choices=("ramp", "logistic", "hinge", "zero_one"))
    ver.add_argument("--out", default="results/verify", help="output directory")
    return parser


def _cmd_run(args) -> int:
    overrides = {}
    if args.dataset:
        overrides["dataset"] = args.dataset
    if args.method:
        overrides["methods"] = args.method
    if args.trials is not None:
        overrides["trials"] = str(args.trials)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.m is not None:
        overrides["m"] = str(args.m)
    if args.learner_kind:
        overrides["learner_kind"] = args.learner_kind
    if args.base_loss:
        overrides["base_loss"] = args.base_loss
    if args.theta is not None:
        overrides["theta"] = str(args.theta)
    if args.frozen_pool:
        overrides["frozen_pool"] = args.frozen_pool

    if args.config:
        config = harness.load_config(args.config, overrides)
    else:
        if "dataset" not in overrides:
            print("error: --dataset (or --config) is required", file=sys.stderr)
            return 2
        config = harness.config_from_mapping(overrides)

    summary = harness.run_experiment(config)
    harness.write_records(summary, args.out)
    for method in config.methods:
        errors = ", ".join(f"{e:.4f}" for e in summary.trial_errors(method))
        print(
            f"{summary.dataset_name} {method}: mean error "
            f"{summary.mean_error(method):.4f} over {config.trials} trials [{errors}]"
        )
    print(f"records written to {Path(args.out).resolve()}")
    return 0


def _cmd_report(args) -> int:
    table_path = harness.write_report(args.in_dir, fmt=args.format, out_dir=args.out)
    print(table_path.read_text(encoding="utf-8"), end="")
    print(f"table written to {table_path}", file=sys.stderr)
    return 0


def _verify_variance(args, out_dir: Path) -> None:
    stream = verify.parse_stream(args.stream)
    gains = [float(v) for v in args.gamma_tilde.split(",") if v]
    lines = [
        "estimator,empirical_variance,predicted_variance,half_width,"
        "replications,horizon,slow_regime,paired_half_width,sgd_strictly_larger"
    ]
    report = verify.mc_variance(
        stream, "bayes", args.horizon, args.replications, theta=args.theta, seed=args.seed
    )
    lines.append(
        f"{report.estimator},{report.empirical_variance!r},{report.predicted_variance!r},"
        f"{report.half_width!r},{report.replications},{report.horizon},False,,"
    )
    print(
        f"bayes: empirical {report.empirical_variance:.4f} "
        f"predicted {report.predicted_variance:.4f} (+-{report.half_width:.4f})"
    )
    for gain in gains:
        comparison = verify.mc_variance_comparison(
            stream, args.horizon, args.replications, gain, theta=args.theta, seed=args.seed
        )
        sgd = comparison.sgd
        if sgd.slow_regime:
            print(f"sgd gamma_tilde={gain}: slow-convergence regime, excluded from comparison")
            lines.append(
                f"{sgd.estimator},{sgd.empirical_variance!r},,{sgd.half_width!r},"
                f"{sgd.replications},{sgd.horizon},True,,"
            )
            continue
        print(
            f"sgd gamma_tilde={gain}: empirical {sgd.empirical_variance:.4f} "
            f"predicted {sgd.predicted_variance:.4f} (+-{sgd.half_width:.4f}) "
            f"strictly larger than bayes: {comparison.sgd_strictly_larger}"
        )
        lines.append(
            f"{sgd.estimator},{sgd.empirical_variance!r},{sgd.predicted_variance!r},"
            f"{sgd.half_width!r},{sgd.replications},{sgd.horizon},False,"
            f"{comparison.paired_half_width!r},{comparison.sgd_strictly_larger}"
        )
    (out_dir / "variance.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _verify_bound(args, out_dir: Path) -> None:
    if not args.dataset:
        raise BayensError("the bound check requires --dataset")
    dataset = load_dataset(args.dataset)
    plan = SplitPlan(0.1, args.seed, 1)
    train, eval_set = split(dataset, plan, 0)
    pool = build_pool(
        train, args.m, args.learner_kind, args.seed, dimension=dataset.dimension
    )
    lines = ["dataset,p,empirical_error,bound,margin,learners_used,excluded,note"]
    for p in (float(v) for v in args.p.split(",") if v):
        report = verify.check_bound(
            eval_set, pool, args.base_loss, p, theta=args.theta
        )
        print(
            f"{dataset.name} p={p}: error {report.empirical_error:.4f} "
            f"bound {report.bound_value:.4f} margin {report.margin:.4f}"
        )
        lines.append(
            f"{dataset.name},{p},{report.empirical_error!r},{report.bound_value!r},"
            f"{report.margin!r},{report.learners_used},"
            f"{';'.join(map(str, report.excluded_learners))},{report.note}"
        )
    (out_dir / "bound.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _verify_normality(args, out_dir: Path) -> None:
    stream = verify.parse_stream(args.stream)
    horizons = tuple(int(v) for v in args.horizons.split(",") if v)
    lines = ["seed,horizon,ecdf_distance"]
    monotone = 0
    for seed in range(args.seeds):
        points = verify.check_normality(
            stream, horizons, args.samples, theta=args.theta, seed=seed
        )
        distances = [pt.ecdf_distance for pt in points]
        monotone += all(a > b for a, b in zip(distances, distances[1:]))
        for pt in points:
            lines.append(f"{seed},{pt.horizon},{pt.ecdf_distance!r}")
    print(f"monotone decreasing for {monotone} of {args.seeds} seeds over {horizons}")
    (out_dir / "normality.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _verify_gap(args, out_dir: Path) -> None:
    stream = verify.parse_stream(args.stream)
    rng = stream_rng(args.seed, STREAM_SYNTHETIC, 0)
    losses = stream.draw(rng, args.horizon)
    report = verify.check_gap(losses, theta=args.theta)
    lines = ["t,gap,gap_sqrt_t"]
    lines.extend(
        f"{t},{float(report.gaps[t])!r},{float(report.scaled[t])!r}" for t in range(len(report.gaps))
    )
    print(
        f"gap: {report.gaps[0]:.6f} at t=0 -> {report.gaps[-1]:.6f} at t={len(losses)}; "
        f"gap*sqrt(t) final {report.scaled[-1]:.6f}"
    )
    (out_dir / "gap.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _cmd_verify(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.check == "variance":
        _verify_variance(args, out_dir)
    elif args.check == "bound":
        _verify_bound(args, out_dir)
    elif args.check == "normality":
        _verify_normality(args, out_dir)
    else:
        _verify_gap(args, out_dir)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "report":
            return _cmd_report(args)
        return _cmd_verify(args)
    except (BayensError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
