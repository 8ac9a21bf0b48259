"""Command-line entry points: train, predict, evaluate, lab, bench.

Data and reports go to files or standard output; progress and errors go to
standard error.  The process exits 0 on success, 1 on a handled error, and
2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time

import numpy as np

from . import lab as lab_module
from .boosting import BoostParams, load_model, predict, save_model, train
from .data import load_csv, load_feature_csv, quantize
from .errors import MVSBoostError
from .losses import LOGLOSS, SQUARED_ERROR
from .metrics import KNOWN_METRICS, evaluate
from .sampling import SamplingConfig
from .tree import TreeParams

_LOSS_BY_FLAG = {"logloss": LOGLOSS, "mse": SQUARED_ERROR}
_SAMPLING_CHOICES = ("none", "sgb", "goss", "mvs", "mvs-adaptive")


def _parse_target(text: str):
    try:
        return int(text)
    except ValueError:
        return text


def _add_data_flags(parser, with_target=True):
    parser.add_argument("data", help="CSV file to read")
    if with_target:
        parser.add_argument("--target", default="-1",
                            help="target column name or zero-based index "
                                 "(default: last column)")
    parser.add_argument("--no-header", action="store_true",
                        help="the file has no header row")
    parser.add_argument("--impute-median", action="store_true",
                        help="fill missing feature values with per-feature medians")


def _add_boost_flags(parser):
    parser.add_argument("--loss", choices=sorted(_LOSS_BY_FLAG), default="logloss")
    parser.add_argument("--iterations", type=int, default=100)
    parser.add_argument("--learning-rate", type=float, default=0.1)
    parser.add_argument("--order", choices=("first", "second"), default="second")
    parser.add_argument("--max-depth", type=int, default=6)
    parser.add_argument("--min-leaf-count", type=int, default=1)
    parser.add_argument("--min-gain", type=float, default=1e-12)
    parser.add_argument("--eps-reg", type=float, default=1e-3)
    parser.add_argument("--max-bins", type=int, default=255)
    parser.add_argument("--seed", type=int, default=0)


def _add_sampling_flags(parser):
    parser.add_argument("--sampling", choices=_SAMPLING_CHOICES, default="mvs")
    parser.add_argument("--sample-rate", type=float, default=None,
                        help="expected kept fraction for sgb/mvs (default 0.8)")
    parser.add_argument("--mvs-lambda", type=float, default=None,
                        help="hessian weight in the regularized gradient "
                             "magnitude (mvs only, default 0.1)")
    parser.add_argument("--goss-top-rate", type=float, default=None)
    parser.add_argument("--goss-other-rate", type=float, default=None)


def _resolve_sampling(args, parser) -> SamplingConfig:
    """Check flag combinations and fill strategy-specific defaults."""
    strategy = args.sampling.replace("-", "_")
    if strategy != "goss" and (args.goss_top_rate is not None
                               or args.goss_other_rate is not None):
        parser.error("--goss-top-rate/--goss-other-rate require --sampling goss")
    if strategy != "mvs" and args.mvs_lambda is not None:
        if strategy == "mvs_adaptive":
            parser.error("--mvs-lambda conflicts with --sampling mvs-adaptive; "
                         "the weight is derived each iteration")
        parser.error("--mvs-lambda requires --sampling mvs")
    if strategy in ("none", "goss") and args.sample_rate is not None:
        parser.error(f"--sample-rate is not used with --sampling {args.sampling}")

    return SamplingConfig(
        strategy=strategy,
        sample_rate=0.8 if args.sample_rate is None else args.sample_rate,
        mvs_lambda=0.1 if args.mvs_lambda is None else args.mvs_lambda,
        goss_top_rate=0.2 if args.goss_top_rate is None else args.goss_top_rate,
        goss_other_rate=0.1 if args.goss_other_rate is None else args.goss_other_rate,
        seed=args.seed,
    )


def _boost_params(args, sampling: SamplingConfig) -> BoostParams:
    return BoostParams(
        loss_kind=_LOSS_BY_FLAG[args.loss],
        n_iterations=args.iterations,
        learning_rate=args.learning_rate,
        order=args.order,
        tree=TreeParams(max_depth=args.max_depth,
                        min_leaf_count=args.min_leaf_count,
                        min_gain=args.min_gain,
                        eps_reg=args.eps_reg),
        sampling=sampling,
    )


def _log_observer(event):
    if event.stage != "iteration_end":
        return
    info = event.info
    parts = [f"iter={event.iteration + 1}",
             f"n_sampled={info['n_sampled']}",
             f"fraction={info['sampled_fraction']:.4f}"]
    if info["mu"] is not None:
        parts.append(f"mu={info['mu']:.6g}")
    if info["lam"] is not None:
        parts.append(f"lambda={info['lam']:.6g}")
    parts.append(f"train_loss={info['train_loss']:.6f}")
    print(" ".join(parts), file=sys.stderr)


def cmd_train(args, parser) -> int:
    sampling = _resolve_sampling(args, parser)
    raw = load_csv(args.data, _parse_target(args.target),
                   has_header=not args.no_header,
                   impute_median=args.impute_median)
    binned = quantize(raw, max_bins=args.max_bins)
    params = _boost_params(args, sampling)
    ensemble = train(binned, raw.targets, params, seed=args.seed,
                     observer=_log_observer)
    save_model(ensemble, args.out)
    print(f"wrote {len(ensemble.trees)} trees to {args.out}", file=sys.stderr)
    return 0


def cmd_predict(args, parser) -> int:
    ensemble = load_model(args.model)
    if args.target is not None:
        raw = load_csv(args.data, _parse_target(args.target),
                       has_header=not args.no_header,
                       impute_median=args.impute_median)
        features = raw.features
    else:
        features, _ = load_feature_csv(args.data,
                                       has_header=not args.no_header,
                                       impute_median=args.impute_median)
    scores = predict(ensemble, features, output=args.output)
    lines = "".join(f"{value!r}\n" for value in scores.tolist())
    if args.out is None:
        sys.stdout.write(lines)
    else:
        with open(args.out, "w") as fh:
            fh.write(lines)
    return 0


def cmd_evaluate(args, parser) -> int:
    ensemble = load_model(args.model)
    raw = load_csv(args.data, _parse_target(args.target),
                   has_header=not args.no_header,
                   impute_median=args.impute_median)
    if args.metrics is None:
        metrics = KNOWN_METRICS if ensemble.loss_kind == LOGLOSS else ("mse",)
    else:
        metrics = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
    report = evaluate(ensemble, raw.features, raw.targets, metrics=metrics)
    print(f"n_test={report.n_test}")
    for name in metrics:
        print(f"{name}={report.values[name]!r}")
    if args.csv is not None:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n_test", *metrics])
            writer.writerow([report.n_test,
                             *(repr(report.values[m]) for m in metrics)])
    return 0


def cmd_lab(args, parser) -> int:
    config = lab_module.load_scenario(args.scenario)
    g, h, leaf_ids, settings = lab_module.build_scenario_inputs(config)
    reports = lab_module.compare_strategies(
        g, h, leaf_ids, settings["sample_rate"], settings["lambdas"],
        n_draws=settings["n_draws"], seed=settings["seed"],
        eps_reg=settings["eps_reg"],
    )
    objective_columns = [f"objective_lam_{lam:g}" for lam in settings["lambdas"]]
    header = ["strategy", "lambda", "sample_rate", "n", "n_leaves", "n_draws",
              "theoretical", "empirical", "stderr", "empty_leaf_draws",
              *objective_columns]
    out = sys.stdout if args.out is None else open(args.out, "w", newline="")
    try:
        writer = csv.writer(out)
        writer.writerow(header)
        for report in reports:
            row = [report.name,
                   "" if report.lam is None else repr(report.lam),
                   settings["sample_rate"], g.size,
                   int(np.max(leaf_ids)) + 1, settings["n_draws"],
                   repr(report.theoretical), repr(report.empirical),
                   repr(report.stderr), report.empty_leaf_draws]
            row += [repr(report.objectives[lam]) for lam in settings["lambdas"]]
            writer.writerow(row)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


_BENCH_HEADER = ["kind", "strategy", "sample_rate", "seed", "one_minus_auc",
                 "one_minus_auc_std", "wall_time_s", "wall_time_s_std",
                 "sampled_fraction", "sampled_fraction_std", "status"]


def _bench_cell(strategy, rate, seed, args, train_binned, train_targets,
                test_features, test_targets):
    """Train and score one grid cell; never raises on model errors."""
    key = strategy.replace("-", "_")
    sampling = SamplingConfig(strategy=key, sample_rate=rate,
                              mvs_lambda=args.mvs_lambda,
                              goss_top_rate=rate / 2.0,
                              goss_other_rate=rate / 2.0,
                              seed=seed)
    params = BoostParams(
        loss_kind=_LOSS_BY_FLAG[args.loss],
        n_iterations=args.iterations,
        learning_rate=args.learning_rate,
        order=args.order,
        tree=TreeParams(max_depth=args.max_depth,
                        min_leaf_count=args.min_leaf_count,
                        min_gain=args.min_gain,
                        eps_reg=args.eps_reg),
        sampling=sampling,
    )
    fractions = []

    def observer(event):
        if event.stage == "iteration_end":
            fractions.append(event.info["sampled_fraction"])

    try:
        started = time.perf_counter()
        ensemble = train(train_binned, train_targets, params, seed=seed,
                         observer=observer)
        wall = time.perf_counter() - started
        report = evaluate(ensemble, test_features, test_targets,
                          metrics=("one_minus_auc",))
    except MVSBoostError as exc:
        return {"kind": "result", "strategy": strategy, "sample_rate": rate,
                "seed": seed, "status": f"error: {exc}"}
    return {"kind": "result", "strategy": strategy, "sample_rate": rate,
            "seed": seed,
            "one_minus_auc": report.values["one_minus_auc"],
            "wall_time_s": wall,
            "sampled_fraction": float(np.mean(fractions)),
            "status": "ok"}


def cmd_bench(args, parser) -> int:
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    for s in strategies:
        if s not in _SAMPLING_CHOICES:
            parser.error(f"unknown strategy {s!r} in --strategies")
    rates = [float(r) for r in args.sample_rates.split(",") if r.strip()]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]

    train_raw = load_csv(args.train, _parse_target(args.target),
                         has_header=not args.no_header,
                         impute_median=args.impute_median)
    test_raw = load_csv(args.test, _parse_target(args.target),
                        has_header=not args.no_header,
                        impute_median=args.impute_median)
    train_binned = quantize(train_raw, max_bins=args.max_bins)

    rows = []
    for strategy in strategies:
        for rate in rates:
            for seed in seeds:
                row = _bench_cell(strategy, rate, seed, args, train_binned,
                                  train_raw.targets, test_raw.features,
                                  test_raw.targets)
                rows.append(row)
                print(f"bench {strategy} rate={rate} seed={seed}: "
                      f"{row['status']}", file=sys.stderr)
            group = [r for r in rows
                     if r["strategy"] == strategy and r["sample_rate"] == rate
                     and r["status"] == "ok"]
            if group:
                agg = {"kind": "aggregate", "strategy": strategy,
                       "sample_rate": rate, "status": f"ok ({len(group)} runs)"}
                for column in ("one_minus_auc", "wall_time_s", "sampled_fraction"):
                    values = np.array([r[column] for r in group])
                    agg[column] = float(values.mean())
                    agg[column + "_std"] = float(values.std())
                rows.append(agg)

    out = sys.stdout if args.out is None else open(args.out, "w", newline="")
    try:
        writer = csv.DictWriter(out, fieldnames=_BENCH_HEADER, restval="")
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvsboost",
        description="Gradient boosted trees with pluggable row sampling.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    p_train = commands.add_parser("train", help="fit a model on a CSV file")
    _add_data_flags(p_train)
    _add_boost_flags(p_train)
    _add_sampling_flags(p_train)
    p_train.add_argument("--out", required=True, help="model file to write")
    p_train.set_defaults(func=cmd_train)

    p_predict = commands.add_parser("predict", help="score rows with a model")
    p_predict.add_argument("data", help="CSV file to score")
    p_predict.add_argument("--model", required=True)
    p_predict.add_argument("--target", default=None,
                           help="target column to drop before scoring "
                                "(omit when the file has only features)")
    p_predict.add_argument("--no-header", action="store_true")
    p_predict.add_argument("--impute-median", action="store_true")
    p_predict.add_argument("--output", choices=("raw", "prob"), default="raw")
    p_predict.add_argument("--out", default=None,
                           help="write scores here instead of stdout")
    p_predict.set_defaults(func=cmd_predict)

    p_eval = commands.add_parser("evaluate", help="compute metrics on a CSV file")
    _add_data_flags(p_eval)
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--metrics", default=None,
                        help="comma-separated subset of "
                             f"{','.join(KNOWN_METRICS)}")
    p_eval.add_argument("--csv", default=None,
                        help="also write the report as a one-row CSV")
    p_eval.set_defaults(func=cmd_evaluate)

    p_lab = commands.add_parser(
        "lab", help="variance diagnostics for sampling strategies")
    p_lab.add_argument("--scenario", required=True,
                       help="flat key = value scenario file")
    p_lab.add_argument("--out", default=None, help="CSV report path")
    p_lab.set_defaults(func=cmd_lab)

    p_bench = commands.add_parser(
        "bench", help="strategy x rate x seed benchmark grid")
    p_bench.add_argument("--train", required=True, help="training CSV")
    p_bench.add_argument("--test", required=True, help="evaluation CSV")
    p_bench.add_argument("--target", default="-1")
    p_bench.add_argument("--no-header", action="store_true")
    p_bench.add_argument("--impute-median", action="store_true")
    p_bench.add_argument("--strategies", default="sgb,mvs")
    p_bench.add_argument("--sample-rates", default="0.1,0.5")
    p_bench.add_argument("--seeds", default="0,1,2")
    p_bench.add_argument("--mvs-lambda", type=float, default=0.1)
    p_bench.add_argument("--loss", choices=sorted(_LOSS_BY_FLAG),
                         default="logloss")
    p_bench.add_argument("--iterations", type=int, default=100)
    p_bench.add_argument("--learning-rate", type=float, default=0.1)
    p_bench.add_argument("--order", choices=("first", "second"),
                         default="second")
    p_bench.add_argument("--max-depth", type=int, default=6)
    p_bench.add_argument("--min-leaf-count", type=int, default=1)
    p_bench.add_argument("--min-gain", type=float, default=1e-12)
    p_bench.add_argument("--eps-reg", type=float, default=1e-3)
    p_bench.add_argument("--max-bins", type=int, default=255)
    p_bench.add_argument("--out", default=None, help="CSV report path")
    p_bench.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except MVSBoostError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
