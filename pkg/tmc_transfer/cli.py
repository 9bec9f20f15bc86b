"""
Command-line entry point

Subcommands:
    gen       synthetic network CSV + params.json (optionally a shifted target)
    select    Lasso feature selection and coefficient tables
    match     similar-intersection ranking for every target intersection
    run       full transfer pipeline: predictions CSV + one plan JSON per target
    evaluate  leave-one-intersection-out comparison tables
    predict   estimates from a saved plan

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numeric failure.
Data goes to files; stdout only carries short summaries.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import ValidationError as PydanticValidationError

from tmc_transfer.config import (
    RunConfig, build_config, config_echo, configure_logging, derive_seed, resolve_jobs,
)
from tmc_transfer.datagen import ShiftSpec, generate_network, generate_transfer_benchmark
from tmc_transfer.domain_model import LABEL_NAMES, MOVEMENT_TITLES
from tmc_transfer.errors import NumericError, StorageError, TMCError, UsageError, ValidationError
from tmc_transfer.evaluation import build_factories, loio_evaluate, mae, tune_config
from tmc_transfer.lasso import select_features
from tmc_transfer.persistence import (
    ingest_csv, load_model, save_model, write_dataset_csv, write_frame_csv, write_json,
)
from tmc_transfer.pipeline import SELECT_KEY, TransferPipeline, predictions_for
from tmc_transfer.report import generate_pdf_report

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors raised as UsageError (exit code 1)"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="run seed (default 42)")
    common.add_argument("--config", help="JSON file overriding the defaults")
    common.add_argument("--jobs", type=int, help="worker threads (default TMC_JOBS or CPU count)")
    return common


def _boosting_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("transfer model")
    group.add_argument("--steps", type=int, help="outer TrAdaBoost.R2 steps S")
    group.add_argument("--folds", type=int, help="cross-validation folds F")
    group.add_argument("--iterations", type=int, help="AdaBoost.R2 rounds T per stage")
    group.add_argument("--loss", choices=["linear", "square", "exponential"])
    group.add_argument("--max-depth", type=int, help="weak learner depth")
    group.add_argument("--fraction", type=float, help="substituted share of the matched intersection")


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = _Parser(prog="tmc_transfer", description="Transfer-learning TMC estimation toolkit")
    subparsers = parser.add_subparsers(dest="command", parser_class=_Parser)

    gen = subparsers.add_parser("gen", parents=[common], help="generate a synthetic network")
    gen.add_argument("--intersections", type=int, required=True)
    gen.add_argument("--days", type=int, required=True)
    gen.add_argument("--approaches", type=int, help="approaches per intersection (3 or 4)")
    gen.add_argument("--noise", type=float, help="lognormal volume noise sigma")
    gen.add_argument("--shift-scale", type=float, help="also write a shifted target: demand multiplier")
    gen.add_argument("--shift-rotation", type=int, default=0, help="target profile shift in bins")
    gen.add_argument("--shift-jitter", type=float, default=0.0, help="target turn-fraction jitter")
    gen.add_argument("--shift-lanes", type=float, default=0.0, help="target lane reconfiguration probability")
    gen.add_argument("--out", default="data", help="output directory")

    select = subparsers.add_parser("select", parents=[common], help="Lasso feature selection")
    select.add_argument("--source", required=True, help="labeled source CSV")
    select.add_argument("--grid-size", type=int)
    select.add_argument("--lasso-folds", type=int)
    select.add_argument("--out", default="output/selection")

    match = subparsers.add_parser("match", parents=[common], help="rank similar source intersections")
    match.add_argument("--source", required=True)
    match.add_argument("--target", required=True)
    match.add_argument("--out", default="output/matches.json")

    run = subparsers.add_parser("run", parents=[common], help="run the transfer pipeline")
    run.add_argument("--source", required=True)
    run.add_argument("--target", required=True, help="target CSV (labels optional)")
    _boosting_options(run)
    run.add_argument("--out", default="output/run")

    evaluate = subparsers.add_parser("evaluate", parents=[common], help="leave-one-intersection-out evaluation")
    evaluate.add_argument("--data", required=True, help="labeled CSV")
    evaluate.add_argument("--models", help="comma separated subset of TL,KNN,RF,AdaBoost")
    evaluate.add_argument("--eval-folds", type=int, help="grid-search folds")
    _boosting_options(evaluate)
    evaluate.add_argument("--tune", action="store_true", help="grid-search hyper-parameters first")
    evaluate.add_argument("--pdf", action="store_true", help="also write report.pdf")
    evaluate.add_argument("--progress", action="store_true", help="show a progress bar")
    evaluate.add_argument("--out", default="output/evaluation")

    predict = subparsers.add_parser("predict", parents=[common], help="estimate TMCs with a saved plan")
    predict.add_argument("--plan", required=True, help="plan JSON written by run")
    predict.add_argument("--target", required=True)
    predict.add_argument("--out", default="output/predictions.csv")

    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    get = lambda name: getattr(args, name, None)
    tree = {"max_depth": get("max_depth")}
    models = get("models")
    return {
        "seed": get("seed"),
        "jobs": get("jobs"),
        "lasso": {"grid_size": get("grid_size"), "folds": get("lasso_folds")},
        "boosting": {"steps": get("steps"), "folds": get("folds"), "iterations": get("iterations"),
                     "loss": get("loss"), "tree": tree},
        "matching": {"substitution_fraction": get("fraction")},
        "eval": {"models": [m.strip() for m in models.split(",") if m.strip()] if models else None,
                 "folds": get("eval_folds")},
        "generator": {"approaches": get("approaches"), "noise_scale": get("noise")},
    }


def cmd_gen(args: argparse.Namespace, config: RunConfig, jobs: int) -> int:
    out = Path(args.out)
    if args.shift_scale is None:
        network = generate_network(args.intersections, args.days, config.seed, config.generator)
        params = network.to_dict()
    else:
        try:
            shift = ShiftSpec(demand_scale=args.shift_scale, profile_rotation=args.shift_rotation,
                              turn_fraction_jitter=args.shift_jitter, lane_reconfig_prob=args.shift_lanes)
        except PydanticValidationError as e:
            raise ValidationError(f"invalid shift: {e}") from e
        benchmark = generate_transfer_benchmark(args.intersections, args.days, shift, config.seed,
                                                config.generator)
        network = benchmark.source
        params = network.to_dict()
        params["target"] = {
            "shift": shift.model_dump(),
            "unshifted": benchmark.unshifted_params.model_dump(mode="json"),
            "params": benchmark.target_params.model_dump(mode="json"),
        }
        write_dataset_csv(benchmark.target, out / "target.csv")
        print(f"✓ Wrote {len(benchmark.target)} shifted target instances to {out / 'target.csv'}")

    write_dataset_csv(network.dataset, out / "network.csv")
    print(f"✓ Wrote {len(network.dataset)} instances to {out / 'network.csv'}")
    write_json(params, out / "params.json")
    print(f"✓ Ground truth in {out / 'params.json'}")
    return 0


def cmd_select(args: argparse.Namespace, config: RunConfig, jobs: int) -> int:
    out = Path(args.out)
    source = ingest_csv(args.source)
    selection = select_features(source, config.lasso, derive_seed(config.seed, SELECT_KEY))
    save_model(selection, out / "selection.json", config_echo(config))
    write_frame_csv(selection.coefficient_table("raw"), out / "coefficients.csv", index=True)
    write_frame_csv(selection.coefficient_table("standardized"), out / "coefficients_standardized.csv",
                    index=True)
    print(f"✓ Selected {len(selection.selected)} variables: {', '.join(selection.selected) or '(none)'}")
    print(f"✓ Coefficient tables in {out}")
    return 0


def cmd_match(args: argparse.Namespace, config: RunConfig, jobs: int) -> int:
    source = ingest_csv(args.source)
    targets = ingest_csv(args.target, allow_unlabeled=True)
    pipeline = TransferPipeline(source, config, jobs)
    results = [pipeline.matcher.match(targets.for_intersection(i)) for i in targets.intersection_ids]
    write_json({"variables": pipeline.matcher.variables,
                "matches": [r.to_dict() for r in results]}, args.out)
    for result in results:
        print(f"✓ {result.target_id} -> {result.chosen} (score {result.chosen_score:.3f})")
    return 0


def cmd_run(args: argparse.Namespace, config: RunConfig, jobs: int) -> int:
    out = Path(args.out)
    source = ingest_csv(args.source)
    targets = ingest_csv(args.target, allow_unlabeled=True)
    results = TransferPipeline(source, config, jobs).run_all(targets)

    predictions = predictions_for(results)
    write_frame_csv(predictions, out / "predictions.csv")
    for result in results:
        save_model(result.plan, out / "plans" / f"{result.plan.target_id}.json", config_echo(config))
    print(f"✓ Wrote {len(predictions)} estimates to {out / 'predictions.csv'}")
    print(f"✓ {len(results)} transfer plans in {out / 'plans'}")

    if targets.is_labeled:
        # predictions are grouped by target intersection
        views = [targets.for_intersection(r.plan.target_id) for r in results]
        for movement in LABEL_NAMES:
            truth = np.concatenate([view.labels(movement) for view in views])
            score = mae(truth, predictions[f"{movement}_hat"].to_numpy())
            print(f"  {MOVEMENT_TITLES[movement]:<11} MAE {score:.2f}")
    return 0


def cmd_evaluate(args: argparse.Namespace, config: RunConfig, jobs: int) -> int:
    out = Path(args.out)
    dataset = ingest_csv(args.data)

    if args.tune:
        config, grids = tune_config(dataset, config, jobs)
        write_json({name: {"best_params": g.best_params, "table": g.table.to_dict("records")}
                    for name, g in grids.items()}, out / "tuning.json")
        print(f"✓ Tuned {', '.join(grids)} (see {out / 'tuning.json'})")

    report = loio_evaluate(dataset, build_factories(config, 1), config, jobs, progress=args.progress)
    write_frame_csv(report.mae_table(), out / "mae.csv", index=True)
    write_frame_csv(report.rmse_table(), out / "rmse.csv", index=True)
    write_frame_csv(report.breakdown(), out / "breakdown.csv")
    write_json(report.to_dict(), out / "report.json")

    print("MAE")
    print(report.mae_table().round(2).to_string())
    print("RMSE")
    print(report.rmse_table().round(2).to_string())
    if report.failures:
        print(f"✗ {len(report.failures)} model folds failed (see report.json)")

    if args.pdf:
        result = generate_pdf_report(report, out / "report.pdf")
        if result['success']:
            print(f"✓ PDF report: {result['pdf_path']} ({result['size_kb']} KB)")
        else:
            print(f"✗ PDF report failed: {result['error']}")
    print(f"✓ Evaluation written to {out}")
    return 0


def cmd_predict(args: argparse.Namespace, config: RunConfig, jobs: int) -> int:
    plan = load_model(args.plan, expected="TransferPlan")
    targets = ingest_csv(args.target, allow_unlabeled=True)
    predictions = plan.predict(targets)
    write_frame_csv(predictions, args.out)
    print(f"✓ Wrote {len(predictions)} estimates to {args.out}")
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "select": cmd_select,
    "match": cmd_match,
    "run": cmd_run,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return UsageError.exit_code

    try:
        configure_logging()
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return UsageError.exit_code
        config = build_config(args.config, _overrides(args))
        jobs = resolve_jobs(config.jobs)
        logger.debug("config: %s", config_echo(config))
        return COMMANDS[args.command](args, config, jobs)
    except TMCError as e:
        print(f"✗ {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"✗ StorageError: {e}", file=sys.stderr)
        return StorageError.exit_code
    except (ArithmeticError, FloatingPointError) as e:
        print(f"✗ NumericError: {e}", file=sys.stderr)
        return NumericError.exit_code
