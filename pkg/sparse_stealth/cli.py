"""The ``sparse-stealth`` command line.

Exit codes: 0 on success, 1 on invalid input, 2 on a numerical failure.
"""
from __future__ import annotations
from typing import Any, NoReturn, Sequence

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .artifact import AsyncArtifact, DETECTION_HEADER, ROC_HEADER, SyncArtifact, detection_row, roc_rows, trace_rows
from .case_model import assemble_model, dump_model, load_case, load_model
from .detection import detection_probability, false_alarm_probability, roc_curve
from .enums import Algorithm
from .errors import NumericalError, StealthException, ValidationError
from .gaussian_core import check_attack_covariance, evaluate_metrics
from .log import LogLevels, setup_logging
from .runner import AsyncExperimentRunner, ExperimentRunner, construct_attack
from ._types import AttackPlan, DetectionConfig, ExperimentConfig, ObservationModel

__all__: tuple[str, ...] = (
    "build_parser",
    "cli_main",
    "main",
)

_log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2


class _UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors exit through cli_main with the validation exit code
    def error(self, message: str) -> NoReturn:
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _add_model_input(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", required=True, type=Path, help="model JSON written by 'build'")


def _add_attack_input(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--attack", required=True, type=Path, help="attack JSON written by 'attack'")


def _add_output_dir(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--output-dir", type=Path, default=Path("."), help="directory the output files are written to (default: .)")


def _add_sampling(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--n-samples", type=int, default=100_000, help="Monte-Carlo draws per estimate (default: 100000)")
    parser.add_argument("--seed", type=int, default=0, help="base random seed (default: 0)")


def _add_sweep(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--case", dest="cases", action="append", help="bundled case name, path or url; repeatable (default: ieee9)")
    parser.add_argument("--rho", type=float, default=0.9, help="Toeplitz decay of the state covariance, in [0, 1) (default: 0.9)")
    parser.add_argument("--snr-db", type=float, nargs="+", default=[30.0], help="SNR regimes in dB (default: 30)")
    parser.add_argument("--lambda", dest="lambdas", type=float, nargs="+", default=[8.0], help="weightings, each >= 1 (default: 8)")
    grid = parser.add_mutually_exclusive_group()
    grid.add_argument("--k", dest="ks", type=int, nargs="+", default=[], help="absolute sparsities")
    grid.add_argument("--k-fraction", dest="k_fractions", type=float, nargs="+", default=[], help="sparsities as proportions of m in (0, 1] (default: 0.1 ... 1.0)")
    parser.add_argument("--algorithm", choices=[a.value for a in Algorithm], default=Algorithm.independent.value, help="greedy construction (default: independent)")
    parser.add_argument("--project-each-epoch", action="store_true", help="project the correlated construction after every epoch")
    parser.add_argument("--concurrent", action="store_true", help="run sweep points concurrently in worker threads")
    _add_sampling(parser)
    _add_output_dir(parser)


def build_parser() -> argparse.ArgumentParser:
    """The argument parser of every subcommand.

    .. versionadded:: 0.1.0
    """
    parser = _Parser(prog="sparse-stealth", description="Sparse stealth attack construction for DC state estimation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--log-level",
        choices=[level.name for level in LogLevels],
        default=LogLevels.WARNING.name,
        help="logging level on stderr (default: WARNING)",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    build = sub.add_parser("build", help="build the observation model of a case")
    build.add_argument("--case", default="ieee9", help="bundled case name, path or url (default: ieee9)")
    build.add_argument("--rho", type=float, default=0.9, help="Toeplitz decay of the state covariance, in [0, 1) (default: 0.9)")
    build.add_argument("--snr-db", type=float, default=30.0, help="SNR in dB fixing the noise variance (default: 30)")
    _add_output_dir(build)

    attack = sub.add_parser("attack", help="construct a k-sparse attack on a saved model")
    _add_model_input(attack)
    attack.add_argument("--k", type=int, required=True, help="number of attacked sensors, 1 <= k <= m")
    attack.add_argument("--lambda", dest="lam", type=float, default=8.0, help="weighting, >= 1 (default: 8)")
    attack.add_argument("--algorithm", choices=[a.value for a in Algorithm], default=Algorithm.independent.value, help="greedy construction (default: independent)")
    attack.add_argument("--method", choices=["newton", "gradient"], default="newton", help="correlated subproblem solver (default: newton)")
    attack.add_argument("--project-each-epoch", action="store_true", help="project the correlated construction after every epoch")
    _add_output_dir(attack)

    metrics = sub.add_parser("metrics", help="print cost, mutual information and KL divergence of an attack")
    _add_model_input(metrics)
    _add_attack_input(metrics)

    detect = sub.add_parser("detect", help="estimate detection and false alarm probabilities of an attack")
    _add_model_input(detect)
    _add_attack_input(detect)
    detect.add_argument("--tau", type=float, default=2.0, help="likelihood ratio threshold, > 0 (default: 2)")
    _add_sampling(detect)
    _add_output_dir(detect)

    roc = sub.add_parser("roc", help="trace the operating points of the likelihood ratio test")
    _add_model_input(roc)
    _add_attack_input(roc)
    roc.add_argument("--tau", dest="taus", type=float, nargs="+", default=[0.5, 1.0, 2.0, 4.0, 8.0], help="thresholds, each > 0")
    _add_sampling(roc)
    _add_output_dir(roc)

    sweep_k = sub.add_parser("sweep-k", help="sweep the sparsity and write sweep_k.csv")
    _add_sweep(sweep_k)

    sweep_lambda = sub.add_parser("sweep-lambda", help="sweep the weighting and write sweep_lambda.csv")
    _add_sweep(sweep_lambda)
    sweep_lambda.add_argument("--tau", type=float, default=2.0, help="likelihood ratio threshold, > 0 (default: 2)")
    return parser


def _read_model(path: Path) -> ObservationModel:
    try:
        return load_model(path.read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read model {str(path)!r}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{str(path)!r} is not a model file: {exc}") from None


def _read_attack(path: Path, model: ObservationModel) -> AttackPlan:
    try:
        plan = AttackPlan.from_payload(json.loads(path.read_text()))
    except OSError as exc:
        raise ValidationError(f"cannot read attack {str(path)!r}: {exc.strerror}") from None
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValidationError(f"{str(path)!r} is not an attack file: {exc}") from None
    if plan.m != model.m:
        raise ValidationError(f"attack has m={plan.m}, model has m={model.m}")
    check_attack_covariance(plan.Sigma_AA, plan.support)
    return plan


def _cmd_build(args: argparse.Namespace) -> None:
    model = assemble_model(load_case(args.case), args.rho, args.snr_db)
    path = SyncArtifact("model.json", dump_model(model) + "\n").save_in(args.output_dir)
    print(path)


def _cmd_attack(args: argparse.Namespace) -> None:
    model = _read_model(args.model)
    algorithm = Algorithm(args.algorithm)
    plan, trace = construct_attack(
        model, args.k, args.lam, algorithm, method=args.method, project_each_epoch=args.project_each_epoch
    )
    if plan.shortfall:
        _log.warning("only %d of the requested %d sensors lower the cost", len(plan.support), plan.k)
    header, rows = trace_rows(trace, algorithm)
    print(SyncArtifact.from_json("attack.json", plan.to_payload()).save_in(args.output_dir))
    print(SyncArtifact.from_rows("trace.csv", header, rows).save_in(args.output_dir))


def _cmd_metrics(args: argparse.Namespace) -> None:
    model = _read_model(args.model)
    plan = _read_attack(args.attack, model)
    record = evaluate_metrics(model, plan.Sigma_AA, plan.lam)
    print(json.dumps(record.to_payload(), indent=2))


def _cmd_detect(args: argparse.Namespace) -> None:
    model = _read_model(args.model)
    plan = _read_attack(args.attack, model)
    cfg = DetectionConfig(tau=args.tau, n_samples=args.n_samples, seed=args.seed)
    detect = detection_probability(model, plan.Sigma_AA, cfg)
    false_alarm = false_alarm_probability(model, plan.Sigma_AA, cfg)
    row = detection_row(plan.lam, plan.k, cfg, detect, false_alarm)
    print(SyncArtifact.from_rows("detection.csv", DETECTION_HEADER, [row]).save_in(args.output_dir))


def _cmd_roc(args: argparse.Namespace) -> None:
    model = _read_model(args.model)
    plan = _read_attack(args.attack, model)
    cfg = DetectionConfig(n_samples=args.n_samples, seed=args.seed)
    points = roc_curve(model, plan.Sigma_AA, args.taus, cfg)
    print(SyncArtifact.from_rows("roc.csv", ROC_HEADER, roc_rows(points)).save_in(args.output_dir))


def _config(args: argparse.Namespace) -> ExperimentConfig:
    options: dict[str, Any] = {
        "cases": tuple(args.cases or ("ieee9",)),
        "rho": args.rho,
        "snr_db": args.snr_db,
        "lambdas": args.lambdas,
        "ks": args.ks,
        "k_fractions": args.k_fractions,
        "algorithm": args.algorithm,
        "n_samples": args.n_samples,
        "seed": args.seed,
        "output_dir": str(args.output_dir),
        "project_each_epoch": args.project_each_epoch,
    }
    if getattr(args, "tau", None) is not None:
        options["tau"] = args.tau
    return ExperimentConfig(**options)


async def _sweep_async(config: ExperimentConfig, which: str) -> str:
    runner = AsyncExperimentRunner(config)
    artifact: AsyncArtifact = await (runner.sweep_k() if which == "sweep-k" else runner.sweep_lambda())
    return str(await artifact.save_in(config.output_dir))


def _cmd_sweep(args: argparse.Namespace) -> None:
    config = _config(args)
    if args.concurrent:
        print(asyncio.run(_sweep_async(config, args.command)))
        return
    runner = ExperimentRunner(config)
    artifact = runner.sweep_k() if args.command == "sweep-k" else runner.sweep_lambda()
    print(artifact.save_in(config.output_dir))


_COMMANDS = {
    "build": _cmd_build,
    "attack": _cmd_attack,
    "metrics": _cmd_metrics,
    "detect": _cmd_detect,
    "roc": _cmd_roc,
    "sweep-k": _cmd_sweep,
    "sweep-lambda": _cmd_sweep,
}


def cli_main(argv: Sequence[str] | None = None) -> int:
    """Run one subcommand and return its exit code.

    .. versionadded:: 0.1.0

    Parameters
    ----------
    argv: Optional[Sequence[:class:`str`]]
        The arguments without the program name; ``sys.argv[1:]`` when ``None``.

    Returns
    -------
    :class:`int`
        0 on success, 1 when the input is invalid, 2 on a numerical failure.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:
        # --help and --version
        return int(exc.code or 0)
    setup_logging(args.log_level)
    try:
        _COMMANDS[args.command](args)
    except ValueError as exc:
        # ValidationError and the attrs range validators of the config types
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except StealthException as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def main() -> None:
    sys.exit(cli_main())
