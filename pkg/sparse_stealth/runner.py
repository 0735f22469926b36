"""Experiment sweeps over sparsity and weighting, run synchronously or in worker threads."""
from __future__ import annotations
from typing import Any, Callable, Sequence, TYPE_CHECKING

import asyncio
import hashlib
import logging

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from .artifact import AsyncArtifact, SyncArtifact, SWEEP_K_HEADER, SWEEP_LAMBDA_HEADER
from .attack_correlated import SolverMethod, greedy_correlated, psd_project
from .attack_independent import check_sparsity, greedy_independent
from .case_model import assemble_model, load_case, load_case_async
from .detection import detection_probability
from .enums import Algorithm
from .errors import StealthException, ValidationError
from .gaussian_core import check_lambda, cost_J, evaluate_metrics, full_support_optimum
from ._types import AttackPlan, DetectionConfig, ExperimentConfig, GreedyTrace, ObservationModel

if TYPE_CHECKING:
    from ._http import AsyncCaseHTTPClient


__all__: tuple[str, ...] = (
    "task_seed",
    "construct_attack",
    "prefix_states",
    "fit_log_slope",
    "run_sweep_k",
    "run_sweep_lambda",
    "ExperimentRunner",
    "AsyncExperimentRunner",
)

_log = logging.getLogger(__name__)

Row = dict[str, Any]


def task_seed(seed: int, label: str) -> int:
    """Derive the seed of one task from the base seed and a task label.

    The derivation is the first 8 bytes of ``blake2b("<seed>:<label>")`` read as
    an unsigned big endian integer, so it is stable across processes and
    platforms.

    .. versionadded:: 0.1.0
    """
    digest = hashlib.blake2b(f"{seed}:{label}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def construct_attack(
    model: ObservationModel,
    k: int,
    lam: float,
    algorithm: Algorithm | str = Algorithm.independent,
    *,
    method: SolverMethod = "newton",
    project_each_epoch: bool = False,
) -> tuple[AttackPlan, GreedyTrace]:
    """Run the greedy construction selected by ``algorithm``.

    .. versionadded:: 0.1.0
    """
    algorithm = Algorithm(algorithm)
    if algorithm is Algorithm.independent:
        return greedy_independent(model, k, lam)
    return greedy_correlated(model, k, lam, method=method, project_each_epoch=project_each_epoch)


def prefix_states(
    model: ObservationModel,
    ks: Sequence[int],
    lam: float,
    algorithm: Algorithm | str,
    *,
    project_each_epoch: bool = False,
) -> dict[int, tuple[NDArray[np.float64], bool]]:
    """Attack covariances for several sparsities from a single greedy run.

    The greedy constructions never revisit an epoch, so the covariance a run
    asked for ``k`` returns is the state of a longer run after ``k`` epochs
    (projected, for the correlated construction).

    .. versionadded:: 0.1.0

    Returns
    -------
    Dict[:class:`int`, Tuple[:class:`numpy.ndarray`, :class:`bool`]]
        Maps every ``k`` to its covariance and its shortfall flag.
    """
    algorithm = Algorithm(algorithm)
    for k in ks:
        check_sparsity(k, model.m)
    _, trace = construct_attack(model, max(ks), lam, algorithm, project_each_epoch=project_each_epoch)
    states: dict[int, tuple[NDArray[np.float64], bool]] = {}
    for k in ks:
        state = trace.state_at(k)
        if algorithm is Algorithm.correlated:
            state = psd_project(state)
        states[k] = (state, len(trace.epochs) < k)
    return states


def fit_log_slope(ks: Sequence[float], etas: Sequence[float]) -> tuple[float, float, float]:
    """Least squares line through ``(k, log |eta|)``.

    Points with ``eta == 0`` (the full support point) are dropped.

    .. versionadded:: 0.1.0

    Raises
    ------
    ValidationError
        Fewer than two usable points remain.

    Returns
    -------
    Tuple[:class:`float`, :class:`float`, :class:`float`]
        Slope, intercept and the coefficient of determination ``R^2``.
    """
    x = np.asarray(ks, dtype=np.float64)
    y = np.abs(np.asarray(etas, dtype=np.float64))
    keep = y > 0
    if np.count_nonzero(keep) < 2:
        raise ValidationError("at least two nonzero penalties are needed to fit a slope")
    fit = stats.linregress(x[keep], np.log(y[keep]))
    return float(fit.slope), float(fit.intercept), float(fit.rvalue) ** 2


def _sweep_k_block(config: ExperimentConfig, system: str, model: ObservationModel) -> list[Row]:
    lam = config.lambdas[0]
    ks = config.k_grid(model.m)
    states = prefix_states(model, sorted(set(ks) | {model.m}), lam, config.algorithm, project_each_epoch=config.project_each_epoch)
    J_full = cost_J(model, states[model.m][0], lam)
    J_bound = cost_J(model, full_support_optimum(model, lam), lam)
    rows: list[Row] = []
    for k in ks:
        Sigma, shortfall = states[k]
        metrics = evaluate_metrics(model, Sigma, lam, J_full)
        abs_delta = abs(metrics.J - J_full)
        rows.append({
            "system": system,
            "algorithm": config.algorithm,
            "snr_db": model.snr_db,
            "rho": config.rho,
            "lambda": lam,
            "k": k,
            "m": model.m,
            "J": metrics.J,
            "J_full": J_full,
            "eta": metrics.eta,
            "abs_delta_J": abs_delta,
            "eta_abs": abs_delta / abs(J_full),
            "mi": metrics.mi,
            "kl": metrics.kl,
            "shortfall_flag": shortfall,
            "J_bound": J_bound,
        })
        _log.info("sweep-k %s snr=%s k=%d: J=%.10g eta=%.6g", system, model.snr_db, k, metrics.J, metrics.eta)
    return rows


def _sweep_lambda_block(config: ExperimentConfig, system: str, model: ObservationModel, lam: float) -> list[Row]:
    ks = config.k_grid(model.m)
    states = prefix_states(model, ks, lam, config.algorithm, project_each_epoch=config.project_each_epoch)
    rows: list[Row] = []
    for k in ks:
        Sigma, _ = states[k]
        metrics = evaluate_metrics(model, Sigma, lam)
        # the seed ignores lambda and algorithm: common random numbers across both
        cfg = DetectionConfig(tau=config.tau, n_samples=config.n_samples, seed=task_seed(config.seed, f"{system}:{model.snr_db}:{k}"))
        detect = detection_probability(model, Sigma, cfg)
        rows.append({
            "system": system,
            "algorithm": config.algorithm,
            "snr_db": model.snr_db,
            "rho": config.rho,
            "k": k,
            "lambda": lam,
            "mi": metrics.mi,
            "kl": metrics.kl,
            "tau": cfg.tau,
            "n_samples": cfg.n_samples,
            "seed": cfg.seed,
            "detect_prob": detect.estimate,
            "detect_se": detect.std_error,
        })
        _log.info("sweep-lambda %s snr=%s lambda=%g k=%d: detect=%.6f", system, model.snr_db, lam, k, detect.estimate)
    return rows


def _guarded(label: str, block: Callable[[], list[Row]]) -> list[Row]:
    try:
        return block()
    except StealthException as exc:
        _log.error("sweep point %s failed: %s", label, exc)
        raise


class _BaseRunner:
    """Shared configuration handling of the runners.

    .. note::
        This class is not exported; use :class:`ExperimentRunner` or
        :class:`AsyncExperimentRunner`.
    """
    SWEEP_K_FILENAME: str = "sweep_k.csv"
    SWEEP_LAMBDA_FILENAME: str = "sweep_lambda.csv"

    def __init__(self, config: ExperimentConfig) -> None:
        for lam in config.lambdas:
            check_lambda(lam)
        self._config = config

    @property
    def config(self) -> ExperimentConfig:
        """:class:`ExperimentConfig`: The configuration the runner sweeps over."""
        return self._config

    def _case_order(self) -> dict[str, int]:
        return {case: i for i, case in enumerate(self._config.cases)}

    def _sort_sweep_k(self, rows: list[Row]) -> list[Row]:
        order = self._case_order()
        return sorted(rows, key=lambda r: (order[r["system"]], r["snr_db"], r["lambda"], r["k"]))

    def _sort_sweep_lambda(self, rows: list[Row]) -> list[Row]:
        order = self._case_order()
        return sorted(rows, key=lambda r: (order[r["system"]], r["snr_db"], r["k"], r["lambda"]))

    @staticmethod
    def _cells(header: Sequence[str], rows: list[Row]) -> list[list[Any]]:
        return [[row[column] for column in header] for row in rows]

    def _points(self) -> list[tuple[str, float]]:
        return [(case, snr) for case in self._config.cases for snr in self._config.snr_db]

    def _checked(self, models: list[tuple[str, ObservationModel]]) -> list[tuple[str, ObservationModel]]:
        # the k grid must fit every model before any point runs
        for case, model in models:
            try:
                self._config.k_grid(model.m)
            except ValidationError as exc:
                _log.error("case %s does not fit the k grid: %s", case, exc)
                raise
        return models


class ExperimentRunner(_BaseRunner):
    """Runs the sweeps of an :class:`ExperimentConfig` one point after the other.

    .. versionadded:: 0.1.0

    Parameters
    ----------
    config: :class:`ExperimentConfig`
        What to sweep and where to write.
    """

    def _models(self) -> list[tuple[str, ObservationModel]]:
        cases = {case: load_case(case) for case in dict.fromkeys(self._config.cases)}
        return self._checked([(case, assemble_model(cases[case], self._config.rho, snr)) for case, snr in self._points()])

    def sweep_k_rows(self) -> list[Row]:
        rows: list[Row] = []
        for case, model in self._models():
            rows.extend(_guarded(f"{case}:snr={model.snr_db}", lambda: _sweep_k_block(self._config, case, model)))
        return self._sort_sweep_k(rows)

    def sweep_lambda_rows(self) -> list[Row]:
        rows: list[Row] = []
        for case, model in self._models():
            for lam in self._config.lambdas:
                rows.extend(_guarded(f"{case}:snr={model.snr_db}:lambda={lam}", lambda: _sweep_lambda_block(self._config, case, model, lam)))
        return self._sort_sweep_lambda(rows)

    def sweep_k(self) -> SyncArtifact:
        """Sparsity sweep at the first weighting of the configuration.

        Returns
        -------
        :class:`SyncArtifact`
            ``sweep_k.csv``.
        """
        return SyncArtifact.from_rows(self.SWEEP_K_FILENAME, SWEEP_K_HEADER, self._cells(SWEEP_K_HEADER, self.sweep_k_rows()))

    def sweep_lambda(self) -> SyncArtifact:
        """Weighting sweep with detection probabilities.

        Returns
        -------
        :class:`SyncArtifact`
            ``sweep_lambda.csv``.
        """
        return SyncArtifact.from_rows(
            self.SWEEP_LAMBDA_FILENAME, SWEEP_LAMBDA_HEADER, self._cells(SWEEP_LAMBDA_HEADER, self.sweep_lambda_rows())
        )


class AsyncExperimentRunner(_BaseRunner):
    """Runs sweep points concurrently in worker threads.

    Rows are collected and sorted by configuration key before rendering, so
    the output equals the one of :class:`ExperimentRunner`.

    .. versionadded:: 0.1.0

    Parameters
    ----------
    config: :class:`ExperimentConfig`
        What to sweep and where to write.
    http_client: Optional[:class:`AsyncCaseHTTPClient`]
        Client used for remote cases.
    """
    def __init__(self, config: ExperimentConfig, *, http_client: AsyncCaseHTTPClient | None = None) -> None:
        super().__init__(config)
        self._http = http_client

    async def _models(self) -> list[tuple[str, ObservationModel]]:
        cases = {case: await load_case_async(case, client=self._http) for case in dict.fromkeys(self._config.cases)}
        return self._checked([(case, assemble_model(cases[case], self._config.rho, snr)) for case, snr in self._points()])

    async def sweep_k_rows(self) -> list[Row]:
        models = await self._models()
        blocks = await asyncio.gather(*(
            asyncio.to_thread(_guarded, f"{case}:snr={model.snr_db}", lambda case=case, model=model: _sweep_k_block(self._config, case, model))
            for case, model in models
        ))
        return self._sort_sweep_k([row for block in blocks for row in block])

    async def sweep_lambda_rows(self) -> list[Row]:
        models = await self._models()
        blocks = await asyncio.gather(*(
            asyncio.to_thread(
                _guarded,
                f"{case}:snr={model.snr_db}:lambda={lam}",
                lambda case=case, model=model, lam=lam: _sweep_lambda_block(self._config, case, model, lam),
            )
            for case, model in models
            for lam in self._config.lambdas
        ))
        return self._sort_sweep_lambda([row for block in blocks for row in block])

    async def sweep_k(self) -> AsyncArtifact:
        rows = await self.sweep_k_rows()
        return AsyncArtifact.from_rows(self.SWEEP_K_FILENAME, SWEEP_K_HEADER, self._cells(SWEEP_K_HEADER, rows))

    async def sweep_lambda(self) -> AsyncArtifact:
        rows = await self.sweep_lambda_rows()
        return AsyncArtifact.from_rows(self.SWEEP_LAMBDA_FILENAME, SWEEP_LAMBDA_HEADER, self._cells(SWEEP_LAMBDA_HEADER, rows))


def run_sweep_k(config: ExperimentConfig) -> list[Row]:
    """Cost, penalty and information metrics over the sparsity grid.

    For every case and SNR one greedy run at ``k = m`` provides every grid
    point and the full support normalizer of the penalty.

    .. versionadded:: 0.1.0

    Returns
    -------
    List[Dict[:class:`str`, Any]]
        One row per ``(case, snr, k)`` keyed by the ``sweep_k.csv`` columns.
    """
    return ExperimentRunner(config).sweep_k_rows()


def run_sweep_lambda(config: ExperimentConfig) -> list[Row]:
    """Information metrics and detection probability over the weighting grid.

    .. versionadded:: 0.1.0

    Returns
    -------
    List[Dict[:class:`str`, Any]]
        One row per ``(case, snr, k, lambda)`` keyed by the ``sweep_lambda.csv`` columns.
    """
    return ExperimentRunner(config).sweep_lambda_rows()
