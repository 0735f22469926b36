"""Greedy construction of k-sparse attacks with independent entries.

Each epoch adds one sensor ``j`` with variance ``v`` to a diagonal attack
covariance. For a fixed candidate the cost change is the scalar convex
function

    g(v) = (1 - lam) log(1 + alpha_j v) - log(1 + v / sigma2) + lam beta_j v

where ``alpha_j`` and ``beta_j`` are the ``(j, j)`` entries of
``(Syy + Sigma)^-1`` and ``Syy^-1``. Its minimizer has a closed form.
"""
from __future__ import annotations
from typing import Iterable

import logging
import math

import numpy as np
from numpy.typing import NDArray
from scipy import linalg

from .enums import Algorithm
from .errors import InfeasibleCovarianceError, ValidationError
from .gaussian_core import check_lambda, cost_J, stationary_variance
from ._types import AttackPlan, EpochRecord, GreedyTrace, ObservationModel

__all__: tuple[str, ...] = (
    "alpha_beta",
    "scalar_cost",
    "optimal_variance",
    "greedy_independent",
    "check_sparsity",
)

_log = logging.getLogger(__name__)


def check_sparsity(k: int, m: int) -> int:
    """Reject sparsities outside ``[1, m]``.

    Raises
    ------
    ValidationError
        ``k < 1`` or ``k > m``.
    """
    if isinstance(k, bool) or int(k) != k:
        raise ValidationError(f"'k' must be an integer, got {k!r}")
    k = int(k)
    if not 1 <= k <= m:
        raise ValidationError(f"'k' must lie in [1, {m}], got {k}")
    return k


def _resolvent_diagonal(model: ObservationModel, Sigma_prev: NDArray[np.float64]) -> NDArray[np.float64]:
    try:
        factor = linalg.cho_factor(model.Sigma_YY + Sigma_prev, lower=True)
    except linalg.LinAlgError:
        raise InfeasibleCovarianceError("Sigma_YY + Sigma_prev") from None
    return np.diag(linalg.cho_solve(factor, np.eye(model.m)))


def alpha_beta(model: ObservationModel, Sigma_prev: NDArray[np.float64], j: int) -> tuple[float, float]:
    """The ``(j, j)`` entries of ``(Syy + Sigma_prev)^-1`` and ``Syy^-1``.

    .. versionadded:: 0.1.0

    Raises
    ------
    ValidationError
        ``j`` already carries attack variance.
    """
    Sigma_prev = np.asarray(Sigma_prev, dtype=np.float64)
    if Sigma_prev[j, j] != 0:
        raise ValidationError(f"observation {j} is already in the support")
    alpha = float(_resolvent_diagonal(model, Sigma_prev)[j])
    beta = float(model.Sigma_YY_inv[j, j])
    return alpha, beta


def scalar_cost(v: float, alpha: float, beta: float, sigma2: float, lam: float) -> float:
    """``g(v)``, the cost change of adding variance ``v`` at one sensor."""
    return (1.0 - lam) * math.log1p(alpha * v) - math.log1p(v / sigma2) + lam * beta * v


def optimal_variance(alpha: float, beta: float, sigma2: float, lam: float) -> float | None:
    """The minimizer ``v > 0`` of the scalar cost change, or ``None``.

    ``g`` is strictly convex for ``lam >= 1``, so a positive minimizer
    exists exactly when ``g'(0) < 0``. It is the positive root of

        beta alpha v^2 + (beta - alpha + beta alpha sigma2) v
            + beta sigma2 - alpha sigma2 + (alpha sigma2 - 1) / lam = 0,

    obtained by clearing the denominators of ``g'(v) = 0``.

    .. versionadded:: 0.1.0

    Returns
    -------
    Optional[:class:`float`]
        The variance, or ``None`` when the sensor cannot lower the cost.
    """
    lam = check_lambda(lam)
    if not (alpha > 0 and beta > 0 and sigma2 > 0):
        raise ValidationError("'alpha', 'beta' and 'sigma2' must be positive")
    return stationary_variance(alpha, beta, sigma2, lam)


def _score_candidates(
    model: ObservationModel,
    Sigma_prev: NDArray[np.float64],
    candidates: Iterable[int],
    lam: float,
) -> dict[int, tuple[float, float]]:
    alphas = _resolvent_diagonal(model, Sigma_prev)
    betas = np.diag(model.Sigma_YY_inv)
    scores: dict[int, tuple[float, float]] = {}
    for j in candidates:
        alpha, beta = float(alphas[j]), float(betas[j])
        v = optimal_variance(alpha, beta, model.sigma2, lam)
        if v is None:
            scores[j] = (0.0, 0.0)
        else:
            scores[j] = (v, scalar_cost(v, alpha, beta, model.sigma2, lam))
    return scores


def greedy_independent(model: ObservationModel, k: int, lam: float) -> tuple[AttackPlan, GreedyTrace]:
    """Build a k-sparse attack with a diagonal covariance, one sensor per epoch.

    Every epoch scores all unselected sensors with the closed form variance
    and its cost change and keeps the best one (lowest index on ties). When
    no remaining sensor lowers the cost the construction stops early and the
    returned plan and trace are flagged as a shortfall.

    .. versionadded:: 0.1.0

    Parameters
    ----------
    model: :class:`ObservationModel`
        The observation model.
    k: :class:`int`
        Target number of attacked sensors, ``1 <= k <= m``.
    lam: :class:`float`
        The weighting, ``lam >= 1``.

    Raises
    ------
    ValidationError
        ``k`` or ``lam`` is out of range.

    Returns
    -------
    Tuple[:class:`AttackPlan`, :class:`GreedyTrace`]
        The attack and the per epoch history.
    """
    lam = check_lambda(lam)
    k = check_sparsity(k, model.m)
    Sigma = np.zeros((model.m, model.m))
    cost = cost_J(model, Sigma, lam)
    trace = GreedyTrace(m=model.m, initial_cost=cost)
    selected: list[int] = []

    for epoch in range(1, k + 1):
        candidates = [j for j in range(model.m) if j not in selected]
        scores = _score_candidates(model, Sigma, candidates, lam)
        # min() keeps the first of equal scores, i.e. the lowest index
        best = min(candidates, key=lambda j: scores[j][1])
        v_star, change = scores[best]
        if v_star == 0.0 or change >= 0.0:
            _log.info("independent construction stopped after %d of %d epochs: no improving sensor", epoch - 1, k)
            trace.shortfall = True
            break
        Sigma = Sigma.copy()
        Sigma[best, best] = v_star
        cost = cost_J(model, Sigma, lam)
        selected.append(best)
        trace.epochs.append(EpochRecord(
            epoch=epoch,
            selected=best,
            update=v_star,
            cost=cost,
            scores={j: scores[j][1] for j in candidates},
            state=Sigma,
        ))
        _log.debug("epoch %d: sensor %d, v=%.6g, J=%.10g", epoch, best, v_star, cost)

    plan = AttackPlan(support=selected, Sigma_AA=Sigma, lam=lam, k=k, algorithm=Algorithm.independent)
    return plan, trace
