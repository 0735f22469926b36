"""Gaussian log-det machinery shared by both attack constructions.

All quantities are in nats. Log-determinants are taken from Cholesky
factors; a failed factorization means the covariance handed in is
infeasible and surfaces as :class:`InfeasibleCovarianceError`.
"""
from __future__ import annotations

import logging
import math

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg

from .errors import (
    AsymmetricMatrixError,
    CorruptedCovarianceError,
    InfeasibleCovarianceError,
    ValidationError,
)
from ._types import MetricsRecord, ObservationModel

__all__: tuple[str, ...] = (
    "check_lambda",
    "logdet",
    "cost_J",
    "cost_diff_f",
    "cost_gradient",
    "mutual_information",
    "kl_divergence",
    "unconstrained_optimum",
    "full_support_optimum",
    "stationary_variance",
    "sample_attack",
    "sparsity_penalty",
    "evaluate_metrics",
    "clip_psd",
    "check_attack_covariance",
    "PSD_TOLERANCE",
    "SAMPLER_TOLERANCE",
)

_log = logging.getLogger(__name__)

PSD_TOLERANCE: float = 1e-10
SAMPLER_TOLERANCE: float = 1e-8


def check_lambda(lam: float) -> float:
    """Reject weightings below one, where the cost stops being convex.

    Raises
    ------
    ValidationError
        ``lam < 1`` or not a number.
    """
    lam = float(lam)
    if not lam >= 1.0:
        raise ValidationError(f"'lambda' must be >= 1, got {lam!r}")
    return lam


def logdet(matrix: ArrayLike, argument: str = "matrix") -> float:
    """``log |matrix|`` of a symmetric positive definite matrix.

    Raises
    ------
    InfeasibleCovarianceError
        The Cholesky factorization failed.
    """
    try:
        lower, _ = linalg.cho_factor(matrix, lower=True)
    except (linalg.LinAlgError, ValueError):
        raise InfeasibleCovarianceError(argument) from None
    diagonal = np.diag(lower)
    if not np.all(np.isfinite(diagonal)):
        raise InfeasibleCovarianceError(argument)
    return float(2.0 * np.sum(np.log(diagonal)))


def _noise_plus(model: ObservationModel, Sigma: NDArray[np.float64]) -> NDArray[np.float64]:
    return model.sigma2 * np.eye(model.m) + Sigma


def _as_matrix(model: ObservationModel, Sigma: ArrayLike, name: str) -> NDArray[np.float64]:
    matrix = np.asarray(Sigma, dtype=np.float64)
    if matrix.shape != (model.m, model.m):
        raise ValidationError(f"'{name}' must be {model.m}x{model.m}, got shape {matrix.shape}")
    return matrix


def cost_J(model: ObservationModel, Sigma_AA: ArrayLike, lam: float) -> float:
    """The attack cost ``(1-lam) log|Syy+S| - log|s2 I+S| + lam tr(Syy^-1 S)``.

    The cost equals ``2 (I(X;Y_A) + lam D(P_YA || P_Y)) - lam log|Syy|``.

    .. versionadded:: 0.1.0

    Parameters
    ----------
    model: :class:`ObservationModel`
        The observation model.
    Sigma_AA: :class:`numpy.ndarray`
        The ``m x m`` attack covariance.
    lam: :class:`float`
        The weighting, ``lam >= 1``.

    Raises
    ------
    ValidationError
        ``lam < 1`` or a shape mismatch.
    InfeasibleCovarianceError
        ``Syy + S`` or ``s2 I + S`` is not positive definite.
    """
    lam = check_lambda(lam)
    S = _as_matrix(model, Sigma_AA, "Sigma_AA")
    return (
        (1.0 - lam) * logdet(model.Sigma_YY + S, "Sigma_YY + Sigma_AA")
        - logdet(_noise_plus(model, S), "sigma2 I + Sigma_AA")
        + lam * float(np.sum(model.Sigma_YY_inv * S))
    )


def cost_diff_f(model: ObservationModel, Sigma1: ArrayLike, Delta: ArrayLike, lam: float) -> float:
    """The cost change ``f`` with ``J(Sigma1 + Delta) = J(Sigma1) + f(Sigma1, Delta)``.

    Each ``log|I + M^-1 Delta|`` term is evaluated as ``log|M + Delta| - log|M|``
    from two symmetric factorizations.

    .. versionadded:: 0.1.0

    Raises
    ------
    InfeasibleCovarianceError
        One of the four log-det arguments is not positive definite.
    """
    lam = check_lambda(lam)
    S1 = _as_matrix(model, Sigma1, "Sigma1")
    D = _as_matrix(model, Delta, "Delta")
    if not np.any(D):
        return 0.0
    signal_term = (
        logdet(model.Sigma_YY + S1 + D, "Sigma_YY + Sigma1 + Delta")
        - logdet(model.Sigma_YY + S1, "Sigma_YY + Sigma1")
    )
    noise_term = (
        logdet(_noise_plus(model, S1) + D, "sigma2 I + Sigma1 + Delta")
        - logdet(_noise_plus(model, S1), "sigma2 I + Sigma1")
    )
    return (1.0 - lam) * signal_term - noise_term + lam * float(np.sum(model.Sigma_YY_inv * D))


def cost_gradient(model: ObservationModel, Sigma_AA: ArrayLike, lam: float) -> NDArray[np.float64]:
    """The symmetric matrix ``G`` with ``dJ = tr(G dS)``.

    .. versionadded:: 0.1.0
    """
    lam = check_lambda(lam)
    S = _as_matrix(model, Sigma_AA, "Sigma_AA")
    eye = np.eye(model.m)
    try:
        signal_inv = linalg.cho_solve(linalg.cho_factor(model.Sigma_YY + S, lower=True), eye)
    except linalg.LinAlgError:
        raise InfeasibleCovarianceError("Sigma_YY + Sigma_AA") from None
    try:
        noise_inv = linalg.cho_solve(linalg.cho_factor(_noise_plus(model, S), lower=True), eye)
    except linalg.LinAlgError:
        raise InfeasibleCovarianceError("sigma2 I + Sigma_AA") from None
    G = (1.0 - lam) * signal_inv - noise_inv + lam * model.Sigma_YY_inv
    return (G + G.T) / 2


def mutual_information(model: ObservationModel, Sigma_AA: ArrayLike) -> float:
    """``I(X; Y_A) = (log|Syy + S| - log|s2 I + S|) / 2`` in nats.

    .. versionadded:: 0.1.0
    """
    S = _as_matrix(model, Sigma_AA, "Sigma_AA")
    mi = 0.5 * (
        logdet(model.Sigma_YY + S, "Sigma_YY + Sigma_AA")
        - logdet(_noise_plus(model, S), "sigma2 I + Sigma_AA")
    )
    return max(mi, 0.0)


def kl_divergence(model: ObservationModel, Sigma_AA: ArrayLike) -> float:
    """``D(N(0, Syy + S) || N(0, Syy)) = (tr(Syy^-1 S) - log|I + Syy^-1 S|) / 2`` in nats.

    .. versionadded:: 0.1.0
    """
    S = _as_matrix(model, Sigma_AA, "Sigma_AA")
    if not np.any(S):
        return 0.0
    kl = 0.5 * (
        float(np.sum(model.Sigma_YY_inv * S))
        - logdet(model.Sigma_YY + S, "Sigma_YY + Sigma_AA")
        + model.logdet_Sigma_YY
    )
    return max(kl, 0.0)


def unconstrained_optimum(model: ObservationModel, lam: float) -> NDArray[np.float64]:
    """The full support attack covariance ``lam^(-1/2) H Sxx H^T``.

    This is the minimizer of ``J`` in the noiseless limit. With ``sigma2 > 0``
    the exact minimizer is :func:`full_support_optimum`.

    .. versionadded:: 0.1.0
    """
    lam = check_lambda(lam)
    return lam ** -0.5 * np.array(model.signal_cov)


def clip_psd(Sigma: ArrayLike, tolerance: float = PSD_TOLERANCE) -> NDArray[np.float64]:
    """Accept a symmetric matrix whose negative eigenvalues are round-off and clip them.

    Eigenvalues down to ``-tolerance * max(largest, 1)`` are set to zero.

    Raises
    ------
    CorruptedCovarianceError
        An eigenvalue lies below the tolerance.
    """
    S = np.asarray(Sigma, dtype=np.float64)
    if not np.any(S):
        return np.zeros_like(S)
    w, V = linalg.eigh(S)
    floor = -tolerance * max(float(w[-1]), 1.0)
    if w[0] < floor:
        raise CorruptedCovarianceError(float(w[0]))
    if w[0] >= 0:
        return S.copy()
    return (V * np.clip(w, 0.0, None)) @ V.T


def check_attack_covariance(Sigma_AA: ArrayLike, support: tuple[int, ...] | list[int]) -> None:
    """Validate the structural invariants of an attack covariance.

    Raises
    ------
    AsymmetricMatrixError
        The matrix is not symmetric.
    ValidationError
        A row or column outside ``support`` is nonzero, or a support diagonal is negative.
    CorruptedCovarianceError
        The smallest eigenvalue is below the PSD tolerance.
    """
    S = np.asarray(Sigma_AA, dtype=np.float64)
    deviation = float(np.max(np.abs(S - S.T))) if S.size else 0.0
    if deviation > 1e-12:
        raise AsymmetricMatrixError(deviation)
    outside = np.ones(S.shape[0], dtype=bool)
    outside[list(support)] = False
    if np.any(S[outside, :]) or np.any(S[:, outside]):
        raise ValidationError("attack covariance has nonzero entries outside its support")
    if np.any(np.diag(S)[list(support)] < 0):
        raise ValidationError("attack covariance has a negative variance on its support")
    clip_psd(S)


def sample_attack(Sigma_AA: ArrayLike, count: int, seed: int | np.random.SeedSequence | None) -> NDArray[np.float64]:
    """Draw zero mean Gaussian attack realizations.

    The square root comes from an eigendecomposition of the support block,
    so singular covariances are fine and columns outside the support are
    exactly zero.

    .. versionadded:: 0.1.0

    Parameters
    ----------
    Sigma_AA: :class:`numpy.ndarray`
        The ``m x m`` covariance.
    count: :class:`int`
        Number of realizations.
    seed: Union[:class:`int`, :class:`numpy.random.SeedSequence`]
        Seed of the generator; equal seeds give equal draws.

    Raises
    ------
    CorruptedCovarianceError
        An eigenvalue is below ``-1e-8``.

    Returns
    -------
    :class:`numpy.ndarray`
        A ``count x m`` array, one realization per row.
    """
    S = np.asarray(Sigma_AA, dtype=np.float64)
    m = S.shape[0]
    samples = np.zeros((count, m))
    active = np.flatnonzero(np.any(S != 0, axis=1))
    if active.size == 0:
        return samples
    w, V = linalg.eigh(S[np.ix_(active, active)])
    if w[0] < -SAMPLER_TOLERANCE:
        raise CorruptedCovarianceError(float(w[0]))
    root = V * np.sqrt(np.clip(w, 0.0, None))
    rng = np.random.default_rng(seed)
    samples[:, active] = rng.standard_normal((count, active.size)) @ root.T
    return samples


def sparsity_penalty(J_k: float, J_m: float) -> float:
    """The relative cost excess ``(J_k - J_m) / J_m`` of a k-sparse attack.

    The sign follows the definition as written; with the usual negative
    ``J_m`` a sparse attack that costs more gets a negative penalty.

    .. versionadded:: 0.1.0

    Raises
    ------
    ValidationError
        ``|J_m| < 1e-12``.
    """
    if abs(J_m) < 1e-12:
        raise ValidationError(f"full support cost {J_m!r} is too close to zero to normalize by")
    return (J_k - J_m) / J_m


def evaluate_metrics(model: ObservationModel, Sigma_AA: ArrayLike, lam: float, J_full: float | None = None) -> MetricsRecord:
    """Cost, mutual information and KL divergence of one attack covariance.

    .. versionadded:: 0.1.0

    Parameters
    ----------
    model: :class:`ObservationModel`
        The observation model.
    Sigma_AA: :class:`numpy.ndarray`
        The attack covariance.
    lam: :class:`float`
        The weighting, ``lam >= 1``.
    J_full: Optional[:class:`float`]
        Cost of the full support construction; when given the record
        carries the sparsity penalty.

    Returns
    -------
    :class:`MetricsRecord`
    """
    J = cost_J(model, Sigma_AA, lam)
    eta = None if J_full is None else sparsity_penalty(J, J_full)
    return MetricsRecord(J=J, mi=mutual_information(model, Sigma_AA), kl=kl_divergence(model, Sigma_AA), eta=eta)


def stationary_variance(alpha: float, beta: float, sigma2: float, lam: float) -> float | None:
    """Positive root of the stationarity quadratic of the one-sensor cost change.

    ``beta alpha v^2 + (beta - alpha + beta alpha sigma2) v + beta sigma2
    - alpha sigma2 + (alpha sigma2 - 1) / lam = 0``, or ``None`` when the
    constant term is not negative.
    Arguments are not validated; see :func:`optimal_variance`.
    """
    a = beta * alpha
    b = beta - alpha + beta * alpha * sigma2
    c = beta * sigma2 - alpha * sigma2 + (alpha * sigma2 - 1.0) / lam
    # c has the sign of g'(0)
    if c >= 0:
        return None
    # a > 0 > c, so the roots have opposite signs; this form of the positive
    # root avoids cancellation when b > 0
    v = 2.0 * c / (-b - math.sqrt(b * b - 4.0 * a * c))
    return v if v > 0 else None


def full_support_optimum(model: ObservationModel, lam: float) -> NDArray[np.float64]:
    """The minimizer of ``J`` over all positive semidefinite attack covariances.

    ``Syy``, ``sigma2 I`` and the minimizer share the eigenvectors of
    ``H Sxx H^T``, so the problem splits into one scalar problem per
    eigenvalue ``p`` with ``alpha = beta = 1 / (p + sigma2)``. For
    ``sigma2 -> 0`` the result tends to :func:`unconstrained_optimum`; with
    noise it is strictly better, and its cost is the lower bound of every
    sparse construction.

    .. versionadded:: 0.1.0
    """
    lam = check_lambda(lam)
    P = np.asarray(model.signal_cov)
    w, V = linalg.eigh((P + P.T) / 2)
    variances = np.zeros_like(w)
    for i, p in enumerate(np.clip(w, 0.0, None)):
        resolvent = 1.0 / (p + model.sigma2)
        v = stationary_variance(resolvent, resolvent, model.sigma2, lam)
        variances[i] = 0.0 if v is None else v
    optimum = (V * variances) @ V.T
    return (optimum + optimum.T) / 2
