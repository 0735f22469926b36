"""Monte-Carlo simulation of the likelihood ratio test against an attack.

The defender tests ``H0: Y ~ N(0, Syy)`` against ``H1: Y ~ N(0, Syy + Sigma_AA)``
and flags an attack when ``L(y) >= tau``. The test statistic is a
generalized chi-square, so both error probabilities are estimated by
sampling. Draws come in batches seeded by ``SeedSequence([seed, batch])``
and both hypotheses share the same standard normal draws, which makes
estimates at different ``tau`` and ``Sigma_AA`` directly comparable.
"""
from __future__ import annotations
from typing import Iterable

import logging
import math
import sys

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg

from .errors import InfeasibleCovarianceError, ValidationError
from ._types import DetectionConfig, DetectionEstimate, ObservationModel, RocPoint

__all__: tuple[str, ...] = (
    "log_likelihood_ratio",
    "detection_probability",
    "false_alarm_probability",
    "threshold_for_false_alarm",
    "roc_curve",
)

_log = logging.getLogger(__name__)

_LOG_FLOAT_MAX = math.log(sys.float_info.max)


class _Gaussian:
    # inverse, log-det and square root from one factorization; equal inputs
    # give bit-identical outputs
    def __init__(self, covariance: NDArray[np.float64], argument: str) -> None:
        try:
            self.factor = linalg.cho_factor(covariance, lower=True)
        except (linalg.LinAlgError, ValueError):
            raise InfeasibleCovarianceError(argument) from None
        lower = self.factor[0]
        self.root = np.tril(lower)
        self.logdet = float(2.0 * np.sum(np.log(np.diag(lower))))
        inverse = linalg.cho_solve(self.factor, np.eye(covariance.shape[0]))
        self.inverse = (inverse + inverse.T) / 2


class _LikelihoodRatio:
    def __init__(self, model: ObservationModel, Sigma_AA: ArrayLike) -> None:
        S = np.asarray(Sigma_AA, dtype=np.float64)
        if S.shape != (model.m, model.m):
            raise ValidationError(f"'Sigma_AA' must be {model.m}x{model.m}, got shape {S.shape}")
        self.m = model.m
        self.clean = _Gaussian(np.array(model.Sigma_YY), "Sigma_YY")
        self.attacked = _Gaussian(model.Sigma_YY + S, "Sigma_YY + Sigma_AA")
        self.quadratic = 0.5 * (self.clean.inverse - self.attacked.inverse)
        self.offset = 0.5 * (self.clean.logdet - self.attacked.logdet)

    def __call__(self, y: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.sum((y @ self.quadratic) * y, axis=1) + self.offset

    def samples(self, cfg: DetectionConfig, *, attacked: bool) -> NDArray[np.float64]:
        """``log L`` of ``cfg.n_samples`` draws under H1 (``attacked``) or H0."""
        root = self.attacked.root if attacked else self.clean.root
        out = np.empty(cfg.n_samples)
        for batch, start in enumerate(range(0, cfg.n_samples, cfg.batch_size)):
            size = min(cfg.batch_size, cfg.n_samples - start)
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, batch]))
            z = rng.standard_normal((size, self.m))
            out[start:start + size] = self(z @ root.T)
        return out


def _count_at(llr: NDArray[np.float64], tau: float) -> DetectionEstimate:
    if not tau > 0:
        raise ValidationError(f"'tau' must be positive, got {tau!r}")
    hits = int(np.count_nonzero(llr >= math.log(tau)))
    return DetectionEstimate.from_count(hits, llr.size)


def _threshold_above(cut: float) -> float:
    # the smallest float tau with log(tau) > cut, or inf past the float range
    if cut >= _LOG_FLOAT_MAX:
        return math.inf
    tau = max(math.exp(cut), math.ulp(0.0))
    while math.isfinite(tau) and math.log(tau) <= cut:
        tau = math.nextafter(tau, math.inf)
    return tau


def log_likelihood_ratio(model: ObservationModel, Sigma_AA: ArrayLike, y: ArrayLike) -> float | NDArray[np.float64]:
    """``log L(y) = y^T (Syy^-1 - SA^-1) y / 2 + (log|Syy| - log|SA|) / 2``.

    ``SA = Syy + Sigma_AA`` is the covariance of the attacked observations.

    .. versionadded:: 0.1.0

    Parameters
    ----------
    model: :class:`ObservationModel`
        The observation model.
    Sigma_AA: :class:`numpy.ndarray`
        The attack covariance.
    y: :class:`numpy.ndarray`
        One observation of length ``m``, or a stack of them, one per row.

    Raises
    ------
    InfeasibleCovarianceError
        ``Syy + Sigma_AA`` is not positive definite.

    Returns
    -------
    Union[:class:`float`, :class:`numpy.ndarray`]
        The log ratio, one value per row for stacked input.
    """
    ratio = _LikelihoodRatio(model, Sigma_AA)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        return float(ratio(y[np.newaxis, :])[0])
    return ratio(y)


def detection_probability(model: ObservationModel, Sigma_AA: ArrayLike, cfg: DetectionConfig) -> DetectionEstimate:
    """Estimate ``P[L(Y) >= tau]`` with ``Y`` drawn from the attacked law.

    .. versionadded:: 0.1.0

    Returns
    -------
    :class:`DetectionEstimate`
        The estimate and its standard error ``sqrt(p (1 - p) / n)``; unpacks
        to ``(estimate, std_error)``.
    """
    ratio = _LikelihoodRatio(model, Sigma_AA)
    estimate = _count_at(ratio.samples(cfg, attacked=True), cfg.tau)
    _log.debug("detection probability at tau=%g: %.6f +- %.6f", cfg.tau, *estimate)
    return estimate


def false_alarm_probability(model: ObservationModel, Sigma_AA: ArrayLike, cfg: DetectionConfig) -> DetectionEstimate:
    """Estimate ``P[L(Y) >= tau]`` with ``Y`` drawn from the clean law.

    .. versionadded:: 0.1.0
    """
    ratio = _LikelihoodRatio(model, Sigma_AA)
    return _count_at(ratio.samples(cfg, attacked=False), cfg.tau)


def threshold_for_false_alarm(model: ObservationModel, Sigma_AA: ArrayLike, alpha_max: float, cfg: DetectionConfig) -> float:
    """The smallest threshold whose empirical Type-I error is at most ``alpha_max``.

    ``cfg.tau`` is ignored. The threshold sits just above the
    ``n - floor(alpha_max n)``-th smallest ``log L`` drawn under the clean law.
    A cut past the float range gives ``math.inf``, which flags nothing.

    .. versionadded:: 0.1.0

    Raises
    ------
    ValidationError
        ``alpha_max`` is not in ``(0, 1)``.
    """
    if not 0.0 < alpha_max < 1.0:
        raise ValidationError(f"'alpha_max' must lie in (0, 1), got {alpha_max!r}")
    llr = np.sort(_LikelihoodRatio(model, Sigma_AA).samples(cfg, attacked=False))
    allowed = math.floor(alpha_max * llr.size)
    return _threshold_above(float(llr[llr.size - allowed - 1]))


def roc_curve(model: ObservationModel, Sigma_AA: ArrayLike, taus: Iterable[float], cfg: DetectionConfig) -> list[RocPoint]:
    """Operating points of the test over a threshold grid.

    Every threshold is evaluated on the same draws, so the curve is monotone
    in ``tau``. ``cfg.tau`` is ignored.

    .. versionadded:: 0.1.0

    Returns
    -------
    List[:class:`RocPoint`]
        One point per threshold, in the order given.
    """
    ratio = _LikelihoodRatio(model, Sigma_AA)
    clean = ratio.samples(cfg, attacked=False)
    attacked = ratio.samples(cfg, attacked=True)
    return [
        RocPoint(tau=float(tau), false_alarm=_count_at(clean, tau), detect_prob=_count_at(attacked, tau))
        for tau in taus
    ]
