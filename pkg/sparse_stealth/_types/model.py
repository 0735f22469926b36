from __future__ import annotations
from typing import Any, TypedDict

import attrs
import numpy as np
from numpy.typing import NDArray
from scipy import linalg

from ..errors import ValidationError
from .grid import Measurement

__all__: tuple[str, ...] = (
    "RawMeasurement",
    "RawObservationModel",
    "ObservationModel",
    "frozen_array",
)


def frozen_array(value: Any) -> NDArray[np.float64]:
    """Copy ``value`` into a read-only float64 array."""
    array = np.array(value, dtype=np.float64, copy=True)
    array.setflags(write=False)
    return array


class RawMeasurement(TypedDict):
    kind: str
    index: int
    label: str


class RawObservationModel(TypedDict, total=False):
    """Represents the JSON payload of a saved :class:`ObservationModel`.

    .. versionadded:: 0.1.0

    Attributes
    ----------
    name: :class:`str`
        The case name the model was built from.
    n: :class:`int`
        State dimension.
    m: :class:`int`
        Observation dimension.
    H: List[List[:class:`float`]]
        The Jacobian, row-major.
    sigma2: :class:`float`
        Noise variance.
    rho: :class:`float`
        Toeplitz decay of the state covariance.
    snr_db: :class:`float`
        The SNR the noise variance was fixed from.
    measurements: List[:class:`RawMeasurement`]
        Optional row labels.
    """
    name: str
    n: int
    m: int
    H: list[list[float]]
    sigma2: float
    rho: float
    snr_db: float
    measurements: list[RawMeasurement]


def _signal_cov(self: ObservationModel) -> NDArray[np.float64]:
    return frozen_array(self.H @ self.Sigma_XX @ self.H.T)


def _observation_cov(self: ObservationModel) -> NDArray[np.float64]:
    return frozen_array(self.signal_cov + self.sigma2 * np.eye(self.m))


def _observation_cov_inv(self: ObservationModel) -> NDArray[np.float64]:
    factor = linalg.cho_factor(self.Sigma_YY, lower=True)
    inverse = linalg.cho_solve(factor, np.eye(self.m))
    return frozen_array((inverse + inverse.T) / 2)


def _observation_logdet(self: ObservationModel) -> float:
    lower, _ = linalg.cho_factor(self.Sigma_YY, lower=True)
    return float(2.0 * np.sum(np.log(np.diag(lower))))


@attrs.define(kw_only=True, frozen=True, repr=False, eq=False)
class ObservationModel:
    """Represents the linearized Gaussian observation model ``Y = HX + Z``.

    The derived covariances are computed once at construction time and
    stored as read-only arrays, so a model can be shared between workers.

    .. versionadded:: 0.1.0

    Attributes
    ----------
    H: :class:`numpy.ndarray`
        The ``m x n`` Jacobian.
    Sigma_XX: :class:`numpy.ndarray`
        The ``n x n`` state covariance.
    sigma2: :class:`float`
        The noise variance, strictly positive.
    name: :class:`str`
        The case name.
    rho: Optional[:class:`float`]
        Decay of the Toeplitz state covariance when built from one.
    snr_db: Optional[:class:`float`]
        The SNR the noise variance was derived from.
    measurements: Tuple[:class:`Measurement`, ...]
        Labels of the rows of ``H``; may be empty.
    signal_cov: :class:`numpy.ndarray`
        ``H Sigma_XX H^T``.
    Sigma_YY: :class:`numpy.ndarray`
        ``H Sigma_XX H^T + sigma2 I``.
    Sigma_YY_inv: :class:`numpy.ndarray`
        The inverse of :attr:`Sigma_YY`.
    logdet_Sigma_YY: :class:`float`
        ``log |Sigma_YY|``.
    """
    H: NDArray[np.float64] = attrs.field(converter=frozen_array)
    Sigma_XX: NDArray[np.float64] = attrs.field(converter=frozen_array)
    sigma2: float = attrs.field(converter=float)
    name: str = "model"
    rho: float | None = None
    snr_db: float | None = None
    measurements: tuple[Measurement, ...] = attrs.field(default=(), converter=tuple)
    signal_cov: NDArray[np.float64] = attrs.field(init=False, default=attrs.Factory(_signal_cov, takes_self=True))
    Sigma_YY: NDArray[np.float64] = attrs.field(init=False, default=attrs.Factory(_observation_cov, takes_self=True))
    Sigma_YY_inv: NDArray[np.float64] = attrs.field(init=False, default=attrs.Factory(_observation_cov_inv, takes_self=True))
    logdet_Sigma_YY: float = attrs.field(init=False, default=attrs.Factory(_observation_logdet, takes_self=True))

    @H.validator
    def _check_H(self, attribute: attrs.Attribute[Any], value: NDArray[np.float64]) -> None:
        if value.ndim != 2:
            raise ValidationError(f"'H' must be a matrix, got shape {value.shape}")

    @Sigma_XX.validator
    def _check_Sigma_XX(self, attribute: attrs.Attribute[Any], value: NDArray[np.float64]) -> None:
        n = self.H.shape[1]
        if value.shape != (n, n):
            raise ValidationError(f"'Sigma_XX' must be {n}x{n}, got shape {value.shape}")

    @sigma2.validator
    def _check_sigma2(self, attribute: attrs.Attribute[Any], value: float) -> None:
        if not value > 0:
            raise ValidationError(f"'sigma2' must be positive, got {value!r}")

    @property
    def m(self) -> int:
        """:class:`int`: The observation dimension."""
        return int(self.H.shape[0])

    @property
    def n(self) -> int:
        """:class:`int`: The state dimension."""
        return int(self.H.shape[1])

    def __repr__(self) -> str:
        return f"ObservationModel(name={self.name!r}, m={self.m}, n={self.n}, sigma2={self.sigma2!r})"
