from __future__ import annotations
from typing import Any, TypedDict

import math

import attrs
import numpy as np
from numpy.typing import NDArray
from scipy import linalg

from ..enums import Algorithm
from ..errors import ValidationError
from .model import frozen_array

__all__: tuple[str, ...] = (
    "RawAttackPlan",
    "AttackPlan",
    "CorrelatedUpdate",
    "EpochRecord",
    "GreedyTrace",
)

_SYMMETRY_RTOL = 1e-9
_PSD_RTOL = 1e-8


# The JSON payload of a saved AttackPlan. "sigma_aa" holds the lower triangle
# of the covariance row by row; "lambda" is a keyword, hence the functional form.
RawAttackPlan = TypedDict(
    "RawAttackPlan",
    {
        "support": list[int],
        "sigma_aa": list[float],
        "lambda": float,
        "k": int,
    },
)


def _lower_triangle(matrix: NDArray[np.float64]) -> list[float]:
    rows, cols = np.tril_indices(matrix.shape[0])
    return [float(x) for x in matrix[rows, cols]]


def _from_lower_triangle(values: list[float]) -> NDArray[np.float64]:
    m = int(round((math.isqrt(8 * len(values) + 1) - 1) / 2))
    if m * (m + 1) // 2 != len(values):
        raise ValidationError(f"{len(values)} entries do not form a lower triangle")
    matrix = np.zeros((m, m))
    rows, cols = np.tril_indices(m)
    matrix[rows, cols] = values
    matrix[cols, rows] = values
    return matrix


@attrs.define(kw_only=True, frozen=True, repr=False, eq=False)
class AttackPlan:
    """Represents a sparse Gaussian attack ``A ~ N(0, Sigma_AA)``.

    Construction checks that the covariance is a symmetric positive
    semidefinite ``m x m`` matrix vanishing outside a duplicate free
    support of at most ``k <= m`` indices, and raises
    :exc:`ValidationError` otherwise.

    .. versionadded:: 0.1.0

    Attributes
    ----------
    support: Tuple[:class:`int`, ...]
        The observation indices the attack writes to, in selection order.
    Sigma_AA: :class:`numpy.ndarray`
        The ``m x m`` attack covariance; rows and columns outside
        :attr:`support` are identically zero.
    lam: :class:`float`
        The weighting between disruption and stealth, ``lam >= 1``.
    k: :class:`int`
        The requested sparsity. ``len(support) < k`` only when the greedy
        construction ran out of improving sensors (see :attr:`shortfall`).
    algorithm: Optional[:class:`Algorithm`]
        The construction that produced the plan.
    """
    support: tuple[int, ...] = attrs.field(converter=lambda v: tuple(int(i) for i in v))
    Sigma_AA: NDArray[np.float64] = attrs.field(converter=frozen_array)
    lam: float = attrs.field(converter=float)
    k: int = attrs.field(converter=int)
    algorithm: Algorithm | None = None

    @Sigma_AA.validator
    def _check_Sigma_AA(self, attribute: attrs.Attribute[Any], value: NDArray[np.float64]) -> None:
        if value.ndim != 2 or value.shape[0] != value.shape[1]:
            raise ValidationError(f"'Sigma_AA' must be a square matrix, got shape {value.shape}")
        if not np.all(np.isfinite(value)):
            raise ValidationError("'Sigma_AA' has non-finite entries")
        scale = max(float(np.max(np.abs(value))) if value.size else 0.0, 1.0)
        deviation = float(np.max(np.abs(value - value.T))) if value.size else 0.0
        if deviation > _SYMMETRY_RTOL * scale:
            raise ValidationError(f"'Sigma_AA' is not symmetric (max deviation {deviation:.3e})")
        outside = np.ones(value.shape[0], dtype=bool)
        outside[[i for i in self.support if 0 <= i < value.shape[0]]] = False
        if np.any(value[outside, :]) or np.any(value[:, outside]):
            raise ValidationError("'Sigma_AA' has nonzero entries outside the support")
        if value.size and float(linalg.eigvalsh(value)[0]) < -_PSD_RTOL * scale:
            raise ValidationError("'Sigma_AA' is not positive semidefinite")

    @support.validator
    def _check_support(self, attribute: attrs.Attribute[Any], value: tuple[int, ...]) -> None:
        if len(set(value)) != len(value):
            raise ValidationError(f"support {value!r} repeats an index")
        if self.Sigma_AA.ndim != 2:
            return
        m = self.Sigma_AA.shape[0]
        if any(not 0 <= i < m for i in value):
            raise ValidationError(f"support {value!r} is out of range for m={m}")

    @lam.validator
    def _check_lam(self, attribute: attrs.Attribute[Any], value: float) -> None:
        if not value >= 1.0:
            raise ValidationError(f"'lam' must be at least 1, got {value!r}")

    @k.validator
    def _check_k(self, attribute: attrs.Attribute[Any], value: int) -> None:
        if not 1 <= value <= self.Sigma_AA.shape[0]:
            raise ValidationError(f"'k' must lie in [1, {self.Sigma_AA.shape[0]}], got {value}")
        if len(self.support) > value:
            raise ValidationError(f"support of size {len(self.support)} exceeds k={value}")

    @property
    def m(self) -> int:
        return int(self.Sigma_AA.shape[0])

    @property
    def shortfall(self) -> bool:
        """:class:`bool`: Whether fewer than ``k`` sensors were selected."""
        return len(self.support) < self.k

    def to_payload(self) -> dict[str, Any]:
        return {
            "support": list(self.support),
            "sigma_aa": _lower_triangle(np.asarray(self.Sigma_AA)),
            "lambda": self.lam,
            "k": self.k,
        }

    @classmethod
    def from_payload(cls, payload: RawAttackPlan | dict[str, Any]) -> AttackPlan:
        return cls(
            support=payload["support"],
            Sigma_AA=_from_lower_triangle(list(payload["sigma_aa"])),
            lam=payload["lambda"],
            k=int(payload["k"]),
        )

    def __repr__(self) -> str:
        return f"AttackPlan(support={self.support!r}, k={self.k}, lam={self.lam!r}, algorithm={self.algorithm!r})"


@attrs.define(kw_only=True, frozen=True, repr=True, eq=False)
class CorrelatedUpdate:
    """Represents a rank two update ``s e_j^T + e_j s^T`` of the attack covariance.

    .. versionadded:: 0.1.0

    Attributes
    ----------
    pivot_j: :class:`int`
        The observation index being added to the support.
    s: :class:`numpy.ndarray`
        The coupling vector; zero outside the support plus the pivot.
    objective: :class:`float`
        ``J`` at the updated covariance.
    iterations: :class:`int`
        Solver iterations spent.
    warning: :class:`bool`
        Whether the solver stopped on its iteration cap.
    """
    pivot_j: int
    s: NDArray[np.float64] = attrs.field(converter=frozen_array)
    objective: float = math.nan
    iterations: int = 0
    warning: bool = False

    @property
    def s_norm(self) -> float:
        return float(np.linalg.norm(self.s))


@attrs.define(kw_only=True, frozen=True, repr=False, eq=False)
class EpochRecord:
    """One epoch of a greedy construction.

    .. versionadded:: 0.1.0

    Attributes
    ----------
    epoch: :class:`int`
        1-based epoch number.
    selected: :class:`int`
        The index added to the support.
    update: Union[:class:`float`, :class:`numpy.ndarray`]
        The variance ``v`` (independent) or the coupling vector ``s``
        (correlated).
    cost: :class:`float`
        ``J`` after the update.
    scores: Dict[:class:`int`, :class:`float`]
        Cost change of every candidate that was evaluated.
    state: :class:`numpy.ndarray`
        The accumulated covariance after this epoch.
    solver_iters: :class:`int`
        Subproblem iterations of the selected pivot, 0 for the closed form.
    warning: :class:`bool`
        Whether the selected pivot's solver hit its cap.
    """
    epoch: int
    selected: int
    update: float | NDArray[np.float64]
    cost: float
    scores: dict[int, float]
    state: NDArray[np.float64] = attrs.field(converter=frozen_array)
    solver_iters: int = 0
    warning: bool = False

    @property
    def n_candidates(self) -> int:
        return len(self.scores)

    def __repr__(self) -> str:
        return f"EpochRecord(epoch={self.epoch}, selected={self.selected}, cost={self.cost!r})"


@attrs.define(kw_only=True, repr=True, eq=False)
class GreedyTrace:
    """The per epoch history of a greedy construction.

    .. versionadded:: 0.1.0

    Attributes
    ----------
    m: :class:`int`
        The observation dimension.
    initial_cost: :class:`float`
        ``J`` of the zero covariance.
    epochs: List[:class:`EpochRecord`]
        One record per selected sensor.
    shortfall: :class:`bool`
        Whether the construction stopped before reaching ``k`` because no
        remaining candidate improved the cost.
    """
    m: int
    initial_cost: float
    epochs: list[EpochRecord] = attrs.Factory(list)
    shortfall: bool = False

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(record.selected for record in self.epochs)

    @property
    def costs(self) -> list[float]:
        return [record.cost for record in self.epochs]

    def support_at(self, k: int) -> tuple[int, ...]:
        """The support after ``min(k, len(epochs))`` epochs."""
        return self.support[:k]

    def state_at(self, k: int) -> NDArray[np.float64]:
        """The accumulated covariance after ``min(k, len(epochs))`` epochs.

        Greedy constructions are prefix consistent: the state after ``k``
        epochs of a longer run is the state a run asked for ``k`` stops at.
        """
        if k <= 0 or not self.epochs:
            return np.zeros((self.m, self.m))
        return np.array(self.epochs[min(k, len(self.epochs)) - 1].state)

    def cost_at(self, k: int) -> float:
        if k <= 0 or not self.epochs:
            return self.initial_cost
        return self.epochs[min(k, len(self.epochs)) - 1].cost
