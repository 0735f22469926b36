from __future__ import annotations
from typing import Any, Sequence

import math

import attrs

from ..enums import Algorithm
from ..errors import ValidationError

__all__: tuple[str, ...] = (
    "ExperimentConfig",
    "DEFAULT_K_FRACTIONS",
    "DEFAULT_LAMBDAS",
)

DEFAULT_K_FRACTIONS: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
DEFAULT_LAMBDAS: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0, 16.0)


def _floats(values: Sequence[Any]) -> tuple[float, ...]:
    return tuple(float(v) for v in values)


def _ints(values: Sequence[Any]) -> tuple[int, ...]:
    return tuple(int(v) for v in values)


def _check_rho(instance: object, attribute: attrs.Attribute[Any], value: float) -> None:
    if not 0.0 <= value < 1.0:
        raise ValidationError(f"'rho' must lie in [0, 1), got {value!r}")


def _check_lambdas(instance: object, attribute: attrs.Attribute[Any], value: tuple[float, ...]) -> None:
    if not value:
        raise ValidationError("'lambdas' must not be empty")
    for lam in value:
        if not lam >= 1.0:
            raise ValidationError(f"'lambdas' entries must be >= 1, got {lam!r}")


def _check_ks(instance: object, attribute: attrs.Attribute[Any], value: tuple[int, ...]) -> None:
    for k in value:
        if k < 1:
            raise ValidationError(f"'ks' entries must be >= 1, got {k!r}")


def _check_fractions(instance: object, attribute: attrs.Attribute[Any], value: tuple[float, ...]) -> None:
    for fraction in value:
        if not 0.0 < fraction <= 1.0:
            raise ValidationError(f"'k_fractions' entries must lie in (0, 1], got {fraction!r}")


@attrs.define(kw_only=True, frozen=True, repr=True, eq=True)
class ExperimentConfig:
    """Configuration of one experiment sweep.

    Either ``ks`` (absolute sparsities) or ``k_fractions`` (proportions of
    ``m``, rounded up) selects the sparsity grid; when both are empty the
    grid defaults to ``k/m`` in ``0.1, 0.2, ..., 1.0``.

    .. versionadded:: 0.1.0

    Attributes
    ----------
    cases: Tuple[:class:`str`, ...]
        Bundled case names (``ieee9``, ``ieee14``, ``ieee30``), paths or urls.
    rho: :class:`float`
        Toeplitz decay of the state covariance, in ``[0, 1)``.
    snr_db: Tuple[:class:`float`, ...]
        The SNR regimes.
    lambdas: Tuple[:class:`float`, ...]
        The weightings, each ``>= 1``. :func:`run_sweep_k` uses the first one.
    ks: Tuple[:class:`int`, ...]
        Absolute sparsities.
    k_fractions: Tuple[:class:`float`, ...]
        Sparsities as proportions of ``m`` in ``(0, 1]``.
    algorithm: :class:`Algorithm`
        The greedy construction.
    tau: :class:`float`
        LRT threshold of the detection sweep.
    n_samples: :class:`int`
        Monte-Carlo draws per detection estimate.
    seed: :class:`int`
        Base seed; every task derives its own seed from it.
    output_dir: :class:`str`
        Directory the CSV files are written to.
    project_each_epoch: :class:`bool`
        Project the correlated construction onto the PSD cone after every
        epoch instead of once at the end.
    """
    cases: tuple[str, ...] = attrs.field(default=("ieee9",), converter=tuple)
    rho: float = attrs.field(default=0.9, converter=float, validator=_check_rho)
    snr_db: tuple[float, ...] = attrs.field(default=(30.0,), converter=_floats)
    lambdas: tuple[float, ...] = attrs.field(default=(8.0,), converter=_floats, validator=_check_lambdas)
    ks: tuple[int, ...] = attrs.field(default=(), converter=_ints, validator=_check_ks)
    k_fractions: tuple[float, ...] = attrs.field(default=(), converter=_floats, validator=_check_fractions)
    algorithm: Algorithm = attrs.field(default=Algorithm.independent, converter=Algorithm)
    tau: float = attrs.field(default=2.0, converter=float)
    n_samples: int = attrs.field(default=100_000, validator=attrs.validators.ge(1))
    seed: int = attrs.field(default=0, validator=attrs.validators.ge(0))
    output_dir: str = "."
    project_each_epoch: bool = False

    @tau.validator
    def _check_tau(self, attribute: attrs.Attribute[Any], value: float) -> None:
        if not value > 0:
            raise ValidationError(f"'tau' must be positive, got {value!r}")

    def k_grid(self, m: int) -> tuple[int, ...]:
        """Resolve the sparsity grid for an ``m`` observation model.

        Raises
        ------
        ValueError
            An absolute sparsity exceeds ``m``.
        """
        if self.ks:
            for k in self.ks:
                if k > m:
                    raise ValidationError(f"k={k} exceeds the number of observations m={m}")
            return tuple(sorted(set(self.ks)))
        fractions = self.k_fractions or DEFAULT_K_FRACTIONS
        # the small epsilon keeps 0.3 * 10 from rounding up to 4
        grid = {min(m, max(1, math.ceil(f * m - 1e-9))) for f in fractions}
        return tuple(sorted(grid))
