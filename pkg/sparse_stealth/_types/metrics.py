from __future__ import annotations
from typing import Any, Iterator

import math

import attrs

from ..errors import ValidationError

__all__: tuple[str, ...] = (
    "DetectionConfig",
    "DetectionEstimate",
    "MetricsRecord",
    "RocPoint",
)


def _check_positive(instance: object, attribute: attrs.Attribute[Any], value: float) -> None:
    if not value > 0:
        raise ValidationError(f"'{attribute.name}' must be positive, got {value!r}")


@attrs.define(kw_only=True, frozen=True, repr=True, eq=True)
class DetectionConfig:
    """Settings of the Monte-Carlo likelihood ratio test.

    .. versionadded:: 0.1.0

    Attributes
    ----------
    tau: :class:`float`
        The LRT threshold; the test flags an attack when ``L(y) >= tau``.
    n_samples: :class:`int`
        Number of Monte-Carlo draws per estimate.
    seed: :class:`int`
        Base seed. Batch ``b`` draws from ``SeedSequence([seed, b])``.
    batch_size: :class:`int`
        Draws per independently seeded batch.
    """
    tau: float = attrs.field(default=2.0, converter=float, validator=_check_positive)
    n_samples: int = attrs.field(default=100_000, validator=attrs.validators.ge(1))
    seed: int = attrs.field(default=0, validator=attrs.validators.ge(0))
    batch_size: int = attrs.field(default=10_000, validator=attrs.validators.ge(1))

    def with_tau(self, tau: float) -> DetectionConfig:
        return attrs.evolve(self, tau=tau)


@attrs.define(kw_only=True, frozen=True, repr=True, eq=True)
class DetectionEstimate:
    """A Monte-Carlo probability with its standard error.

    .. versionadded:: 0.1.0
    """
    estimate: float
    std_error: float
    n_samples: int

    @classmethod
    def from_count(cls, hits: int, n_samples: int) -> DetectionEstimate:
        p = hits / n_samples
        return cls(estimate=p, std_error=math.sqrt(p * (1.0 - p) / n_samples), n_samples=n_samples)

    def __iter__(self) -> Iterator[float]:
        # (estimate, std_error) unpacking
        yield self.estimate
        yield self.std_error


@attrs.define(kw_only=True, frozen=True, repr=True, eq=True)
class MetricsRecord:
    """Performance of one attack covariance.

    .. versionadded:: 0.1.0

    Attributes
    ----------
    J: :class:`float`
        The attack cost.
    mi: :class:`float`
        Mutual information between state and compromised observations, in nats.
    kl: :class:`float`
        KL divergence between the attacked and clean observation laws, in nats.
    eta: Optional[:class:`float`]
        Sparsity penalty, present only when a full support reference cost was given.
    detect_prob: Optional[:class:`DetectionEstimate`]
        Probability of attack detection, when estimated.
    """
    J: float
    mi: float
    kl: float
    eta: float | None = None
    detect_prob: DetectionEstimate | None = None

    def to_payload(self) -> dict[str, Any]:
        payload: dict[str, Any] = {"J": self.J, "mi": self.mi, "kl": self.kl, "eta": self.eta}
        if self.detect_prob is not None:
            payload["detect_prob"] = self.detect_prob.estimate
            payload["detect_se"] = self.detect_prob.std_error
        return payload


@attrs.define(kw_only=True, frozen=True, repr=True, eq=True)
class RocPoint:
    """One operating point of the likelihood ratio test.

    .. versionadded:: 0.1.0

    Attributes
    ----------
    tau: :class:`float`
        The threshold.
    false_alarm: :class:`DetectionEstimate`
        Type-I error, ``P[L(Y) >= tau | no attack]``.
    detect_prob: :class:`DetectionEstimate`
        Probability of detection, ``P[L(Y) >= tau | attack]``.
    """
    tau: float
    false_alarm: DetectionEstimate
    detect_prob: DetectionEstimate
