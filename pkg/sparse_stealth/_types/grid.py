from __future__ import annotations

import attrs

from ..enums import BusType, MeasurementKind
from ..errors import ValidationError

__all__: tuple[str, ...] = (
    "BusRecord",
    "BranchRecord",
    "GridCase",
    "Measurement",
)


@attrs.define(kw_only=True, frozen=True, repr=True, eq=True)
class BusRecord:
    """Represents one row of a case bus table.

    .. versionadded:: 0.1.0

    Attributes
    ----------
    bus_id: :class:`int`
        The external bus number, unique within a case.
    bus_type: :class:`BusType`
        Whether the bus is the slack (angle reference) bus.
    """
    bus_id: int
    bus_type: BusType = attrs.field(converter=BusType)

    @property
    def is_slack(self) -> bool:
        """:class:`bool`: Whether this bus is the angle reference."""
        return self.bus_type is BusType.slack


def _positive(instance: object, attribute: attrs.Attribute[float], value: float) -> None:
    if not value > 0:
        raise ValidationError(f"'{attribute.name}' must be positive, got {value!r}")


@attrs.define(kw_only=True, frozen=True, repr=True, eq=True)
class BranchRecord:
    """Represents one row of a case branch table.

    .. versionadded:: 0.1.0

    Attributes
    ----------
    from_bus: :class:`int`
        The bus id at the from end. Flow measurements are taken here.
    to_bus: :class:`int`
        The bus id at the to end.
    reactance_x: :class:`float`
        Series reactance in per-unit, strictly positive.
    status: :class:`bool`
        Whether the branch is in service. Out of service branches are kept
        in the case but contribute no rows or couplings to the Jacobian.
    """
    from_bus: int
    to_bus: int
    reactance_x: float = attrs.field(converter=float, validator=_positive)
    status: bool = True

    @property
    def susceptance(self) -> float:
        """:class:`float`: ``1 / x``, the DC branch susceptance."""
        return 1.0 / self.reactance_x


@attrs.define(kw_only=True, frozen=True, repr=True, eq=True)
class GridCase:
    """Represents a parsed test system.

    Instances are built by :func:`parse_case`, which enforces the structural
    invariants (unique bus ids, exactly one slack bus, known endpoints and a
    connected in-service graph).

    .. versionadded:: 0.1.0

    Attributes
    ----------
    name: :class:`str`
        The case name, e.g. ``"case9"``.
    buses: Tuple[:class:`BusRecord`, ...]
        Bus records in file order.
    branches: Tuple[:class:`BranchRecord`, ...]
        Branch records in file order, including out of service ones.
    """
    name: str
    buses: tuple[BusRecord, ...] = attrs.field(converter=tuple)
    branches: tuple[BranchRecord, ...] = attrs.field(converter=tuple)

    @property
    def slack_bus(self) -> BusRecord:
        """:class:`BusRecord`: The angle reference bus."""
        return next(bus for bus in self.buses if bus.is_slack)

    @property
    def in_service_branches(self) -> tuple[BranchRecord, ...]:
        return tuple(branch for branch in self.branches if branch.status)

    @property
    def bus_index(self) -> dict[int, int]:
        """Dict[:class:`int`, :class:`int`]: Maps bus ids to their position in :attr:`buses`."""
        return {bus.bus_id: i for i, bus in enumerate(self.buses)}

    @property
    def n_states(self) -> int:
        return len(self.buses) - 1

    @property
    def n_measurements(self) -> int:
        return len(self.buses) + len(self.in_service_branches)


@attrs.define(kw_only=True, frozen=True, repr=True, eq=True)
class Measurement:
    """Labels one row of the measurement Jacobian.

    .. versionadded:: 0.1.0

    Attributes
    ----------
    kind: :class:`MeasurementKind`
        Bus injection or branch flow.
    index: :class:`int`
        Position of the bus (injections) or of the branch (flows) in the case.
    label: :class:`str`
        Human readable name, e.g. ``"P_inj[4]"`` or ``"P_flow[4-5]"``.
    """
    kind: MeasurementKind = attrs.field(converter=MeasurementKind)
    index: int
    label: str
