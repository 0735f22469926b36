from __future__ import annotations
from enum import Enum

__all__: tuple[str, ...] = (
    "BusType",
    "MeasurementKind",
    "Algorithm",
    "BundledCase",
    "CaseSource",
)


class BusType(str, Enum):
    slack = "slack"
    pv = "pv"
    pq = "pq"

    @classmethod
    def from_matpower(cls, code: int) -> BusType:
        """Map a MATPOWER ``BUS_TYPE`` code (3 = ref, 2 = PV, 1 = PQ)."""
        try:
            return _MATPOWER_CODES[code]
        except KeyError:
            raise ValueError(f"unsupported bus type code {code!r}") from None

    @property
    def matpower_code(self) -> int:
        return {BusType.slack: 3, BusType.pv: 2, BusType.pq: 1}[self]


_MATPOWER_CODES: dict[int, BusType] = {
    3: BusType.slack,
    2: BusType.pv,
    1: BusType.pq,
}


class MeasurementKind(str, Enum):
    injection = "injection"
    flow = "flow"


class Algorithm(str, Enum):
    independent = "independent"
    correlated = "correlated"


class BundledCase(str, Enum):
    ieee9 = "ieee9"
    ieee14 = "ieee14"
    ieee30 = "ieee30"

    @property
    def filename(self) -> str:
        return f"{self.value}.m"


class CaseSource(str, Enum):
    MATPOWER_DATA = "https://raw.githubusercontent.com/MATPOWER/matpower/master/data"
