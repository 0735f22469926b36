"""Flat file artifacts: CSV tables and JSON documents, saved sync or async."""
from __future__ import annotations
from typing import Any, Iterable, Sequence, Union, overload, TYPE_CHECKING
from typing_extensions import Self, TypeAlias

import csv
import io
import json
import os

import aiofiles
import numpy as np

from .enums import Algorithm
from .errors import ValidationError

if TYPE_CHECKING:
    from ._types import DetectionConfig, DetectionEstimate, GreedyTrace, RocPoint

__all__: tuple[str, ...] = (
    "SyncArtifact",
    "AsyncArtifact",
    "INDEPENDENT_TRACE_HEADER",
    "CORRELATED_TRACE_HEADER",
    "DETECTION_HEADER",
    "ROC_HEADER",
    "SWEEP_K_HEADER",
    "SWEEP_LAMBDA_HEADER",
    "trace_rows",
    "detection_row",
    "roc_rows",
    "format_value",
)

# the type of the file.name property of aiofiles
StrOrBytes: TypeAlias = Union[str, bytes, os.PathLike[str], os.PathLike[bytes]]
PathLike: TypeAlias = Union[str, bytes, os.PathLike[str]]

INDEPENDENT_TRACE_HEADER: tuple[str, ...] = ("epoch", "selected_index", "v_star", "J_after", "n_candidates", "shortfall_flag")
CORRELATED_TRACE_HEADER: tuple[str, ...] = ("epoch", "selected_index", "s_norm", "J_after", "solver_iters", "warning_flag")
DETECTION_HEADER: tuple[str, ...] = (
    "lambda", "k", "tau", "n_samples", "seed", "detect_prob", "detect_se", "false_alarm", "fa_se",
)
ROC_HEADER: tuple[str, ...] = ("tau", "false_alarm", "fa_se", "detect_prob", "detect_se")
SWEEP_K_HEADER: tuple[str, ...] = (
    "system", "algorithm", "snr_db", "rho", "lambda", "k", "m", "J", "J_full",
    "eta", "abs_delta_J", "eta_abs", "mi", "kl", "shortfall_flag", "J_bound",
)
SWEEP_LAMBDA_HEADER: tuple[str, ...] = (
    "system", "algorithm", "snr_db", "rho", "k", "lambda", "mi", "kl",
    "tau", "n_samples", "seed", "detect_prob", "detect_se",
)


def format_value(value: Any) -> str:
    """Render one CSV cell. Floats use ``repr`` so they read back bit-identically."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(float(value))
    if isinstance(value, Algorithm):
        return value.value
    return str(value)


def trace_rows(trace: GreedyTrace, algorithm: Algorithm) -> tuple[tuple[str, ...], list[list[Any]]]:
    """The header and rows of a greedy trace CSV.

    The shortfall flag of the independent construction is set on the last
    epoch of a run that stopped early.
    """
    rows: list[list[Any]] = []
    last = len(trace.epochs)
    if algorithm is Algorithm.independent:
        for record in trace.epochs:
            rows.append([
                record.epoch, record.selected, float(record.update), record.cost,
                record.n_candidates, trace.shortfall and record.epoch == last,
            ])
        return INDEPENDENT_TRACE_HEADER, rows
    for record in trace.epochs:
        s_norm = float(np.linalg.norm(record.update))
        rows.append([record.epoch, record.selected, s_norm, record.cost, record.solver_iters, record.warning])
    return CORRELATED_TRACE_HEADER, rows


def detection_row(lam: float, k: int, cfg: DetectionConfig, detect: DetectionEstimate, false_alarm: DetectionEstimate) -> list[Any]:
    return [lam, k, cfg.tau, cfg.n_samples, cfg.seed, detect.estimate, detect.std_error, false_alarm.estimate, false_alarm.std_error]


def roc_rows(points: Iterable[RocPoint]) -> list[list[Any]]:
    return [
        [p.tau, p.false_alarm.estimate, p.false_alarm.std_error, p.detect_prob.estimate, p.detect_prob.std_error]
        for p in points
    ]


class _BaseArtifact:
    _filename: str
    _text: str

    def __init__(self, filename: str, text: str) -> None:
        self._filename = filename
        self._text = text

    @classmethod
    def from_rows(cls, filename: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Self:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        count = 0
        for row in rows:
            if len(row) != len(header):
                raise ValidationError(f"row {count} has {len(row)} cells, the header has {len(header)}")
            writer.writerow([format_value(value) for value in row])
            count += 1
        return cls(filename, buffer.getvalue())

    @classmethod
    def from_json(cls, filename: str, payload: Any) -> Self:
        return cls(filename, json.dumps(payload, indent=2) + "\n")

    def __len__(self) -> int:
        return len(self._text)

    def __str__(self) -> str:
        return self._text

    def __hash__(self) -> int:
        return hash((self._filename, self._text))

    def __eq__(self, __o: object) -> bool:
        return isinstance(__o, _BaseArtifact) and (self._filename, self._text) == (__o._filename, __o._text)

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(filename={self._filename!r}, size={len(self._text)})"

    @property
    def filename(self) -> str:
        """:class:`str`: The file name the artifact is saved under inside an output directory."""
        return self._filename

    @property
    def text(self) -> str:
        """:class:`str`: The rendered content."""
        return self._text

    @property
    def content(self) -> bytes:
        return self._text.encode("utf-8")


class SyncArtifact(_BaseArtifact):
    """A rendered CSV table or JSON document.

    Supported Operations

        .. container:: operations

            .. describe:: x == y

                Checks if two artifacts hold the same file name and content.

            .. describe:: str(x)

                Returns the rendered content.

    .. versionadded:: 0.1.0
    """

    @overload
    def save(self, file: io.BufferedIOBase, *, seek_at_end: bool = ...) -> int:
        ...

    @overload
    def save(self, file: PathLike, *, seek_at_end: bool = ...) -> str:
        ...

    def save(self, file: PathLike | io.BufferedIOBase, *, seek_at_end: bool = True) -> int | str:
        """Write the artifact. If ``file`` is ``io.BufferedIOBase`` returns the
        number of bytes written, otherwise the path it was saved to.

        Parameters
        ----------
        file: Union[:class:`str`, :class:`bytes`, :class:`os.PathLike`, :class:`io.BufferedIOBase`]
            A path or an open binary stream.
        seek_at_end: :class:`bool`
            Rewind the stream after writing.

        Returns
        -------
        Union[:class:`int`, :class:`str`]
        """
        if isinstance(file, io.BufferedIOBase):
            written = file.write(self.content)
            if seek_at_end:
                file.seek(0)
            return written
        with open(file, "wb") as f:
            f.write(self.content)
        return str(f.name)

    def save_in(self, directory: str | os.PathLike[str]) -> str:
        """Write the artifact as :attr:`filename` inside ``directory``, creating it if needed."""
        os.makedirs(directory, exist_ok=True)
        return self.save(os.path.join(directory, self._filename))


class AsyncArtifact(_BaseArtifact):
    """A rendered CSV table or JSON document written with :mod:`aiofiles`.

    .. versionadded:: 0.1.0
    """

    @overload
    async def save(self, file: io.BufferedIOBase, *, seek_at_end: bool = ...) -> int:
        ...

    @overload
    async def save(self, file: PathLike, *, seek_at_end: bool = ...) -> StrOrBytes:
        ...

    async def save(self, file: PathLike | io.BufferedIOBase, *, seek_at_end: bool = True) -> int | StrOrBytes:
        """Write the artifact. If ``file`` is ``io.BufferedIOBase`` returns the
        number of bytes written, otherwise the path it was saved to.

        Parameters
        ----------
        file: Union[:class:`str`, :class:`bytes`, :class:`os.PathLike`, :class:`io.BufferedIOBase`]
        seek_at_end: :class:`bool`

        Returns
        -------
        Union[:class:`int`, :class:`str`, :class:`bytes`, :class:`os.PathLike`]
        """
        if isinstance(file, io.BufferedIOBase):
            written = file.write(self.content)
            if seek_at_end:
                file.seek(0)
            return written
        async with aiofiles.open(file, "wb") as f:
            await f.write(self.content)
        return f.name

    async def save_in(self, directory: str | os.PathLike[str]) -> StrOrBytes:
        os.makedirs(directory, exist_ok=True)
        return await self.save(os.path.join(directory, self._filename))
