"""Case ingestion and the linearized Gaussian observation model.

A case is read from the MATPOWER text format, of which only the bus number,
bus type, branch endpoints, branch reactance and branch status columns are
used. The measurement model is the lossless DC approximation over the phase
angles of every non-slack bus with one injection row per bus followed by one
from-end flow row per in-service branch.
"""
from __future__ import annotations
from typing import Any, Iterator, TYPE_CHECKING

import json
import logging
import re
from importlib import resources
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy import linalg, sparse
from scipy.sparse.csgraph import connected_components

from .enums import BundledCase, BusType, MeasurementKind
from .errors import CaseFormatError, InvalidCaseError, ValidationError
from ._types import (
    BranchRecord,
    BusRecord,
    GridCase,
    Measurement,
    ObservationModel,
)

if TYPE_CHECKING:
    from ._http import AsyncCaseHTTPClient
    from ._types import RawObservationModel


__all__: tuple[str, ...] = (
    "parse_case",
    "format_case",
    "load_case",
    "load_case_async",
    "build_jacobian",
    "toeplitz_state_cov",
    "sigma2_from_snr",
    "assemble_model",
    "model_to_payload",
    "model_from_payload",
    "dump_model",
    "load_model",
)

_log = logging.getLogger(__name__)

_FUNCTION_RE = re.compile(r"^\s*function\s+\w+\s*=\s*(\w+)")
_TABLE_RE = re.compile(r"^\s*mpc\.(\w+)\s*=\s*\[(.*)$")

# MATPOWER column positions (0-based) of the documented subset
_BUS_I, _BUS_TYPE = 0, 1
_F_BUS, _T_BUS, _BR_X, _BR_STATUS = 0, 1, 3, 10


def _strip_comment(line: str) -> str:
    return line.split("%", 1)[0]


def _iter_tables(text: str) -> Iterator[tuple[str, int, list[str]]]:
    """Yield ``(table name, line number, row tokens)`` for every row of every ``mpc.<name> = [...]`` table."""
    table: str | None = None
    opened = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if table is None:
            match = _TABLE_RE.match(line)
            if match is None:
                continue
            table, line = match.group(1), match.group(2)
            opened = lineno
        closed = "]" in line
        if closed:
            line = line.split("]", 1)[0]
        for piece in line.split(";"):
            tokens = piece.replace(",", " ").split()
            if tokens:
                yield table, lineno, tokens
        if closed:
            table = None
    if table is not None:
        raise CaseFormatError(opened, f"table 'mpc.{table}' is never closed")


def _number(tokens: list[str], column: int, lineno: int, what: str) -> float:
    try:
        return float(tokens[column])
    except IndexError:
        raise CaseFormatError(lineno, f"{what} row has {len(tokens)} columns, expected at least {column + 1}") from None
    except ValueError:
        raise CaseFormatError(lineno, f"{what} column {column + 1} is not a number: {tokens[column]!r}") from None


def _integer(tokens: list[str], column: int, lineno: int, what: str) -> int:
    value = _number(tokens, column, lineno, what)
    if not value.is_integer():
        raise CaseFormatError(lineno, f"{what} column {column + 1} must be an integer, got {tokens[column]!r}")
    return int(value)


def parse_case(text: str, *, name: str | None = None) -> GridCase:
    """Parse a MATPOWER style case file.

    Columns outside the documented subset are ignored, as are tables other
    than ``mpc.bus`` and ``mpc.branch``.

    .. versionadded:: 0.1.0

    Parameters
    ----------
    text: :class:`str`
        The content of the case file.
    name: Optional[:class:`str`]
        The case name. Defaults to the name of the ``function`` line, or
        ``"case"`` when there is none.

    Raises
    ------
    CaseFormatError
        A table row is malformed; the error carries the line number.
    InvalidCaseError
        A reactance is not positive, a bus id is duplicated, a branch
        endpoint is unknown or a self loop, there is not exactly one slack
        bus, or the in-service graph is disconnected.

    Returns
    -------
    :class:`GridCase`
        The case, records in file order.
    """
    if name is None:
        name = "case"
        for line in text.splitlines():
            match = _FUNCTION_RE.match(line)
            if match is not None:
                name = match.group(1)
                break

    buses: list[BusRecord] = []
    branches: list[BranchRecord] = []
    bus_lines: dict[int, int] = {}
    branch_lines: list[int] = []
    for table, lineno, tokens in _iter_tables(text):
        if table == "bus":
            bus_id = _integer(tokens, _BUS_I, lineno, "bus")
            code = _integer(tokens, _BUS_TYPE, lineno, "bus")
            try:
                bus_type = BusType.from_matpower(code)
            except ValueError as exc:
                raise CaseFormatError(lineno, str(exc)) from None
            if bus_id in bus_lines:
                raise InvalidCaseError(f"line {lineno}: duplicate bus id {bus_id} (first defined on line {bus_lines[bus_id]})")
            bus_lines[bus_id] = lineno
            buses.append(BusRecord(bus_id=bus_id, bus_type=bus_type))
        elif table == "branch":
            from_bus = _integer(tokens, _F_BUS, lineno, "branch")
            to_bus = _integer(tokens, _T_BUS, lineno, "branch")
            reactance = _number(tokens, _BR_X, lineno, "branch")
            status = _number(tokens, _BR_STATUS, lineno, "branch") != 0 if len(tokens) > _BR_STATUS else True
            if not reactance > 0:
                raise InvalidCaseError(f"line {lineno}: nonpositive reactance x={reactance!r} on branch {from_bus}-{to_bus}")
            branch_lines.append(lineno)
            branches.append(BranchRecord(from_bus=from_bus, to_bus=to_bus, reactance_x=reactance, status=status))

    _validate_topology(buses, branches, branch_lines)
    case = GridCase(name=name, buses=buses, branches=branches)
    _log.debug("parsed case %r: %d buses, %d branches", case.name, len(case.buses), len(case.branches))
    return case


def _validate_topology(buses: list[BusRecord], branches: list[BranchRecord], branch_lines: list[int]) -> None:
    if not buses:
        raise InvalidCaseError("case has no bus table")
    slacks = [bus.bus_id for bus in buses if bus.is_slack]
    if not slacks:
        raise InvalidCaseError("case has no slack bus")
    if len(slacks) > 1:
        raise InvalidCaseError(f"case has {len(slacks)} slack buses {slacks}, expected exactly one")

    index = {bus.bus_id: i for i, bus in enumerate(buses)}
    for branch, lineno in zip(branches, branch_lines):
        for endpoint in (branch.from_bus, branch.to_bus):
            if endpoint not in index:
                raise InvalidCaseError(f"line {lineno}: branch endpoint {endpoint} is not a bus of the case")
        if branch.from_bus == branch.to_bus:
            raise InvalidCaseError(f"line {lineno}: branch connects bus {branch.from_bus} to itself")

    in_service = [branch for branch in branches if branch.status]
    rows = [index[branch.from_bus] for branch in in_service]
    cols = [index[branch.to_bus] for branch in in_service]
    adjacency = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(buses), len(buses)))
    n_components, _ = connected_components(adjacency, directed=False)
    if n_components != 1:
        raise InvalidCaseError(f"in-service network is disconnected ({n_components} islands)")


def format_case(case: GridCase) -> str:
    """Serialize a case back to the MATPOWER subset read by :func:`parse_case`.

    .. versionadded:: 0.1.0
    """
    lines = [
        f"function mpc = {case.name}",
        "",
        "%% MATPOWER Case Format : Version 2",
        "mpc.version = '2';",
        "mpc.baseMVA = 100;",
        "",
        "%% bus data",
        "%\tbus_i\ttype",
        "mpc.bus = [",
    ]
    lines.extend(f"\t{bus.bus_id}\t{bus.bus_type.matpower_code};" for bus in case.buses)
    lines.extend([
        "];",
        "",
        "%% branch data",
        "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus",
        "mpc.branch = [",
    ])
    lines.extend(
        f"\t{b.from_bus}\t{b.to_bus}\t0\t{b.reactance_x!r}\t0\t0\t0\t0\t0\t0\t{int(b.status)};"
        for b in case.branches
    )
    lines.append("];")
    return "\n".join(lines) + "\n"


def _remote_url(source: str) -> str | None:
    if source.startswith(("http://", "https://")):
        return source
    if source.startswith("matpower:"):
        from ._http import Route

        return Route("GET", source.removeprefix("matpower:") + ".m").url
    return None


def load_case(source: str | Path) -> GridCase:
    """Load a bundled case by name, a case file by path, or a remote case by url.

    .. versionadded:: 0.1.0

    Parameters
    ----------
    source: Union[:class:`str`, :class:`pathlib.Path`]
        ``"ieee9"``, ``"ieee14"``, ``"ieee30"``, a filesystem path, an
        ``http(s)://`` url or ``"matpower:<name>"`` for a file of the upstream
        MATPOWER data directory, e.g. ``"matpower:case57"``.

    Raises
    ------
    ValidationError
        The path does not exist.
    CaseFetchError
        The url could not be fetched.
    """
    if isinstance(source, str):
        try:
            bundled = BundledCase(source.lower())
        except ValueError:
            pass
        else:
            text = resources.files("sparse_stealth.cases").joinpath(bundled.filename).read_text()
            return parse_case(text, name=bundled.value)
        url = _remote_url(source)
        if url is not None:
            from ._http import CaseHTTPClient

            return parse_case(CaseHTTPClient().fetch_case_text(url))
    path = Path(source)
    if not path.is_file():
        raise ValidationError(f"case {str(source)!r} is neither a bundled case ({', '.join(c.value for c in BundledCase)}) nor a file")
    return parse_case(path.read_text(), name=None)


async def load_case_async(source: str | Path, *, client: AsyncCaseHTTPClient | None = None) -> GridCase:
    """Like :func:`load_case`, with remote cases fetched through aiohttp.

    .. versionadded:: 0.1.0

    Parameters
    ----------
    source: Union[:class:`str`, :class:`pathlib.Path`]
        Same forms as :func:`load_case`.
    client: Optional[:class:`AsyncCaseHTTPClient`]
        A client to reuse; a temporary one is opened and closed otherwise.
    """
    url = _remote_url(source) if isinstance(source, str) else None
    if url is None:
        return load_case(source)
    from ._http import AsyncCaseHTTPClient

    http = client or AsyncCaseHTTPClient()
    try:
        text = await http.fetch_case_text(url)
    finally:
        if client is None:
            await http.close()
    return parse_case(text)


def build_jacobian(case: GridCase) -> tuple[NDArray[np.float64], tuple[Measurement, ...]]:
    """Build the DC measurement Jacobian of a case.

    The columns are the phase angles of the non-slack buses in bus order.
    Rows are every bus injection (bus order) followed by the from-end flow of
    every in-service branch (branch order). A flow row of branch ``(a, b)``
    holds ``+1/x`` at ``theta_a`` and ``-1/x`` at ``theta_b``; the injection
    row of a bus is the sum of the flows leaving it.

    .. versionadded:: 0.1.0

    Returns
    -------
    Tuple[:class:`numpy.ndarray`, Tuple[:class:`Measurement`, ...]]
        The ``m x n`` Jacobian and the label of each row.
    """
    index = case.bus_index
    n_bus = len(case.buses)
    in_service = [(i, branch) for i, branch in enumerate(case.branches) if branch.status]
    n_line = len(in_service)

    f = [index[branch.from_bus] for _, branch in in_service]
    t = [index[branch.to_bus] for _, branch in in_service]
    b = np.array([branch.susceptance for _, branch in in_service])
    rows = np.r_[np.arange(n_line), np.arange(n_line)]
    # Cft = Cf - Ct; Bf = diag(b) Cft gives the from-end flows
    Cft = sparse.csr_matrix((np.r_[np.ones(n_line), -np.ones(n_line)], (rows, np.r_[f, t])), shape=(n_line, n_bus))
    Bf = sparse.csr_matrix((np.r_[b, -b], (rows, np.r_[f, t])), shape=(n_line, n_bus))
    Bbus = Cft.T @ Bf

    full = np.vstack([Bbus.toarray(), Bf.toarray()])
    slack = index[case.slack_bus.bus_id]
    H = np.delete(full, slack, axis=1)

    measurements = tuple(
        Measurement(kind=MeasurementKind.injection, index=i, label=f"P_inj[{bus.bus_id}]")
        for i, bus in enumerate(case.buses)
    ) + tuple(
        Measurement(kind=MeasurementKind.flow, index=i, label=f"P_flow[{branch.from_bus}-{branch.to_bus}]")
        for i, branch in in_service
    )
    return H, measurements


def toeplitz_state_cov(n: int, rho: float) -> NDArray[np.float64]:
    """The state covariance with entries ``rho ** |i - j|``.

    .. versionadded:: 0.1.0

    Raises
    ------
    ValidationError
        ``rho`` is outside ``[0, 1)`` or ``n < 1``.
    """
    if not 0.0 <= rho < 1.0:
        raise ValidationError(f"'rho' must lie in [0, 1), got {rho!r}")
    if n < 1:
        raise ValidationError(f"'n' must be positive, got {n!r}")
    return linalg.toeplitz(rho ** np.arange(n, dtype=np.float64))


def sigma2_from_snr(H: NDArray[np.float64], Sigma_XX: NDArray[np.float64], snr_db: float) -> float:
    """Noise variance giving ``10 log10(tr(H Sigma_XX H^T) / (m sigma2)) = snr_db``.

    .. versionadded:: 0.1.0

    Raises
    ------
    ValidationError
        ``H`` is all zeros.
    """
    H = np.asarray(H, dtype=np.float64)
    if not np.any(H):
        raise ValidationError("'H' is all zeros, the SNR is undefined")
    signal_power = float(np.trace(H @ Sigma_XX @ H.T))
    return signal_power / (H.shape[0] * 10.0 ** (snr_db / 10.0))


def assemble_model(case: GridCase, rho: float, snr_db: float) -> ObservationModel:
    """Build the observation model of a case.

    .. versionadded:: 0.1.0

    Parameters
    ----------
    case: :class:`GridCase`
        The test system.
    rho: :class:`float`
        Decay of the Toeplitz state covariance, in ``[0, 1)``.
    snr_db: :class:`float`
        The SNR fixing the noise variance.

    Returns
    -------
    :class:`ObservationModel`
        The model, with ``Sigma_YY = H Sigma_XX H^T + sigma2 I``.
    """
    H, measurements = build_jacobian(case)
    Sigma_XX = toeplitz_state_cov(H.shape[1], rho)
    sigma2 = sigma2_from_snr(H, Sigma_XX, snr_db)
    _log.info("assembled model for %r: m=%d n=%d sigma2=%.6g", case.name, H.shape[0], H.shape[1], sigma2)
    return ObservationModel(
        H=H,
        Sigma_XX=Sigma_XX,
        sigma2=sigma2,
        name=case.name,
        rho=rho,
        snr_db=snr_db,
        measurements=measurements,
    )


def model_to_payload(model: ObservationModel) -> dict[str, Any]:
    payload: dict[str, Any] = {
        "name": model.name,
        "n": model.n,
        "m": model.m,
        "H": np.asarray(model.H).tolist(),
        "sigma2": model.sigma2,
        "rho": model.rho,
        "snr_db": model.snr_db,
    }
    if model.measurements:
        payload["measurements"] = [
            {"kind": meas.kind.value, "index": meas.index, "label": meas.label}
            for meas in model.measurements
        ]
    return payload


def model_from_payload(payload: RawObservationModel | dict[str, Any]) -> ObservationModel:
    """Rebuild a model saved by :func:`model_to_payload`.

    The state covariance is regenerated from ``rho``.

    Raises
    ------
    ValidationError
        A required key is missing or the shapes disagree with ``n`` and ``m``.
    """
    try:
        H = np.array(payload["H"], dtype=np.float64)
        n, m = int(payload["n"]), int(payload["m"])
        rho = float(payload["rho"])
        sigma2 = float(payload["sigma2"])
    except KeyError as exc:
        raise ValidationError(f"model payload is missing {exc.args[0]!r}") from None
    if H.shape != (m, n):
        raise ValidationError(f"'H' has shape {H.shape}, payload says {(m, n)}")
    measurements = tuple(
        Measurement(kind=raw["kind"], index=int(raw["index"]), label=raw["label"])
        for raw in payload.get("measurements", [])
    )
    snr_db = payload.get("snr_db")
    return ObservationModel(
        H=H,
        Sigma_XX=toeplitz_state_cov(n, rho),
        sigma2=sigma2,
        name=str(payload.get("name", "model")),
        rho=rho,
        snr_db=None if snr_db is None else float(snr_db),
        measurements=measurements,
    )


def dump_model(model: ObservationModel) -> str:
    return json.dumps(model_to_payload(model), indent=2)


def load_model(text: str) -> ObservationModel:
    return model_from_payload(json.loads(text))
