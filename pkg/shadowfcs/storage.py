"""File formats: states, randomized-measurement datasets and result tables.

All files start with a metadata header carrying a schema tag and are
written atomically. Floats are written with their shortest round-trip
representation and headers carry no timestamps, so identical inputs give
byte-identical files.
"""

import csv
import io
import json
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from shadowfcs import __version__
from shadowfcs.errors import InputError, SchemaVersionError
from shadowfcs.models.schemas import (
    DATASET_SCHEMA,
    STATE_SCHEMA,
    TABLE_SCHEMA,
    DatasetMetadata,
    StateMetadata,
)
from shadowfcs.services.randmeas import (
    LocalUnitary,
    MeasurementRecord,
    RandomizedDataset,
    zyz_decompose,
)
from shadowfcs.services.spincore import DensityMatrix, StateVector

logger = logging.getLogger(__name__)


def build_identifier() -> str:
    return f"shadowfcs-{__version__}"


def atomic_write(path: str | Path, text: str) -> Path:
    """Write ``text`` to a temporary file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, temporary = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(handle, "w", encoding="utf-8", newline="") as stream:
            stream.write(text)
            stream.flush()
            os.fsync(stream.fileno())
        os.replace(temporary, path)
    except BaseException:
        Path(temporary).unlink(missing_ok=True)
        raise
    return path


def _check_schema(header: dict, expected: str) -> None:
    found = header.get("schema")
    if found != expected:
        raise SchemaVersionError(expected, str(found))


def _parse_header(line: str, expected: str) -> dict:
    try:
        header = json.loads(line)
    except json.JSONDecodeError as e:
        raise InputError(f"Malformed header line: {e}")
    if not isinstance(header, dict):
        raise InputError("Header line is not a JSON object")
    _check_schema(header, expected)
    return header


# ============================================================================
# State Files
# ============================================================================


def state_to_text(state: StateVector | DensityMatrix, metadata: StateMetadata) -> str:
    if isinstance(state, DensityMatrix):
        data = state.entries.reshape(-1)
    else:
        data = state.amplitudes
    body = {"re": data.real.tolist(), "im": data.imag.tolist()}
    return metadata.model_dump_json(by_alias=True) + "\n" + json.dumps(body) + "\n"


def write_state(
    path: str | Path,
    state: StateVector | DensityMatrix,
    *,
    time_ms: float = 0.0,
    state_descriptor: str = "",
    config: dict[str, Any] | None = None,
) -> Path:
    """Write a pure state or density matrix with its metadata header."""
    if isinstance(state, DensityMatrix):
        kind, sites = "density", list(state.sites)
    else:
        kind, sites = "pure", list(range(1, state.n_qubits + 1))
    metadata = StateMetadata(
        kind=kind,
        sites=sites,
        time_ms=time_ms,
        state_descriptor=state_descriptor,
        config=config,
        build=build_identifier(),
    )
    written = atomic_write(path, state_to_text(state, metadata))
    logger.info(f"Wrote {kind} state on {len(sites)} sites to {written}")
    return written


def read_state(path: str | Path) -> tuple[StateVector | DensityMatrix, StateMetadata]:
    """Read a state file.

    Raises:
        SchemaVersionError: If the header carries another schema tag
        InputError: If the body does not match the header
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if len(lines) < 2:
        raise InputError(f"State file {path} is truncated")
    metadata = StateMetadata.model_validate(_parse_header(lines[0], STATE_SCHEMA))
    body = json.loads(lines[1])
    data = np.array(body["re"], dtype=float) + 1j * np.array(body["im"], dtype=float)
    if metadata.kind == "pure":
        return StateVector(len(metadata.sites), data), metadata
    dim = 2 ** len(metadata.sites)
    if data.size != dim * dim:
        raise InputError(f"Expected {dim * dim} density-matrix entries, got {data.size}")
    return DensityMatrix(tuple(metadata.sites), data.reshape(dim, dim)), metadata


# ============================================================================
# Dataset Files
# ============================================================================


def _unitary_to_list(unitary: LocalUnitary) -> list[float]:
    """Row-major re/im pairs of the four entries followed by (z1, y, z2)."""
    angles = unitary.angles
    if angles is None:
        euler = zyz_decompose(unitary.matrix)
        angles = (euler.z1, euler.y, euler.z2)
    entries = unitary.matrix.reshape(-1)
    flat = [float(part) for z in entries for part in (z.real, z.imag)]
    return flat + [float(angle) for angle in angles]


def _unitary_from_list(values: list[float]) -> LocalUnitary:
    if len(values) != 11:
        raise InputError(f"Expected 11 numbers per unitary, got {len(values)}")
    entries = np.array(values[0:8:2]) + 1j * np.array(values[1:8:2])
    return LocalUnitary(entries.reshape(2, 2), angles=tuple(values[8:]))


def _record_to_line(record: MeasurementRecord) -> str:
    return json.dumps(
        {
            "r": record.r,
            "unitaries": [_unitary_to_list(u) for u in record.unitaries],
            "shots": ["".join(str(bit) for bit in shot) for shot in record.shots.tolist()],
        }
    )


def _record_from_line(line: str) -> MeasurementRecord:
    body = json.loads(line)
    try:
        r, shots, unitaries = body["r"], body["shots"], body["unitaries"]
        if any(set(shot) - {"0", "1"} for shot in shots):
            raise InputError(f"Record {r}: shots must be 0/1 strings")
        return MeasurementRecord(
            r=r,
            unitaries=tuple(_unitary_from_list(u) for u in unitaries),
            shots=np.array([[int(bit) for bit in shot] for shot in shots], dtype=np.uint8).reshape(
                len(shots), len(unitaries)
            ),
        )
    except KeyError as exc:
        raise InputError(f"Record is missing field {exc}") from exc
    except TypeError as exc:
        raise InputError(f"Record has a malformed field: {exc}") from exc


def dataset_to_text(dataset: RandomizedDataset) -> str:
    lines = [dataset.metadata.model_dump_json(by_alias=True)]
    lines.extend(_record_to_line(record) for record in dataset.records)
    return "\n".join(lines) + "\n"


def dataset_from_text(text: str) -> RandomizedDataset:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise InputError("Dataset file is empty")
    metadata = DatasetMetadata.model_validate(_parse_header(lines[0], DATASET_SCHEMA))
    records = tuple(_record_from_line(line) for line in lines[1:])
    for expected, record in enumerate(records):
        if record.r != expected:
            raise InputError(f"Record {expected} is out of order (found r={record.r})")
    return RandomizedDataset(metadata=metadata, records=records)


def write_dataset(path: str | Path, dataset: RandomizedDataset) -> Path:
    written = atomic_write(path, dataset_to_text(dataset))
    logger.info(f"Wrote {dataset.n_u} records x {dataset.n_m} shots to {written}")
    return written


def read_dataset(path: str | Path) -> RandomizedDataset:
    """Read a dataset file.

    Raises:
        SchemaVersionError: If the metadata line carries another schema tag
        InputError: If a record is malformed or inconsistent with the metadata
    """
    return dataset_from_text(Path(path).read_text(encoding="utf-8"))


def import_experimental_dataset(path: str | Path) -> RandomizedDataset:
    """Convert raw experimental randomized-measurement data into a dataset."""
    raise NotImplementedError(
        f"No adapter exists for the experimental data format of {path}; "
        "convert it to the rm-dataset/1 schema first"
    )


# ============================================================================
# Table Files
# ============================================================================

# Leading columns of each table kind; 'hist' adds one site_j column per site
TABLE_COLUMNS = {
    "fcs": ["alpha", "re", "im", "stderr_re", "stderr_im"],
    "pdf": ["q", "p", "stderr"],
    "moments": [
        "axis",
        "mean",
        "mean_stderr",
        "second",
        "second_stderr",
        "log_fcs_mean",
        "log_fcs_variance",
    ],
    "propagated": ["alpha", "re", "im", "stderr_re", "stderr_im"],
    "hist": ["m", "pooled"],
    "oracle_fcs": ["alpha", "exact_re", "exact_im"],
    "oracle_pdf": ["q", "exact"],
    "oracle_parity": ["axis", "exact"],
    "compare_fcs": ["alpha", "est_re", "est_im", "exact_re", "exact_im", "z_re", "z_im"],
    "compare_pdf": ["q", "p", "exact", "z"],
    "sweep": [
        "t_ms",
        "axis",
        "quantity",
        "key",
        "est_re",
        "est_im",
        "stderr_re",
        "stderr_im",
        "exact_re",
        "exact_im",
    ],
}


@dataclass(frozen=True)
class Table:
    metadata: dict[str, Any]
    columns: list[str]
    rows: list[list[str]]

    @property
    def kind(self) -> str:
        return self.metadata["table"]

    def column(self, name: str) -> np.ndarray:
        """Numeric column as floats."""
        if name not in self.columns:
            raise InputError(f"Table has no column '{name}'; columns are {self.columns}")
        index = self.columns.index(name)
        return np.array([float(row[index]) for row in self.rows])

    def text_column(self, name: str) -> list[str]:
        index = self.columns.index(name)
        return [row[index] for row in self.rows]


def _format_cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def table_to_text(
    kind: str,
    rows: list[list[Any]],
    metadata: dict[str, Any] | None = None,
    columns: list[str] | None = None,
) -> str:
    expected = TABLE_COLUMNS.get(kind)
    if expected is None:
        raise ValueError(f"Unknown table kind: {kind}")
    columns = list(columns or expected)
    if columns[: len(expected)] != expected:
        raise InputError(f"Table '{kind}' must start with columns {expected}, got {columns}")

    header = {"schema": TABLE_SCHEMA, "table": kind, "build": build_identifier()}
    header.update(metadata or {})
    buffer = io.StringIO()
    buffer.write("# " + json.dumps(header, sort_keys=True) + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise InputError(f"Row {row} does not match columns {columns}")
        writer.writerow([_format_cell(value) for value in row])
    return buffer.getvalue()


def write_table(
    path: str | Path,
    kind: str,
    rows: list[list[Any]],
    metadata: dict[str, Any] | None = None,
    columns: list[str] | None = None,
) -> Path:
    """Write a CSV table with a '#'-prefixed JSON metadata header."""
    written = atomic_write(path, table_to_text(kind, rows, metadata, columns))
    logger.info(f"Wrote {kind} table with {len(rows)} rows to {written}")
    return written


def read_table(path: str | Path) -> Table:
    """Read a table written by write_table.

    Raises:
        SchemaVersionError: If the header carries another schema tag
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("# "):
        raise InputError(f"Table {path} has no metadata header")
    metadata = _parse_header(lines[0][2:], TABLE_SCHEMA)
    reader = csv.reader(lines[1:])
    columns = next(reader, None)
    if columns is None:
        raise InputError(f"Table {path} has no column row")
    return Table(metadata=metadata, columns=columns, rows=[row for row in reader if row])
