"""CUE sampling of local unitaries, randomized-measurement acquisition and
uniformity checks of the applied unitaries.

Record r of a dataset draws everything it needs (unitaries, then shots) from
its own stream ``default_rng(SeedSequence(seed, spawn_key=(r,)))``. Records
can therefore be produced in any order, on any number of workers, and the
dataset is still a pure function of (state, n_u, n_m, seed).
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.linalg import qr
from scipy.stats import chisquare

from shadowfcs import __version__
from shadowfcs.errors import InputError
from shadowfcs.models.schemas import DatasetMetadata
from shadowfcs.services.spincore import (
    DensityMatrix,
    StateVector,
    apply_single_site,
    basis_bits,
)
from shadowfcs.workers import parallel_map

logger = logging.getLogger(__name__)

UNITARITY_TOL = 1e-12


class EulerAngles(NamedTuple):
    """u = exp(i phase) Rz(z1) Ry(y) Rz(z2)."""

    z1: float
    y: float
    z2: float
    phase: float


def rz(angle: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * angle), np.exp(0.5j * angle)])


def ry(angle: float) -> np.ndarray:
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def _check_unitary(matrix: np.ndarray) -> None:
    if matrix.shape != (2, 2):
        raise InputError(f"Expected a 2x2 matrix, got shape {matrix.shape}")
    deviation = np.max(np.abs(matrix.conj().T @ matrix - np.eye(2)))
    if deviation > UNITARITY_TOL:
        raise InputError(f"Matrix is not unitary (deviation {deviation:.3e})")


def zyz_decompose(u) -> EulerAngles:
    """Euler angles with y in [0, pi]; z1 + z2 is fixed to 0 when y = 0 and
    z1 - z2 to 0 when y = pi."""
    matrix = np.asarray(getattr(u, "matrix", u), dtype=complex)
    _check_unitary(matrix)

    phase = np.angle(np.linalg.det(matrix)) / 2
    special = matrix * np.exp(-1j * phase)
    a, b = special[0, 0], special[1, 0]
    y = 2 * math.atan2(abs(b), abs(a))
    total = -2 * np.angle(a) if abs(a) > 1e-14 else 0.0
    difference = 2 * np.angle(b) if abs(b) > 1e-14 else 0.0
    return EulerAngles(
        z1=float((total + difference) / 2),
        y=float(y),
        z2=float((total - difference) / 2),
        phase=float(phase),
    )


@dataclass(frozen=True)
class LocalUnitary:
    """Single-qubit unitary; the matrix is authoritative over the angles."""

    matrix: np.ndarray
    angles: tuple[float, float, float] | None = None

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=complex)
        _check_unitary(matrix)
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "LocalUnitary":
        euler = zyz_decompose(matrix)
        return cls(matrix=matrix, angles=(euler.z1, euler.y, euler.z2))


IDENTITY_UNITARY = LocalUnitary(np.eye(2, dtype=complex), angles=(0.0, 0.0, 0.0))


def sample_cue_unitary(rng: np.random.Generator) -> LocalUnitary:
    """Haar-random 2x2 unitary.

    QR-factorise a complex Ginibre matrix and multiply column j of Q by
    r_jj / |r_jj| so the factorisation is unique and Q is Haar distributed.
    """
    z = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))) / math.sqrt(2)
    q, r = qr(z)
    diagonal = np.diagonal(r)
    q = q * (diagonal / np.abs(diagonal))
    return LocalUnitary.from_matrix(q)


UnitarySampler = Callable[[np.random.Generator], LocalUnitary]


def record_stream(seed: int, r: int) -> np.random.Generator:
    """Independent generator of record r."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))


@dataclass(frozen=True)
class MeasurementRecord:
    """One random unitary U = (x)_i u_i and the bitstrings measured after it."""

    r: int
    unitaries: tuple[LocalUnitary, ...]
    shots: np.ndarray  # (n_m, n_qubits) of 0/1, 0 = up

    def __post_init__(self):
        shots = np.array(self.shots, dtype=np.uint8)
        if shots.ndim != 2 or shots.shape[1] != len(self.unitaries):
            raise InputError(
                f"Record {self.r}: shots of shape {shots.shape} do not match "
                f"{len(self.unitaries)} sites"
            )
        shots.setflags(write=False)
        object.__setattr__(self, "shots", shots)
        object.__setattr__(self, "unitaries", tuple(self.unitaries))


@dataclass(frozen=True)
class RandomizedDataset:
    metadata: DatasetMetadata
    records: tuple[MeasurementRecord, ...]

    def __post_init__(self):
        records = tuple(self.records)
        meta = self.metadata
        if len(records) != meta.n_u:
            raise InputError(f"Expected {meta.n_u} records, got {len(records)}")
        for record in records:
            if record.shots.shape != (meta.n_m, meta.n_qubits):
                raise InputError(
                    f"Record {record.r}: expected {meta.n_m} shots of length "
                    f"{meta.n_qubits}, got shape {record.shots.shape}"
                )
        object.__setattr__(self, "records", records)

    @property
    def n_qubits(self) -> int:
        return self.metadata.n_qubits

    @property
    def n_u(self) -> int:
        return self.metadata.n_u

    @property
    def n_m(self) -> int:
        return self.metadata.n_m

    @cached_property
    def unitary_stack(self) -> np.ndarray:
        """All unitaries as an (n_u, n_qubits, 2, 2) array."""
        return np.array(
            [[u.matrix for u in record.unitaries] for record in self.records], dtype=complex
        )

    @cached_property
    def shot_stack(self) -> np.ndarray:
        """All shots as an (n_u, n_m, n_qubits) array."""
        return np.stack([record.shots for record in self.records])


def outcome_probabilities(
    state: StateVector | DensityMatrix, unitaries: list[LocalUnitary] | tuple[LocalUnitary, ...]
) -> np.ndarray:
    """Born probabilities of every bitstring after applying (x)_i u_i."""
    if isinstance(state, DensityMatrix):
        n = state.n_qubits
        if state.sites != tuple(range(1, n + 1)):
            raise InputError(
                f"Density matrix on sites {list(state.sites)} does not describe a full chain"
            )
    else:
        n = state.n_qubits
    if len(unitaries) != n:
        raise InputError(f"Expected {n} local unitaries, got {len(unitaries)}")

    if isinstance(state, DensityMatrix):
        tensor = state.tensor()
        for position, u in enumerate(unitaries):
            tensor = apply_single_site(tensor, u.matrix, position)
            tensor = apply_single_site(tensor, u.matrix.conj(), n + position)
        probabilities = np.real(np.diagonal(tensor.reshape(2**n, 2**n))).copy()
    else:
        tensor = state.tensor()
        for position, u in enumerate(unitaries):
            tensor = apply_single_site(tensor, u.matrix, position)
        probabilities = np.abs(tensor.reshape(-1)) ** 2

    probabilities = np.clip(probabilities, 0.0, None)
    return probabilities / probabilities.sum()


def acquire_dataset(
    state: StateVector | DensityMatrix,
    n_u: int,
    n_m: int,
    seed: int,
    *,
    sampler: UnitarySampler = sample_cue_unitary,
    state_descriptor: str = "",
    time_ms: float = 0.0,
) -> RandomizedDataset:
    """Simulate N_u random unitaries with N_M z-basis shots each.

    Args:
        state: State of the full chain (pure or mixed)
        n_u: Number of random unitaries
        n_m: Shots per unitary
        seed: Master seed
        sampler: Draws one local unitary from a generator
        state_descriptor: Free text stored in the metadata
        time_ms: Evolution time stored in the metadata

    Returns:
        The RandomizedDataset

    Raises:
        InputError: If n_u or n_m is below 1 or the state is not a full chain
    """
    if n_u < 1 or n_m < 1:
        raise InputError(f"n_u and n_m must be at least 1, got n_u={n_u}, n_m={n_m}")
    n = state.n_qubits
    bits = basis_bits(n)

    def build_record(r: int) -> MeasurementRecord:
        rng = record_stream(seed, r)
        unitaries = tuple(sampler(rng) for _ in range(n))
        probabilities = outcome_probabilities(state, unitaries)
        outcomes = rng.choice(len(probabilities), size=n_m, p=probabilities)
        return MeasurementRecord(r=r, unitaries=unitaries, shots=bits[outcomes])

    records = parallel_map(build_record, range(n_u))
    metadata = DatasetMetadata(
        n_qubits=n,
        n_u=n_u,
        n_m=n_m,
        seed=seed,
        state_descriptor=state_descriptor,
        time_ms=time_ms,
        build=f"shadowfcs-{__version__}",
    )
    logger.info(f"Acquired dataset: N={n}, N_u={n_u}, N_M={n_m}, seed={seed}")
    return RandomizedDataset(metadata=metadata, records=tuple(records))


@dataclass(frozen=True)
class UniformityHistogram:
    """Counts over records of m, the number of up outcomes among the N_M shots."""

    per_site: np.ndarray  # (n_qubits, n_m + 1)
    pooled: np.ndarray  # (n_m + 1,)

    @property
    def m_values(self) -> np.ndarray:
        return np.arange(self.pooled.size)

    def flatness_pvalue(self) -> float:
        """Chi-square p-value of the pooled counts against a flat distribution."""
        return float(chisquare(self.pooled).pvalue)


def uniformity_histogram(dataset: RandomizedDataset) -> UniformityHistogram:
    ups = (dataset.shot_stack == 0).sum(axis=1)  # (n_u, n_qubits)
    per_site = np.stack(
        [np.bincount(ups[:, site], minlength=dataset.n_m + 1) for site in range(dataset.n_qubits)]
    )
    return UniformityHistogram(per_site=per_site, pooled=per_site.sum(axis=0))
