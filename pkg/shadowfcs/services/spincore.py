"""Dense states, density matrices and Pauli operators.

Sites carry 1-based labels and site 1 is the most significant bit of the
computational index. ``|0> = |up>`` is the +1 eigenstate of sigma^z, so a
bit value of 1 counts one spin pointing down.
"""

import string
from dataclasses import dataclass
from functools import reduce

import numpy as np

from shadowfcs.errors import CapacityError, InputError
from shadowfcs.models.schemas import MAX_QUBITS, Axis, PauliString, SubsystemSpec

IDENTITY = np.eye(2, dtype=complex)

PAULI = {
    Axis.X: np.array([[0, 1], [1, 0]], dtype=complex),
    Axis.Y: np.array([[0, -1j], [1j, 0]], dtype=complex),
    Axis.Z: np.array([[1, 0], [0, -1]], dtype=complex),
}

# Columns are the +1 and -1 eigenvectors of each Pauli matrix.
EIGENBASIS = {
    Axis.X: np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    Axis.Y: np.array([[1, 1], [1j, -1j]], dtype=complex) / np.sqrt(2),
    Axis.Z: np.eye(2, dtype=complex),
}

NORM_TOL = 1e-12
HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-12
EIGENVALUE_FLOOR = -1e-10


def check_capacity(n_qubits: int) -> None:
    if n_qubits > MAX_QUBITS:
        raise CapacityError(
            f"{n_qubits} qubits exceed the dense-representation limit of {MAX_QUBITS}"
        )


def basis_bits(n_qubits: int) -> np.ndarray:
    """Bit table of shape (2**n, n); column j holds the bit of site j+1."""
    index = np.arange(2**n_qubits)
    shifts = np.arange(n_qubits - 1, -1, -1)
    return ((index[:, None] >> shifts) & 1).astype(np.uint8)


def down_counts(n_qubits: int) -> np.ndarray:
    """Number of down spins in every computational basis state."""
    return basis_bits(n_qubits).sum(axis=1)


@dataclass(frozen=True)
class StateVector:
    """Pure state of ``n_qubits`` qubits."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        check_capacity(self.n_qubits)
        amplitudes = np.array(self.amplitudes, dtype=complex)
        if amplitudes.shape != (2**self.n_qubits,):
            raise InputError(
                f"Expected {2**self.n_qubits} amplitudes, got shape {amplitudes.shape}"
            )
        norm = np.vdot(amplitudes, amplitudes).real
        if abs(norm - 1.0) > NORM_TOL:
            raise InputError(f"State is not normalised: norm^2 = {norm}")
        amplitudes.setflags(write=False)
        object.__setattr__(self, "amplitudes", amplitudes)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.n_qubits)


@dataclass(frozen=True)
class DensityMatrix:
    """Operator on the ordered ``sites``; invariants are checked on demand."""

    sites: tuple[int, ...]
    entries: np.ndarray

    def __post_init__(self):
        sites = tuple(int(site) for site in self.sites)
        check_capacity(len(sites))
        entries = np.array(self.entries, dtype=complex)
        dim = 2 ** len(sites)
        if entries.shape != (dim, dim):
            raise InputError(f"Expected a {dim}x{dim} matrix, got shape {entries.shape}")
        entries.setflags(write=False)
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "entries", entries)

    @property
    def n_qubits(self) -> int:
        return len(self.sites)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def tensor(self) -> np.ndarray:
        return self.entries.reshape((2,) * (2 * self.n_qubits))


def check_density_matrix(rho: DensityMatrix) -> None:
    """Raise InputError if rho is not Hermitian, unit-trace and PSD."""
    entries = rho.entries
    asymmetry = np.max(np.abs(entries - entries.conj().T))
    if asymmetry > HERMITICITY_TOL:
        raise InputError(f"Density matrix is not Hermitian (deviation {asymmetry:.3e})")
    trace = np.trace(entries)
    if abs(trace - 1.0) > TRACE_TOL:
        raise InputError(f"Density matrix trace is {trace}, expected 1")
    smallest = np.linalg.eigvalsh(entries).min()
    if smallest < EIGENVALUE_FLOOR:
        raise InputError(f"Density matrix has negative eigenvalue {smallest:.3e}")


def purity(rho: DensityMatrix) -> float:
    return float(np.einsum("ij,ji->", rho.entries, rho.entries).real)


def _hermitise(matrix: np.ndarray) -> np.ndarray:
    return (matrix + matrix.conj().T) / 2


def full_density_matrix(state: StateVector) -> DensityMatrix:
    """|psi><psi| on all sites."""
    return DensityMatrix(
        tuple(range(1, state.n_qubits + 1)),
        np.outer(state.amplitudes, state.amplitudes.conj()),
    )


def partial_trace(
    state: StateVector | DensityMatrix, subsystem: SubsystemSpec
) -> DensityMatrix:
    """Reduced density matrix on ``subsystem``.

    Args:
        state: Pure state of the whole chain, or a density matrix whose sites
            include the subsystem
        subsystem: Sites to keep

    Returns:
        DensityMatrix on the subsystem sites, in increasing site order

    Raises:
        InputError: If a subsystem site is not part of the input
    """
    if isinstance(state, DensityMatrix):
        return _reduce_density_matrix(state, subsystem)

    subsystem.check_within(state.n_qubits)
    keep = [site - 1 for site in subsystem.sites]
    rest = [axis for axis in range(state.n_qubits) if axis not in keep]
    psi = np.transpose(state.tensor(), keep + rest).reshape(2 ** len(keep), -1)
    return DensityMatrix(subsystem.sites, _hermitise(psi @ psi.conj().T))


def _reduce_density_matrix(rho: DensityMatrix, subsystem: SubsystemSpec) -> DensityMatrix:
    missing = [site for site in subsystem.sites if site not in rho.sites]
    if missing:
        raise InputError(f"Sites {missing} are not part of the density matrix {list(rho.sites)}")

    n = rho.n_qubits
    keep = [rho.sites.index(site) for site in subsystem.sites]
    letters = list(string.ascii_letters[: 2 * n])
    row = letters[:n]
    col = [letters[n + k] if k in keep else letters[k] for k in range(n)]
    output = [row[k] for k in keep] + [col[k] for k in keep]
    reduced = np.einsum(f"{''.join(row + col)}->{''.join(output)}", rho.tensor())
    dim = 2 ** len(keep)
    return DensityMatrix(subsystem.sites, _hermitise(reduced.reshape(dim, dim)))


def apply_single_site(tensor: np.ndarray, matrix: np.ndarray, axis: int) -> np.ndarray:
    """Contract a 2x2 matrix into tensor index ``axis`` (0-based)."""
    return np.moveaxis(np.tensordot(matrix, tensor, axes=([1], [axis])), 0, axis)


def single_qubit_phase(axis: Axis, alpha: float) -> np.ndarray:
    """exp(i alpha sigma^mu) = cos(alpha) I + i sin(alpha) sigma^mu."""
    return np.cos(alpha) * IDENTITY + 1j * np.sin(alpha) * PAULI[Axis(axis)]


def phase_operator(n_a: int, axis: Axis, alpha: float) -> np.ndarray:
    """exp(i alpha S_A^mu) as a dense 2**n_a matrix."""
    return reduce(np.kron, [single_qubit_phase(axis, alpha)] * n_a)


def check_outcome(n_a: int, q: int) -> int:
    """Return the number of minus spins for outcome q, validating the spectrum."""
    if abs(q) > n_a or (n_a - q) % 2:
        raise InputError(
            f"q={q} is not an eigenvalue of S_A for N_A={n_a}; "
            f"allowed values are {list(range(-n_a, n_a + 1, 2))}"
        )
    return (n_a - q) // 2


def outcomes(n_a: int) -> np.ndarray:
    """Eigenvalues of S_A^mu in increasing order."""
    return np.arange(-n_a, n_a + 1, 2)


def magnetization_projector(n_a: int, axis: Axis, q: int) -> np.ndarray:
    """Projector onto the q-eigenspace of S_A^mu = sum_j sigma_j^mu."""
    minus = check_outcome(n_a, q)
    mask = (down_counts(n_a) == minus).astype(complex)
    rotation = reduce(np.kron, [EIGENBASIS[Axis(axis)]] * n_a)
    projector = (rotation * mask) @ rotation.conj().T
    return _hermitise(projector)


def magnetization_operator(n_a: int, axis: Axis) -> np.ndarray:
    """S_A^mu on n_a sites."""
    return sum(
        pauli_operator(PauliString(terms={site: axis}), tuple(range(1, n_a + 1)))
        for site in range(1, n_a + 1)
    )


def pauli_operator(observable: PauliString, sites: tuple[int, ...]) -> np.ndarray:
    """Dense matrix of ``observable`` on the ordered ``sites``."""
    unknown = [site for site in observable.sites if site not in sites]
    if unknown:
        raise InputError(f"Pauli string acts on {unknown}, outside sites {list(sites)}")
    factors = [
        PAULI[observable.terms[site]] if site in observable.terms else IDENTITY
        for site in sites
    ]
    return reduce(np.kron, factors)


def expectation(rho: DensityMatrix, observable: PauliString) -> float:
    """Tr(rho P) for a Pauli string supported on rho's sites."""
    operator = pauli_operator(observable, rho.sites)
    return float(np.einsum("ij,ji->", rho.entries, operator).real)
