"""Classical-shadow estimators of the FCS, the PDF and Pauli moments.

For site i, unitary u and outcome s the snapshot is 3 u^dagger|s><s|u - I.
Everything below reduces to its Bloch components

    b^mu = Tr[rho_hat sigma^mu] = 3 <s| u sigma^mu u^dagger |s>,

so every estimate is a product over sites of affine functions of b. Shots
are averaged first, then unitaries; error bars are computed over the
per-unitary estimates.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import reduce
from itertools import combinations
from typing import Literal

import numpy as np
from numpy.polynomial import polynomial

from shadowfcs.errors import InputError
from shadowfcs.models.schemas import Axis, PauliString, SubsystemSpec
from shadowfcs.services.randmeas import LocalUnitary, RandomizedDataset
from shadowfcs.services.resampling import complex_error_bars, error_bars
from shadowfcs.services.spincore import (
    IDENTITY,
    PAULI,
    DensityMatrix,
    check_capacity,
    outcomes,
)
from shadowfcs.workers import parallel_map

logger = logging.getLogger(__name__)

RECORD_CHUNK = 16
MAX_PROPAGATION_SITES = 6
CUMULANT_WINDOW = 0.3
MIN_CUMULANT_POINTS = 5


# ============================================================================
# Snapshots
# ============================================================================


@dataclass(frozen=True)
class ShadowSnapshot:
    """Product-form snapshot, one 2x2 matrix per subsystem site."""

    sites: tuple[int, ...]
    matrices: tuple[np.ndarray, ...]

    def dense(self) -> np.ndarray:
        """Tensor product of the site matrices (small subsystems only)."""
        check_capacity(len(self.sites))
        return reduce(np.kron, self.matrices)


def snapshot(
    unitaries: list[LocalUnitary] | tuple[LocalUnitary, ...],
    bitstring,
    subsystem: SubsystemSpec,
) -> ShadowSnapshot:
    """Snapshot of one shot restricted to ``subsystem``.

    Args:
        unitaries: Local unitaries of the chain, site 1 first
        bitstring: Outcomes as a '0101' string or a 0/1 sequence, site 1 first
        subsystem: Sites to keep

    Raises:
        InputError: If the unitaries or the bitstring do not cover the subsystem
    """
    bits = [int(bit) for bit in bitstring]
    last = subsystem.sites[-1]
    if len(unitaries) < last or len(bits) < last:
        raise InputError(
            f"Subsystem {list(subsystem.sites)} is not covered by {len(unitaries)} unitaries "
            f"and {len(bits)} outcomes"
        )
    matrices = []
    for site in subsystem.sites:
        u = unitaries[site - 1].matrix
        bit = bits[site - 1]
        if bit not in (0, 1):
            raise InputError(f"Outcome of site {site} must be 0 or 1, got {bit}")
        ket = u.conj().T[:, bit]
        matrices.append(3 * np.outer(ket, ket.conj()) - IDENTITY)
    return ShadowSnapshot(sites=subsystem.sites, matrices=tuple(matrices))


def _columns(dataset: RandomizedDataset, sites) -> list[int]:
    sites = list(sites)
    if sites and (min(sites) < 1 or max(sites) > dataset.n_qubits):
        raise InputError(f"Sites {sites} lie outside the {dataset.n_qubits}-site dataset")
    return [site - 1 for site in sites]


def _bloch_components(
    dataset: RandomizedDataset, records: slice, columns: list[int], axes: list[Axis]
) -> np.ndarray:
    """b[r, m, j] = 3 <s| u_j sigma^{axes[j]} u_j^dagger |s> for the chosen records."""
    u = dataset.unitary_stack[records][:, columns]
    sigma = np.stack([PAULI[Axis(axis)] for axis in axes]) if axes else np.zeros((0, 2, 2))
    diagonal = 3 * np.einsum("rksa,kab,rksb->rks", u, sigma, u.conj()).real
    shots = dataset.shot_stack[records][:, :, columns]
    return np.where(shots == 0, diagonal[:, None, :, 0], diagonal[:, None, :, 1])


def _map_records(dataset: RandomizedDataset, compute) -> np.ndarray:
    """Apply ``compute`` to fixed chunks of records and stack the results in order."""
    chunks = [
        slice(start, min(start + RECORD_CHUNK, dataset.n_u))
        for start in range(0, dataset.n_u, RECORD_CHUNK)
    ]
    return np.concatenate(parallel_map(compute, chunks), axis=0)


# ============================================================================
# FCS and PDF
# ============================================================================


@dataclass(frozen=True)
class FCSCurve:
    axis: Axis
    subsystem: SubsystemSpec
    alpha_grid: np.ndarray
    values: np.ndarray
    stderr_re: np.ndarray
    stderr_im: np.ndarray
    n_unitaries: int
    windows: tuple[SubsystemSpec, ...] = field(default=())

    @property
    def n_a(self) -> int:
        return self.windows[0].size if self.windows else self.subsystem.size


@dataclass(frozen=True)
class PDFEstimate:
    axis: Axis
    subsystem: SubsystemSpec
    outcomes: np.ndarray
    probabilities: np.ndarray
    stderr: np.ndarray
    n_unitaries: int
    windows: tuple[SubsystemSpec, ...] = field(default=())


def default_alpha_grid(n_a: int, points: int = 65, alpha_max: float | None = None) -> np.ndarray:
    """Evenly spaced grid over one period: [0, pi] for even N_A, [0, 2 pi] for odd."""
    if points < 2:
        raise InputError(f"An alpha grid needs at least 2 points, got {points}")
    if alpha_max is None:
        alpha_max = math.pi if n_a % 2 == 0 else 2 * math.pi
    return np.linspace(0.0, alpha_max, points)


def _check_grid(alpha_grid) -> np.ndarray:
    grid = np.asarray(alpha_grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise InputError("Alpha grid is empty")
    if np.any(np.diff(grid) <= 0):
        raise InputError("Alpha grid must be strictly increasing")
    return grid


def _fcs_per_unitary(
    dataset: RandomizedDataset, subsystem: SubsystemSpec, axis: Axis, grid: np.ndarray
) -> np.ndarray:
    """(n_u, len(grid)) per-unitary FCS estimates."""
    subsystem.check_within(dataset.n_qubits)
    columns = _columns(dataset, subsystem.sites)
    axes = [axis] * len(columns)
    cos = np.cos(grid)[:, None, None, None]
    sin = np.sin(grid)[:, None, None, None]

    def compute(records: slice) -> np.ndarray:
        b = _bloch_components(dataset, records, columns, axes)
        per_shot = np.prod(cos + 1j * sin * b[None], axis=-1)
        return per_shot.mean(axis=-1).T

    return _map_records(dataset, compute)


def _pdf_per_unitary(
    dataset: RandomizedDataset, subsystem: SubsystemSpec, axis: Axis
) -> np.ndarray:
    """(n_u, N_A + 1) per-unitary PDF estimates in increasing q."""
    subsystem.check_within(dataset.n_qubits)
    columns = _columns(dataset, subsystem.sites)
    axes = [axis] * len(columns)

    def compute(records: slice) -> np.ndarray:
        b = _bloch_components(dataset, records, columns, axes)
        plus, minus = (1 + b) / 2, (1 - b) / 2
        # distribution over the number of minus outcomes, site by site
        counts = np.zeros(b.shape[:2] + (len(columns) + 1,))
        counts[..., 0] = 1.0
        for j in range(len(columns)):
            shifted = counts[..., :-1] * minus[..., j, None]
            counts = counts * plus[..., j, None]
            counts[..., 1:] += shifted
        return counts.mean(axis=1)[:, ::-1]

    return _map_records(dataset, compute)


def estimate_fcs(
    dataset: RandomizedDataset,
    subsystem: SubsystemSpec,
    axis: Axis,
    alpha_grid=None,
    *,
    error_method: str = "stderr",
    jackknife_blocks: int | None = None,
) -> FCSCurve:
    """chi(alpha) = Tr[rho_A exp(i alpha S_A^mu)] on a grid of alpha.

    Args:
        dataset: Randomized-measurement dataset
        subsystem: Sites of A
        axis: Spin axis mu
        alpha_grid: Strictly increasing radians; defaults to one period
        error_method: 'stderr' or 'jackknife' over unitaries
        jackknife_blocks: Block count of the jackknife

    Returns:
        FCSCurve with separate error bars on the real and imaginary parts

    Raises:
        InputError: If the grid is empty or unsorted or A leaves the chain
    """
    axis = Axis(axis)
    grid = _check_grid(
        default_alpha_grid(subsystem.size) if alpha_grid is None else alpha_grid
    )
    per_unitary = _fcs_per_unitary(dataset, subsystem, axis, grid)
    stderr_re, stderr_im = complex_error_bars(per_unitary, error_method, jackknife_blocks)
    logger.debug(f"Estimated FCS on {subsystem} along {axis.value} at {grid.size} points")
    return FCSCurve(
        axis=axis,
        subsystem=subsystem,
        alpha_grid=grid,
        values=per_unitary.mean(axis=0),
        stderr_re=stderr_re,
        stderr_im=stderr_im,
        n_unitaries=dataset.n_u,
    )


def estimate_pdf(
    dataset: RandomizedDataset,
    subsystem: SubsystemSpec,
    axis: Axis,
    *,
    error_method: str = "stderr",
    jackknife_blocks: int | None = None,
) -> PDFEstimate:
    """p(q) = Tr[rho_A Pi_q] for every eigenvalue q of S_A^mu, unclipped."""
    axis = Axis(axis)
    per_unitary = _pdf_per_unitary(dataset, subsystem, axis)
    return PDFEstimate(
        axis=axis,
        subsystem=subsystem,
        outcomes=outcomes(subsystem.size),
        probabilities=per_unitary.mean(axis=0),
        stderr=error_bars(per_unitary, error_method, jackknife_blocks),
        n_unitaries=dataset.n_u,
    )


def project_to_simplex(probabilities) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    values = np.asarray(probabilities, dtype=float)
    ordered = np.sort(values)[::-1]
    cumulative = np.cumsum(ordered) - 1
    ranks = np.arange(1, values.size + 1)
    last = np.nonzero(ordered - cumulative / ranks > 0)[0][-1]
    return np.clip(values - cumulative[last] / (last + 1), 0.0, None)


# ============================================================================
# Pauli strings and moments
# ============================================================================


def _pauli_per_unitary(dataset: RandomizedDataset, observable: PauliString) -> np.ndarray:
    columns = _columns(dataset, observable.sites)
    if not columns:
        return np.ones(dataset.n_u)
    axes = list(observable.terms.values())

    def compute(records: slice) -> np.ndarray:
        b = _bloch_components(dataset, records, columns, axes)
        return np.prod(b, axis=-1).mean(axis=-1)

    return _map_records(dataset, compute)


def estimate_pauli_expectation(
    dataset: RandomizedDataset,
    observable: PauliString,
    *,
    error_method: str = "stderr",
    jackknife_blocks: int | None = None,
) -> tuple[float, float]:
    """(value, stderr) of a Pauli string; the identity string gives (1, 0)."""
    per_unitary = _pauli_per_unitary(dataset, observable)
    stderr = error_bars(per_unitary, error_method, jackknife_blocks)
    return float(per_unitary.mean()), float(stderr)


@dataclass(frozen=True)
class MagnetizationMoments:
    axis: Axis
    subsystem: SubsystemSpec
    mean: float
    mean_stderr: float
    second: float
    second_stderr: float
    n_unitaries: int
    windows: tuple[SubsystemSpec, ...] = field(default=())

    @property
    def variance(self) -> float:
        return self.second - self.mean**2


def _moments_per_unitary(
    dataset: RandomizedDataset, subsystem: SubsystemSpec, axis: Axis
) -> np.ndarray:
    """(n_u, 2) per-unitary estimates of <S_A^mu> and <(S_A^mu)^2>."""
    subsystem.check_within(dataset.n_qubits)
    columns = _columns(dataset, subsystem.sites)
    n_a = len(columns)

    def compute(records: slice) -> np.ndarray:
        b = _bloch_components(dataset, records, columns, [axis] * n_a)
        first = b.sum(axis=-1)
        second = n_a + first**2 - (b**2).sum(axis=-1)
        return np.stack([first.mean(axis=-1), second.mean(axis=-1)], axis=-1)

    return _map_records(dataset, compute)


def estimate_magnetization_moments(
    dataset: RandomizedDataset,
    subsystem: SubsystemSpec,
    axis: Axis,
    *,
    error_method: str = "stderr",
    jackknife_blocks: int | None = None,
) -> MagnetizationMoments:
    """<S_A^mu> and <(S_A^mu)^2> = N_A + 2 sum_{i<j} <sigma_i sigma_j>, per unitary."""
    axis = Axis(axis)
    per_unitary = _moments_per_unitary(dataset, subsystem, axis)
    stderr = error_bars(per_unitary, error_method, jackknife_blocks)
    mean = per_unitary.mean(axis=0)
    return MagnetizationMoments(
        axis=axis,
        subsystem=subsystem,
        mean=float(mean[0]),
        mean_stderr=float(stderr[0]),
        second=float(mean[1]),
        second_stderr=float(stderr[1]),
        n_unitaries=dataset.n_u,
    )


@dataclass(frozen=True)
class PauliTermEstimate:
    observable: PauliString
    value: float
    stderr: float


def expand_fcs_terms(
    dataset: RandomizedDataset,
    subsystem: SubsystemSpec,
    axis: Axis,
    *,
    error_method: str = "stderr",
    jackknife_blocks: int | None = None,
) -> list[PauliTermEstimate]:
    """Estimates of all 2^N_A strings prod_{j in K} sigma_j^mu, K a subset of A."""
    axis = Axis(axis)
    subsystem.check_within(dataset.n_qubits)
    if subsystem.size > MAX_PROPAGATION_SITES:
        raise InputError(
            f"Term expansion supports at most {MAX_PROPAGATION_SITES} sites, got {subsystem.size}"
        )
    columns = _columns(dataset, subsystem.sites)
    positions = range(len(columns))
    subsets = [s for size in range(len(columns) + 1) for s in combinations(positions, size)]

    def compute(records: slice) -> np.ndarray:
        b = _bloch_components(dataset, records, columns, [axis] * len(columns))
        return np.stack(
            [np.prod(b[..., list(subset)], axis=-1).mean(axis=-1) for subset in subsets], axis=-1
        )

    per_unitary = _map_records(dataset, compute)
    values = per_unitary.mean(axis=0)
    stderr = error_bars(per_unitary, error_method, jackknife_blocks)
    return [
        PauliTermEstimate(
            observable=PauliString.uniform([subsystem.sites[k] for k in subset], axis),
            value=float(values[index]),
            stderr=float(stderr[index]),
        )
        for index, subset in enumerate(subsets)
    ]


_I_POWERS = (1, 1j, -1, -1j)


def _term_weights(terms: list[PauliTermEstimate], axis: Axis, alpha) -> tuple[np.ndarray, int]:
    """Weights i^k cos^{N_A-k}(alpha) sin^k(alpha), one row per term."""
    axis = Axis(axis)
    if not terms:
        raise InputError("No Pauli terms supplied")
    sites = sorted(set().union(*(term.observable.sites for term in terms)))
    n_a = len(sites)
    if n_a > MAX_PROPAGATION_SITES:
        raise InputError(
            f"Error propagation supports at most {MAX_PROPAGATION_SITES} sites, got {n_a}"
        )
    for term in terms:
        if any(a != axis for a in term.observable.terms.values()):
            raise InputError(f"Term {term.observable.label()} is not a pure {axis.value} string")
    supports = {term.observable.sites for term in terms}
    expected = {subset for size in range(n_a + 1) for subset in combinations(sites, size)}
    if len(terms) != 2**n_a or supports != expected:
        raise InputError(
            f"Expected the {2**n_a} terms of the product expansion on sites {sites}, "
            f"got {len(terms)} terms"
        )

    alpha = np.asarray(alpha, dtype=float)
    cos, sin = np.cos(alpha), np.sin(alpha)
    weights = np.stack(
        [
            _I_POWERS[term.observable.weight % 4]
            * cos ** (n_a - term.observable.weight)
            * sin**term.observable.weight
            for term in terms
        ]
    )
    return weights, n_a


def fcs_from_terms(terms: list[PauliTermEstimate], axis: Axis, alpha):
    """chi(alpha) = sum_K i^|K| cos^{N_A-|K|} sin^|K| <prod_{j in K} sigma_j^mu>."""
    weights, _ = _term_weights(terms, axis, alpha)
    values = np.array([term.value for term in terms])
    result = np.tensordot(values, weights, axes=(0, 0))
    return complex(result) if np.ndim(result) == 0 else result


def propagate_fcs_error(terms: list[PauliTermEstimate], axis: Axis, alpha):
    """Quadrature propagation of per-term error bars onto Re and Im of chi.

    Args:
        terms: All 2^N_A strings of the product expansion, as from expand_fcs_terms
        axis: Spin axis of the strings
        alpha: Scalar or array of radians

    Returns:
        (stderr_re, stderr_im), floats for a scalar alpha, arrays otherwise

    Raises:
        InputError: If the term set is incomplete, mixed-axis or N_A > 6
    """
    weights, _ = _term_weights(terms, axis, alpha)
    eta2 = np.array([term.stderr for term in terms]) ** 2
    stderr_re = np.sqrt(np.tensordot(eta2, weights.real**2, axes=(0, 0)))
    stderr_im = np.sqrt(np.tensordot(eta2, weights.imag**2, axes=(0, 0)))
    if np.ndim(stderr_re) == 0:
        return float(stderr_re), float(stderr_im)
    return stderr_re, stderr_im


# ============================================================================
# Bulk averaging
# ============================================================================


def bulk_windows(n_qubits: int, n_a: int, edge: int = 1) -> list[SubsystemSpec]:
    """Contiguous windows of length n_a that avoid ``edge`` sites at both ends."""
    if n_a < 1 or n_a >= n_qubits:
        raise InputError(f"Window length must lie in [1, {n_qubits - 1}], got {n_a}")
    if edge < 0:
        raise InputError(f"Edge exclusion must be non-negative, got {edge}")
    starts = range(1 + edge, n_qubits - edge - n_a + 2)
    if not starts:
        raise InputError(
            f"No window of length {n_a} fits in {n_qubits} sites excluding {edge} per edge"
        )
    return [SubsystemSpec.window(start, n_a) for start in starts]


def _window_error_bars(
    per_window: np.ndarray, error_method: str, jackknife_blocks: int | None
) -> np.ndarray:
    """Error bars of a (W, N_u, ...) real array of per-window, per-unitary values.

    With 'stderr' all W x N_u values are pooled; the jackknife resamples
    unitaries of the window-averaged estimates.
    """
    if error_method == "stderr":
        return error_bars(per_window.reshape((-1,) + per_window.shape[2:]), "stderr")
    return error_bars(per_window.mean(axis=0), error_method, jackknife_blocks)


def average_bulk_subsystems(
    dataset: RandomizedDataset,
    n_a: int,
    axis: Axis,
    target: Literal["fcs", "pdf", "moments"] = "fcs",
    alpha_grid=None,
    *,
    edge: int = 1,
    error_method: str = "stderr",
    jackknife_blocks: int | None = None,
) -> FCSCurve | PDFEstimate | MagnetizationMoments:
    """Average the FCS, PDF or moments over every bulk window of length n_a."""
    axis = Axis(axis)
    windows = bulk_windows(dataset.n_qubits, n_a, edge)
    span = SubsystemSpec(
        sites=tuple(range(windows[0].sites[0], windows[-1].sites[-1] + 1))
    )
    logger.info(f"Averaging {target} over {len(windows)} windows of {n_a} sites")

    if target == "fcs":
        grid = _check_grid(default_alpha_grid(n_a) if alpha_grid is None else alpha_grid)
        per_window = np.stack([_fcs_per_unitary(dataset, w, axis, grid) for w in windows])
        return FCSCurve(
            axis=axis,
            subsystem=span,
            alpha_grid=grid,
            values=per_window.mean(axis=(0, 1)),
            stderr_re=_window_error_bars(per_window.real, error_method, jackknife_blocks),
            stderr_im=_window_error_bars(per_window.imag, error_method, jackknife_blocks),
            n_unitaries=dataset.n_u,
            windows=tuple(windows),
        )
    if target == "pdf":
        per_window = np.stack([_pdf_per_unitary(dataset, w, axis) for w in windows])
        return PDFEstimate(
            axis=axis,
            subsystem=span,
            outcomes=outcomes(n_a),
            probabilities=per_window.mean(axis=(0, 1)),
            stderr=_window_error_bars(per_window, error_method, jackknife_blocks),
            n_unitaries=dataset.n_u,
            windows=tuple(windows),
        )
    if target == "moments":
        per_window = np.stack([_moments_per_unitary(dataset, w, axis) for w in windows])
        mean = per_window.mean(axis=(0, 1))
        stderr = _window_error_bars(per_window, error_method, jackknife_blocks)
        return MagnetizationMoments(
            axis=axis,
            subsystem=span,
            mean=float(mean[0]),
            mean_stderr=float(stderr[0]),
            second=float(mean[1]),
            second_stderr=float(stderr[1]),
            n_unitaries=dataset.n_u,
            windows=tuple(windows),
        )
    raise InputError(f"Unknown bulk-average target '{target}'; use 'fcs', 'pdf' or 'moments'")


# ============================================================================
# Cumulants and tomography
# ============================================================================


def cumulants_from_fcs(curve: FCSCurve, window: float = CUMULANT_WINDOW) -> tuple[float, float]:
    """(mean, variance) from the expansion of log chi near alpha = 0.

    log|chi| is even in alpha and fitted with 1, alpha^2, alpha^4; the phase
    is odd and fitted with alpha, alpha^3. The alpha^4 and alpha^3 terms carry
    the fourth and third cumulants.

    Points with negative alpha are filled in from chi(-alpha) = conj(chi(alpha)).
    """
    points = {}
    for alpha, value in zip(curve.alpha_grid, curve.values):
        if abs(alpha) <= window:
            points[float(alpha)] = complex(value)
            points.setdefault(-float(alpha), complex(value).conjugate())
    if len(points) < MIN_CUMULANT_POINTS:
        raise InputError(
            f"Only {len(points)} points with |alpha| <= {window}; "
            f"need at least {MIN_CUMULANT_POINTS}"
        )
    alphas = np.array(sorted(points))
    values = np.array([points[a] for a in alphas])
    if np.any(np.abs(values) == 0):
        raise InputError("FCS vanishes inside the fit window")

    phase = np.unwrap(np.angle(values))
    # anchor the branch at the point closest to alpha = 0
    phase -= 2 * np.pi * np.round(phase[np.argmin(np.abs(alphas))] / (2 * np.pi))
    even = polynomial.polyfit(alphas, np.log(np.abs(values)), [0, 2, 4])
    odd = polynomial.polyfit(alphas, phase, [1, 3])
    return float(odd[1]), float(-2 * even[2])


def reconstruct_density_matrix(
    dataset: RandomizedDataset, subsystem: SubsystemSpec
) -> DensityMatrix:
    """Average of the dense snapshots; unbiased but not necessarily positive."""
    subsystem.check_within(dataset.n_qubits)
    check_capacity(subsystem.size)
    columns = _columns(dataset, subsystem.sites)

    def compute(records: slice) -> np.ndarray:
        u = dataset.unitary_stack[records][:, columns]
        shots = dataset.shot_stack[records][:, :, columns]
        total = None
        for j in range(len(columns)):
            # u^dagger|s> is the conjugated row s of u
            kets = np.where(
                shots[..., j, None] == 0, u[:, None, j, 0, :], u[:, None, j, 1, :]
            ).conj()
            site = 3 * np.einsum("rma,rmb->rmab", kets, kets.conj()) - IDENTITY
            if total is None:
                total = site
                continue
            dim = total.shape[-1] * 2
            total = np.einsum("rmab,rmcd->rmacbd", total, site).reshape(
                site.shape[:2] + (dim, dim)
            )
        return total.sum(axis=(0, 1))[None]

    summed = _map_records(dataset, compute).sum(axis=0)
    return DensityMatrix(subsystem.sites, summed / (dataset.n_u * dataset.n_m))
