"""Exact and closed-form FCS, PDF and parity values.

Exact values come from dense density matrices; closed forms cover the
product states the experiments start from.
"""

import math
from functools import reduce
from typing import NamedTuple

import numpy as np
from scipy.special import comb

from shadowfcs.errors import InputError
from shadowfcs.models.schemas import Axis, ClosedFormSpec
from shadowfcs.services.spincore import (
    EIGENBASIS,
    DensityMatrix,
    check_outcome,
    down_counts,
    outcomes,
    phase_operator,
)

RANK_TOL = 1e-9


class Distribution(NamedTuple):
    """Probabilities over the eigenvalues q of S_A^mu, increasing q."""

    outcomes: np.ndarray
    probabilities: np.ndarray

    def probability(self, q: int) -> float:
        n_a = self.outcomes.size - 1
        return float(self.probabilities[n_a - check_outcome(n_a, q)])


# ============================================================================
# Exact values from density matrices
# ============================================================================


def exact_fcs(rho: DensityMatrix, axis: Axis, alpha: float) -> complex:
    """Tr[rho exp(i alpha S^mu)] as a dense trace."""
    operator = phase_operator(rho.n_qubits, Axis(axis), alpha)
    return complex(np.einsum("ij,ji->", rho.entries, operator))


def exact_pdf(rho: DensityMatrix, axis: Axis) -> Distribution:
    """p(q) from the diagonal of rho in the product eigenbasis of sigma^mu."""
    n = rho.n_qubits
    rotation = reduce(np.kron, [EIGENBASIS[Axis(axis)]] * n)
    diagonal = np.real(np.einsum("ji,jk,ki->i", rotation.conj(), rho.entries, rotation))
    by_minus_count = np.bincount(down_counts(n), weights=diagonal, minlength=n + 1)
    return Distribution(outcomes(n), by_minus_count[::-1])


def exact_fcs_curve(rho: DensityMatrix, axis: Axis, alpha_grid) -> np.ndarray:
    """chi on a grid via chi(alpha) = sum_q p(q) exp(i alpha q)."""
    distribution = exact_pdf(rho, axis)
    grid = np.asarray(alpha_grid, dtype=float)
    return np.exp(1j * np.multiply.outer(grid, distribution.outcomes)) @ distribution.probabilities


def exact_moments(rho: DensityMatrix, axis: Axis) -> tuple[float, float]:
    """(<S^mu>, <(S^mu)^2>)."""
    q, p = exact_pdf(rho, axis)
    return float(q @ p), float(q**2 @ p)


def fcs_to_pdf(alpha_grid, values, n_a: int) -> Distribution:
    """Invert chi(alpha) = sum_q p(q) exp(i alpha q) by least squares.

    Raises:
        InputError: If the grid does not determine all N_A + 1 probabilities
    """
    grid = np.asarray(alpha_grid, dtype=float).reshape(-1)
    values = np.asarray(values, dtype=complex).reshape(-1)
    if grid.size != values.size:
        raise InputError(f"Got {grid.size} grid points but {values.size} FCS values")
    q = outcomes(n_a)
    design = np.exp(1j * np.multiply.outer(grid, q))
    rank = np.linalg.matrix_rank(design, tol=RANK_TOL)
    if rank < q.size:
        raise InputError(
            f"Alpha grid determines only {rank} of the {q.size} probabilities for N_A={n_a}"
        )
    solution, *_ = np.linalg.lstsq(design, values, rcond=None)
    return Distribution(q, solution.real)


# ============================================================================
# Closed forms
# ============================================================================


def _neel_signs(spec: ClosedFormSpec) -> np.ndarray:
    """+1 for up (odd chain sites), -1 for down (even chain sites)."""
    sites = np.arange(spec.first_site, spec.first_site + spec.n_a)
    return np.where(sites % 2 == 1, 1.0, -1.0)


def _binomial(n: int, q: int, p_plus: float) -> float:
    minus = check_outcome(n, q)
    return float(comb(n, minus, exact=True) * p_plus ** (n - minus) * (1 - p_plus) ** minus)


def _product_pdf(spec: ClosedFormSpec, q: int, p_plus: np.ndarray) -> float:
    minus = check_outcome(spec.n_a, q)
    counts = np.zeros(spec.n_a + 1)
    counts[0] = 1.0
    for p in p_plus:
        counts[1:] = counts[1:] * p + counts[:-1] * (1 - p)
        counts[0] *= p
    return float(counts[minus])


def _neel_fcs_x(spec, alpha):
    return np.cos(alpha) ** spec.n_a + 0j


def _neel_pdf_x(spec, q):
    return _binomial(spec.n_a, q, 0.5)


def _neel_bitflip_fcs_z(spec, alpha):
    contrast = _neel_signs(spec) * (1 - 2 * np.asarray(spec.rates))
    alpha = np.asarray(alpha, dtype=float)
    factors = np.cos(alpha)[..., None] + 1j * np.sin(alpha)[..., None] * contrast
    return np.prod(factors, axis=-1)


def _neel_bitflip_pdf_z(spec, q):
    contrast = _neel_signs(spec) * (1 - 2 * np.asarray(spec.rates))
    return _product_pdf(spec, q, (1 + contrast) / 2)


def _tilted_fcs_z(spec, alpha):
    return (np.cos(alpha) - 1j * np.sin(alpha) * math.cos(spec.theta)) ** spec.n_a


def _tilted_fcs_x(spec, alpha):
    return (np.cos(alpha) + 1j * np.sin(alpha) * math.sin(spec.theta)) ** spec.n_a


def _tilted_pdf_z_halfpi(spec, q):
    return _binomial(spec.n_a, q, 0.5)


def _tilted_pdf_z(spec, q):
    return _binomial(spec.n_a, q, (1 - math.cos(spec.theta)) / 2)


def _tilted_pdf_x(spec, q):
    return _binomial(spec.n_a, q, (1 + math.sin(spec.theta)) / 2)


def _parity(spec, _value):
    if spec.axis == Axis.Y:
        return 0.0
    if spec.state == "neel":
        return float(np.prod(_neel_signs(spec))) if spec.axis == Axis.Z else 0.0
    if spec.axis == Axis.Z:
        return (-math.cos(spec.theta)) ** spec.n_a
    return math.sin(spec.theta) ** spec.n_a


_FAMILIES = {
    "neel_fcs_x": _neel_fcs_x,
    "neel_pdf_x": _neel_pdf_x,
    "neel_bitflip_fcs_z": _neel_bitflip_fcs_z,
    "neel_bitflip_pdf_z": _neel_bitflip_pdf_z,
    "tilted_fcs_z": _tilted_fcs_z,
    "tilted_fcs_x": _tilted_fcs_x,
    "tilted_pdf_z_halfpi": _tilted_pdf_z_halfpi,
    "tilted_pdf_z": _tilted_pdf_z,
    "tilted_pdf_x": _tilted_pdf_x,
    "parity": _parity,
}


def closed_form(spec: ClosedFormSpec, value=None):
    """Evaluate a closed-form family.

    Args:
        spec: Family and its parameters
        value: alpha (scalar or array) for FCS families, q for PDF families,
            unused for parity

    Returns:
        complex (or complex array) for FCS families, float otherwise

    Raises:
        InputError: If the family is unknown, the argument is missing or q is
            not an eigenvalue of S_A
    """
    family = _FAMILIES.get(spec.family)
    if family is None:
        raise InputError(f"Unknown closed-form family '{spec.family}'")
    if spec.kind != "parity" and value is None:
        argument = "alpha" if spec.kind == "fcs" else "q"
        raise InputError(f"Family '{spec.family}' needs an {argument}")
    if spec.kind == "pdf":
        value = int(value)
    result = family(spec, value)
    if spec.kind == "fcs" and np.ndim(result) == 0:
        return complex(result)
    return result


def closed_form_pdf(spec: ClosedFormSpec) -> Distribution:
    """All outcomes of a PDF family."""
    if spec.kind != "pdf":
        raise InputError(f"Family '{spec.family}' is not a PDF family")
    q = outcomes(spec.n_a)
    return Distribution(q, np.array([closed_form(spec, int(k)) for k in q]))
