import math

import numpy as np
import pytest

from shadowfcs.models.schemas import QuenchConfig, SubsystemSpec
from shadowfcs.services.dynamics import build_xy_hamiltonian, evolve, prepare_neel
from shadowfcs.services.randmeas import acquire_dataset
from shadowfcs.services.spincore import StateVector
from shadowfcs.workers import close_pool, set_thread_count

# J0 * t = 0.42 for the default J0 = 420 rad/s
NEEL6_TIME_MS = 1.0


@pytest.fixture(autouse=True)
def reset_workers():
    """Every test starts from the environment thread count and ends with no pool."""
    set_thread_count(None)
    yield
    set_thread_count(None)
    close_pool()


@pytest.fixture(scope="session")
def neel6_state() -> StateVector:
    """Neel state on 6 sites evolved under the case-I couplings to J0 t = 0.42."""
    h = build_xy_hamiltonian(QuenchConfig(n_qubits=6))
    return evolve(prepare_neel(6), h, NEEL6_TIME_MS)


@pytest.fixture(scope="session")
def neel6_dataset(neel6_state):
    """Large ideal acquisition on the evolved 6-site Neel state."""
    return acquire_dataset(neel6_state, 2000, 100, 20240611, state_descriptor="neel")


@pytest.fixture(scope="session")
def small_dataset(neel6_state):
    """Cheap acquisition for algebraic identities that hold for any data."""
    return acquire_dataset(neel6_state, 40, 25, 7)


@pytest.fixture
def subsystem_34() -> SubsystemSpec:
    return SubsystemSpec.parse("3:4")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def random_state(n: int, rng: np.random.Generator) -> StateVector:
    amplitudes = rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)
    return StateVector(n, amplitudes / np.linalg.norm(amplitudes))


ALPHA_GRID = np.linspace(0.0, math.pi, 65)
