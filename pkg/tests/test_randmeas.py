import math

import numpy as np
import pytest
from scipy.stats import chisquare, kstest

from shadowfcs.errors import InputError
from shadowfcs.models.schemas import DatasetMetadata
from shadowfcs.services.dynamics import prepare_neel, prepare_tilted_ferromagnet
from shadowfcs.services.randmeas import (
    IDENTITY_UNITARY,
    LocalUnitary,
    RandomizedDataset,
    acquire_dataset,
    outcome_probabilities,
    record_stream,
    ry,
    rz,
    sample_cue_unitary,
    uniformity_histogram,
    zyz_decompose,
)
from shadowfcs.services.spincore import StateVector, full_density_matrix
from shadowfcs.workers import set_thread_count


class TestZYZ:
    def test_reconstructs_sampled_unitaries(self):
        """exp(i phase) Rz(z1) Ry(y) Rz(z2) rebuilds every sampled matrix."""
        rng = np.random.default_rng(5)
        for _ in range(200):
            u = sample_cue_unitary(rng)
            z1, y, z2, phase = zyz_decompose(u)
            rebuilt = np.exp(1j * phase) * rz(z1) @ ry(y) @ rz(z2)
            np.testing.assert_allclose(rebuilt, u.matrix, atol=1e-12)
            assert 0.0 <= y <= math.pi

    @pytest.mark.parametrize(
        "matrix",
        [
            np.eye(2),
            np.array([[0, 1], [1, 0]]),
            np.array([[1, 0], [0, -1]]),
            np.array([[0, -1j], [1j, 0]]),
            np.array([[1, 1], [1, -1]]) / math.sqrt(2),
        ],
    )
    def test_degenerate_angles(self, matrix):
        """Diagonal and anti-diagonal matrices still decompose exactly."""
        z1, y, z2, phase = zyz_decompose(matrix)
        rebuilt = np.exp(1j * phase) * rz(z1) @ ry(y) @ rz(z2)
        np.testing.assert_allclose(rebuilt, matrix, atol=1e-12)

    def test_rejects_non_unitary(self):
        with pytest.raises(InputError):
            zyz_decompose(np.array([[1, 1], [0, 1]]))


class TestLocalUnitary:
    def test_matrix_is_read_only(self):
        u = LocalUnitary.from_matrix(np.eye(2))
        with pytest.raises(ValueError):
            u.matrix[0, 0] = 2

    def test_rejects_non_unitary(self):
        with pytest.raises(InputError):
            LocalUnitary(np.array([[2, 0], [0, 1]]))


class TestCUESampling:
    def test_samples_are_unitary(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            u = sample_cue_unitary(rng).matrix
            np.testing.assert_allclose(u.conj().T @ u, np.eye(2), atol=1e-12)

    def test_haar_marginal(self):
        """|u_00|^2 of a Haar-random 2x2 unitary is uniform on [0, 1]."""
        rng = np.random.default_rng(11)
        weights = [abs(sample_cue_unitary(rng).matrix[0, 0]) ** 2 for _ in range(5000)]
        assert kstest(weights, "uniform").pvalue > 1e-3

    def test_record_streams_are_independent_of_order(self):
        """Stream r is the same whether or not other streams were used before."""
        first = record_stream(3, 7).standard_normal(4)
        record_stream(3, 6).standard_normal(100)
        again = record_stream(3, 7).standard_normal(4)
        np.testing.assert_array_equal(first, again)
        assert not np.array_equal(first, record_stream(3, 8).standard_normal(4))


class TestOutcomeProbabilities:
    def test_pure_and_mixed_agree(self):
        """Born probabilities of |psi> and |psi><psi| coincide."""
        rng = np.random.default_rng(2)
        state = prepare_tilted_ferromagnet(3, 0.3 * math.pi)
        unitaries = [sample_cue_unitary(rng) for _ in range(3)]
        np.testing.assert_allclose(
            outcome_probabilities(state, unitaries),
            outcome_probabilities(full_density_matrix(state), unitaries),
            atol=1e-12,
        )

    def test_identity_unitaries_measure_z(self):
        """Without rotation the Neel state gives its own bitstring with certainty."""
        probabilities = outcome_probabilities(prepare_neel(3), [IDENTITY_UNITARY] * 3)
        assert probabilities[0b010] == pytest.approx(1.0)

    def test_wrong_number_of_unitaries(self):
        with pytest.raises(InputError):
            outcome_probabilities(prepare_neel(3), [IDENTITY_UNITARY] * 2)


class TestAcquisition:
    def test_identity_sampler_on_all_up_state(self):
        """|up...up> measured without rotation yields only all-0 bitstrings."""
        state = StateVector(3, np.eye(8)[0])
        dataset = acquire_dataset(state, 5, 20, 1, sampler=lambda rng: IDENTITY_UNITARY)
        assert not dataset.shot_stack.any()

    def test_shape_and_metadata(self):
        dataset = acquire_dataset(prepare_neel(4), 12, 9, 3, state_descriptor="neel", time_ms=0.5)
        assert dataset.shot_stack.shape == (12, 9, 4)
        assert dataset.unitary_stack.shape == (12, 4, 2, 2)
        assert [record.r for record in dataset.records] == list(range(12))
        assert dataset.metadata.state_descriptor == "neel"
        assert dataset.metadata.time_ms == 0.5
        assert dataset.metadata.schema_tag == "rm-dataset/1"

    def test_deterministic_for_any_thread_count(self):
        """The dataset depends on the seed only, not on how records are scheduled."""
        state = prepare_tilted_ferromagnet(3, 0.4 * math.pi)
        set_thread_count(1)
        serial = acquire_dataset(state, 30, 10, 42)
        set_thread_count(4)
        threaded = acquire_dataset(state, 30, 10, 42)
        np.testing.assert_array_equal(serial.shot_stack, threaded.shot_stack)
        np.testing.assert_array_equal(serial.unitary_stack, threaded.unitary_stack)

    def test_seed_changes_the_data(self):
        state = prepare_neel(3)
        a = acquire_dataset(state, 10, 10, 1)
        b = acquire_dataset(state, 10, 10, 2)
        assert not np.array_equal(a.unitary_stack, b.unitary_stack)

    def test_shots_follow_born_probabilities(self):
        """10^5 shots after one unitary pass a chi-square test against the Born vector."""
        state = prepare_tilted_ferromagnet(2, 0.3 * math.pi)
        dataset = acquire_dataset(state, 1, 100_000, 9)
        record = dataset.records[0]
        probabilities = outcome_probabilities(state, record.unitaries)
        index = record.shots[:, 0].astype(int) * 2 + record.shots[:, 1]
        observed = np.bincount(index, minlength=4)
        assert chisquare(observed, probabilities * 100_000).pvalue > 1e-3

    @pytest.mark.parametrize("n_u, n_m", [(0, 5), (5, 0)])
    def test_rejects_empty_acquisition(self, n_u, n_m):
        with pytest.raises(InputError):
            acquire_dataset(prepare_neel(2), n_u, n_m, 0)

    def test_dataset_checks_record_count(self):
        dataset = acquire_dataset(prepare_neel(2), 3, 4, 0)
        metadata = DatasetMetadata(n_qubits=2, n_u=4, n_m=4, seed=0)
        with pytest.raises(InputError):
            RandomizedDataset(metadata=metadata, records=dataset.records)


class TestUniformity:
    def test_pooled_histogram_is_flat(self):
        """Up counts per unitary are uniform over 0..N_M for Haar rotations of a pure state."""
        dataset = acquire_dataset(prepare_tilted_ferromagnet(3, 0.3 * math.pi), 2000, 30, 17)
        histogram = uniformity_histogram(dataset)
        assert histogram.pooled.sum() == 2000 * 3
        assert histogram.per_site.shape == (3, 31)
        assert histogram.flatness_pvalue() > 1e-3

    def test_identity_rotations_are_not_flat(self):
        """Unrotated z measurements of |up...up> pile up at m = N_M."""
        state = StateVector(2, np.eye(4)[0])
        dataset = acquire_dataset(state, 50, 10, 1, sampler=lambda rng: IDENTITY_UNITARY)
        histogram = uniformity_histogram(dataset)
        assert histogram.pooled[10] == 100
        assert histogram.flatness_pvalue() < 1e-3
