import math

import numpy as np
import pydantic
import pytest
from conftest import ALPHA_GRID, random_state

from shadowfcs.errors import InputError
from shadowfcs.models.schemas import Axis, ClosedFormSpec, PauliString, SubsystemSpec
from shadowfcs.services.dynamics import (
    LEARNED_NEEL_RATES,
    apply_bitflip_channel,
    prepare_neel,
    prepare_tilted_ferromagnet,
)
from shadowfcs.services.oracle import (
    closed_form,
    closed_form_pdf,
    exact_fcs,
    exact_fcs_curve,
    exact_moments,
    exact_pdf,
    fcs_to_pdf,
)
from shadowfcs.services.spincore import expectation, full_density_matrix, partial_trace

THETAS = [0.0, 0.2 * math.pi, 0.5 * math.pi, 0.8 * math.pi]


def reduced(state, sites: str):
    return partial_trace(state, SubsystemSpec.parse(sites))


class TestClosedForms:
    def test_neel_fcs_x(self):
        """chi_x of the Neel state is cos^N_A(alpha)."""
        rho = reduced(prepare_neel(8), "3:6")
        spec = ClosedFormSpec(family="neel_fcs_x", n_a=4)
        exact = exact_fcs_curve(rho, Axis.X, ALPHA_GRID)
        np.testing.assert_allclose(exact, closed_form(spec, ALPHA_GRID), atol=1e-12)
        for alpha in ALPHA_GRID:
            assert abs(exact_fcs(rho, Axis.X, alpha) - math.cos(alpha) ** 4) < 1e-12

    def test_neel_pdf_x_is_binomial(self):
        """p_x of the Neel state on four sites is {1, 4, 6, 4, 1} / 16."""
        distribution = exact_pdf(reduced(prepare_neel(8), "3:6"), Axis.X)
        np.testing.assert_allclose(
            distribution.probabilities, np.array([1, 4, 6, 4, 1]) / 16, atol=1e-12
        )
        closed = closed_form_pdf(ClosedFormSpec(family="neel_pdf_x", n_a=4))
        np.testing.assert_allclose(closed.probabilities, distribution.probabilities, atol=1e-12)

    @pytest.mark.parametrize("theta", THETAS)
    def test_tilted_fcs(self, theta):
        """chi_z = (cos - i sin cos theta)^N_A and chi_x = (cos + i sin sin theta)^N_A."""
        rho = reduced(prepare_tilted_ferromagnet(6, theta), "2:5")
        for family, axis in (("tilted_fcs_z", Axis.Z), ("tilted_fcs_x", Axis.X)):
            spec = ClosedFormSpec(family=family, n_a=4, theta=theta)
            for alpha in ALPHA_GRID:
                assert abs(exact_fcs(rho, axis, alpha) - closed_form(spec, alpha)) < 1e-12

    @pytest.mark.parametrize("theta", THETAS)
    def test_tilted_pdf(self, theta):
        rho = reduced(prepare_tilted_ferromagnet(5, theta), "1:3")
        for family, axis in (("tilted_pdf_z", Axis.Z), ("tilted_pdf_x", Axis.X)):
            spec = ClosedFormSpec(family=family, n_a=3, theta=theta)
            np.testing.assert_allclose(
                closed_form_pdf(spec).probabilities,
                exact_pdf(rho, axis).probabilities,
                atol=1e-12,
            )

    def test_half_pi_pdf_needs_no_theta(self):
        """At theta = pi/2 the z PDF is the fair binomial."""
        half = closed_form_pdf(ClosedFormSpec(family="tilted_pdf_z_halfpi", n_a=4))
        general = closed_form_pdf(ClosedFormSpec(family="tilted_pdf_z", n_a=4, theta="0.5pi"))
        np.testing.assert_allclose(half.probabilities, general.probabilities, atol=1e-12)

    @pytest.mark.parametrize("theta", THETAS)
    @pytest.mark.parametrize("axis", [Axis.X, Axis.Z])
    def test_tilted_parity(self, theta, axis):
        """<P_z> = (-cos theta)^N_A and <P_x> = (sin theta)^N_A."""
        rho = reduced(prepare_tilted_ferromagnet(5, theta), "2:4")
        spec = ClosedFormSpec(family="parity", n_a=3, theta=theta, state="tilted", axis=axis)
        exact = expectation(rho, PauliString.uniform(rho.sites, axis))
        assert closed_form(spec) == pytest.approx(exact, abs=1e-12)

    @pytest.mark.parametrize("first_site", [1, 2])
    def test_neel_parity(self, first_site):
        rho = reduced(prepare_neel(6), f"{first_site}:{first_site + 2}")
        spec = ClosedFormSpec(
            family="parity", n_a=3, state="neel", axis=Axis.Z, first_site=first_site
        )
        exact = expectation(rho, PauliString.uniform(rho.sites, Axis.Z))
        assert closed_form(spec) == pytest.approx(exact, abs=1e-12)

    def test_bitflip_pdf_matches_channel(self):
        """The corrected Neel z PDF equals the PDF of the bit-flipped state."""
        rho = apply_bitflip_channel(full_density_matrix(prepare_neel(10)), LEARNED_NEEL_RATES)
        window = SubsystemSpec.parse("4:7")
        spec = ClosedFormSpec(
            family="neel_bitflip_pdf_z", n_a=4, rates=list(LEARNED_NEEL_RATES[3:7]), first_site=4
        )
        np.testing.assert_allclose(
            closed_form_pdf(spec).probabilities,
            exact_pdf(partial_trace(rho, window), Axis.Z).probabilities,
            atol=1e-12,
        )

    def test_bitflip_correction_moves_chi_z_away_from_one(self):
        """For an even Neel window chi_z is 1 ideally but not with learned bit flips."""
        ideal = ClosedFormSpec(family="neel_bitflip_fcs_z", n_a=4, rates=[0.0] * 4, first_site=4)
        corrected = ideal.model_copy(update={"rates": list(LEARNED_NEEL_RATES[3:7])})
        np.testing.assert_allclose(closed_form(ideal, ALPHA_GRID), 1.0, atol=1e-12)
        assert abs(closed_form(corrected, math.pi / 4) - 1.0) > 1e-3

    def test_fcs_at_half_pi_is_the_parity(self):
        """chi(pi/2) = i^N_A <P>."""
        theta = 0.3 * math.pi
        fcs = ClosedFormSpec(family="tilted_fcs_x", n_a=3, theta=theta)
        parity = ClosedFormSpec(family="parity", n_a=3, theta=theta, state="tilted", axis=Axis.X)
        assert closed_form(fcs, math.pi / 2) == pytest.approx(1j**3 * closed_form(parity))

    def test_outcome_with_wrong_parity(self):
        with pytest.raises(InputError):
            closed_form(ClosedFormSpec(family="neel_pdf_x", n_a=4), 1)

    def test_missing_argument(self):
        with pytest.raises(InputError):
            closed_form(ClosedFormSpec(family="neel_fcs_x", n_a=4))

    def test_missing_theta(self):
        with pytest.raises(pydantic.ValidationError):
            ClosedFormSpec(family="tilted_fcs_z", n_a=4)

    def test_rate_count(self):
        with pytest.raises(pydantic.ValidationError):
            ClosedFormSpec(family="neel_bitflip_fcs_z", n_a=4, rates=[0.1])

    def test_pdf_of_fcs_family(self):
        with pytest.raises(InputError):
            closed_form_pdf(ClosedFormSpec(family="neel_fcs_x", n_a=2))


class TestExactValues:
    @pytest.mark.parametrize("axis", list(Axis))
    def test_curve_matches_pointwise_trace(self, rng, axis):
        """The Fourier sum over the PDF equals Tr[rho exp(i alpha S)]."""
        rho = reduced(random_state(5, rng), "2:4")
        curve = exact_fcs_curve(rho, axis, ALPHA_GRID)
        pointwise = [exact_fcs(rho, axis, alpha) for alpha in ALPHA_GRID]
        np.testing.assert_allclose(curve, pointwise, atol=1e-12)

    @pytest.mark.parametrize("axis", list(Axis))
    def test_periodicity_and_conjugation(self, rng, axis):
        rho = reduced(random_state(4, rng), "1:3")
        base = exact_fcs_curve(rho, axis, ALPHA_GRID)
        np.testing.assert_allclose(
            exact_fcs_curve(rho, axis, ALPHA_GRID + math.pi), -base, atol=1e-12
        )
        np.testing.assert_allclose(exact_fcs_curve(rho, axis, -ALPHA_GRID), base.conj(), atol=1e-12)

    def test_pdf_is_normalised(self, rng):
        rho = reduced(random_state(5, rng), "1:4")
        for axis in Axis:
            distribution = exact_pdf(rho, axis)
            assert distribution.probabilities.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all(distribution.probabilities > -1e-12)

    def test_derivatives_give_the_moments(self, rng):
        """d chi / d alpha = i <S> and d^2 chi / d alpha^2 = -<S^2> at alpha = 0."""
        rho = reduced(random_state(5, rng), "2:4")
        mean, second = exact_moments(rho, Axis.X)
        h = 1e-4
        plus, zero, minus = (exact_fcs(rho, Axis.X, a) for a in (h, 0.0, -h))
        assert (plus - minus) / (2 * h) == pytest.approx(1j * mean, abs=1e-6)
        assert ((plus - 2 * zero + minus) / h**2).real == pytest.approx(-second, abs=1e-5)

    def test_probability_lookup(self):
        distribution = exact_pdf(reduced(prepare_neel(4), "1:2"), Axis.Z)
        assert distribution.probability(0) == pytest.approx(1.0)
        with pytest.raises(InputError):
            distribution.probability(1)


class TestFCSInversion:
    def test_round_trip(self, rng):
        """Inverting the exact curve recovers the exact PDF."""
        rho = reduced(random_state(5, rng), "1:4")
        curve = exact_fcs_curve(rho, Axis.Z, ALPHA_GRID)
        recovered = fcs_to_pdf(ALPHA_GRID, curve, 4)
        np.testing.assert_allclose(
            recovered.probabilities, exact_pdf(rho, Axis.Z).probabilities, atol=1e-10
        )

    def test_insufficient_grid(self):
        """Two alphas cannot determine five probabilities."""
        with pytest.raises(InputError):
            fcs_to_pdf([0.1, 0.2], [1.0, 1.0], 4)

    def test_degenerate_grid(self):
        """alpha, alpha + pi and alpha + 2 pi give identical rows when every q is even."""
        grid = [0.3, 0.3 + math.pi, 0.3 + 2 * math.pi]
        with pytest.raises(InputError):
            fcs_to_pdf(grid, np.ones(3), 2)

    def test_length_mismatch(self):
        with pytest.raises(InputError):
            fcs_to_pdf([0.1, 0.2, 0.3], [1.0], 2)
