"""Distribution containers and derived statistics."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tmdkit import (
    ClickStatistics,
    DegenerateConditionError,
    DomainError,
    JointPhotonDistribution,
    NumericalError,
    PhotonDistribution,
    combine_collective,
    conditional,
    correlation,
    default_n_max,
    fit_poisson,
    fit_thermal,
    marginals,
    moment,
    number_squeezing_db,
    twin_beam_joint,
)
from tmdkit.stats import poisson_probs, thermal_probs


class TestPhotonDistribution:
    def test_accepts_normalized_vector(self):
        dist = PhotonDistribution([0.5, 0.25, 0.25])
        assert dist.n_max == 2
        assert dist.mean == pytest.approx(0.75)
        assert dist.is_physical

    def test_rejects_unnormalized(self):
        with pytest.raises(DomainError):
            PhotonDistribution([0.5, 0.4])

    def test_rejects_non_finite(self):
        with pytest.raises(DomainError):
            PhotonDistribution([np.nan, 1.0])

    def test_rejects_wrong_shape(self):
        with pytest.raises(DomainError):
            PhotonDistribution([[0.5, 0.5]])
        with pytest.raises(DomainError):
            PhotonDistribution([])

    def test_small_negativity_tolerated(self):
        dist = PhotonDistribution([-0.0005, 1.0005])
        assert dist.is_physical
        assert not PhotonDistribution([-0.002, 1.002]).is_physical

    def test_probs_frozen(self):
        dist = PhotonDistribution([0.5, 0.5])
        with pytest.raises(ValueError):
            dist.probs[0] = 1.0

    def test_value_equality(self):
        assert PhotonDistribution([0.5, 0.5]) == PhotonDistribution([0.5, 0.5])
        assert PhotonDistribution([0.5, 0.5]) != PhotonDistribution([0.4, 0.6])
        assert PhotonDistribution([0.5, 0.5]) != [0.5, 0.5]


class TestJointPhotonDistribution:
    def test_accepts_matrix(self):
        joint = JointPhotonDistribution([[0.1, 0.2], [0.3, 0.4]])
        assert joint.n_max_signal == 1
        assert joint.n_max_idler == 1
        assert joint.is_physical

    def test_rejects_vector(self):
        with pytest.raises(DomainError):
            JointPhotonDistribution([0.5, 0.5])

    def test_rejects_unnormalized(self):
        with pytest.raises(DomainError):
            JointPhotonDistribution([[0.5, 0.5], [0.5, 0.5]])

    def test_value_equality(self):
        a = JointPhotonDistribution([[0.5, 0.0], [0.0, 0.5]])
        b = JointPhotonDistribution([[0.5, 0.0], [0.0, 0.5]])
        assert a == b
        assert a != JointPhotonDistribution([[0.25, 0.25], [0.25, 0.25]])


class TestClickStatistics:
    def test_frequencies(self):
        stats = ClickStatistics(np.array([30, 50, 20]), 100)
        np.testing.assert_allclose(stats.frequencies, [0.3, 0.5, 0.2])

    def test_accepts_integral_floats(self):
        stats = ClickStatistics(np.array([2.0, 3.0]), 5)
        assert stats.counts.dtype == np.int64

    def test_rejects_fractional_counts(self):
        with pytest.raises(DomainError):
            ClickStatistics(np.array([2.5, 2.5]), 5)

    def test_rejects_sum_mismatch(self):
        with pytest.raises(DomainError):
            ClickStatistics(np.array([2, 2]), 5)

    def test_rejects_negative_counts(self):
        with pytest.raises(DomainError):
            ClickStatistics(np.array([-1, 6]), 5)

    def test_rejects_non_positive_shots(self):
        with pytest.raises(DomainError):
            ClickStatistics(np.array([0, 0]), 0)

    def test_matrix_counts(self):
        stats = ClickStatistics(np.array([[1, 2], [3, 4]]), 10)
        assert stats.counts.shape == (2, 2)
        assert stats.frequencies.sum() == pytest.approx(1.0)

    def test_value_equality(self):
        a = ClickStatistics(np.array([3, 7]), 10)
        assert a == ClickStatistics(np.array([3, 7]), 10)
        assert a != ClickStatistics(np.array([4, 6]), 10)


class TestMoments:
    def test_zeroth_moment_is_total(self):
        dist = PhotonDistribution([0.2, 0.3, 0.5])
        assert moment(dist, 0) == pytest.approx(1.0)

    def test_first_and_second(self):
        dist = PhotonDistribution([0.2, 0.3, 0.5])
        assert moment(dist, 1) == pytest.approx(0.3 + 1.0)
        assert moment(dist, 2) == pytest.approx(0.3 + 2.0)

    def test_rejects_bad_order(self):
        dist = PhotonDistribution([1.0])
        with pytest.raises(DomainError):
            moment(dist, -1)
        with pytest.raises(DomainError):
            moment(dist, 1.5)


class TestDefaultNMax:
    def test_floor_of_ten(self):
        assert default_n_max(0.0) == 10

    def test_grows_with_mean(self):
        assert default_n_max(4.0) == math.ceil(4.0 + 15.0 * math.sqrt(20.0))

    def test_rejects_negative(self):
        with pytest.raises(DomainError):
            default_n_max(-0.1)


class TestMarginalsAndConditional:
    def test_marginals_sum_axes(self):
        joint = JointPhotonDistribution([[0.1, 0.2], [0.3, 0.4]])
        signal, idler = marginals(joint)
        np.testing.assert_allclose(signal.probs, [0.3, 0.7])
        np.testing.assert_allclose(idler.probs, [0.4, 0.6])

    def test_conditional_on_idler(self):
        joint = JointPhotonDistribution([[0.1, 0.2], [0.3, 0.4]])
        cond = conditional(joint, "idler", 1)
        np.testing.assert_allclose(cond.probs, [0.2 / 0.6, 0.4 / 0.6])

    def test_conditional_on_signal(self):
        joint = JointPhotonDistribution([[0.1, 0.2], [0.3, 0.4]])
        cond = conditional(joint, "signal", 0)
        np.testing.assert_allclose(cond.probs, [1.0 / 3.0, 2.0 / 3.0])

    def test_rejects_unknown_arm(self):
        joint = JointPhotonDistribution([[0.5, 0.0], [0.0, 0.5]])
        with pytest.raises(DomainError):
            conditional(joint, "herald", 0)

    def test_rejects_out_of_range_value(self):
        joint = JointPhotonDistribution([[0.5, 0.0], [0.0, 0.5]])
        with pytest.raises(DomainError):
            conditional(joint, "signal", 2)

    def test_zero_mass_herald_degenerate(self):
        joint = JointPhotonDistribution([[0.5, 0.0], [0.5, 0.0]])
        with pytest.raises(DegenerateConditionError):
            conditional(joint, "idler", 1)


class TestCombineCollective:
    def test_matches_double_loop(self):
        rng = np.random.default_rng(7)
        raw = rng.random((4, 3))
        joint = JointPhotonDistribution(raw / raw.sum())
        expected = np.zeros(6)
        for n in range(4):
            for m in range(3):
                expected[n + m] += joint.probs[n, m]
        np.testing.assert_allclose(combine_collective(joint).probs, expected, atol=1e-15)

    def test_twin_beam_total_has_exact_odd_zeros(self):
        pair = PhotonDistribution([0.6, 0.3, 0.1])
        total = combine_collective(twin_beam_joint(pair))
        np.testing.assert_array_equal(total.probs[1::2], 0.0)
        np.testing.assert_allclose(total.probs[0::2], pair.probs)


class TestCorrelation:
    def test_perfectly_correlated(self):
        joint = twin_beam_joint(PhotonDistribution([0.6, 0.3, 0.1]))
        assert correlation(joint) == pytest.approx(1.0)

    def test_anti_correlated(self):
        probs = np.zeros((3, 3))
        probs[0, 2] = probs[2, 0] = 0.5
        assert correlation(JointPhotonDistribution(probs)) == pytest.approx(-1.0)

    def test_product_joint_uncorrelated(self):
        a = np.array([0.5, 0.3, 0.2])
        b = np.array([0.7, 0.3])
        joint = JointPhotonDistribution(np.outer(a, b))
        assert correlation(joint) == pytest.approx(0.0, abs=1e-12)

    def test_degenerate_variance(self):
        probs = np.zeros((2, 2))
        probs[1, 0] = 0.5
        probs[1, 1] = 0.5
        with pytest.raises(DegenerateConditionError):
            correlation(JointPhotonDistribution(probs))


class TestNumberSqueezing:
    def test_known_value(self):
        # difference variance 4 over mean product 1 is 10*log10(4) dB
        probs = np.zeros((3, 3))
        probs[0, 2] = probs[2, 0] = 0.5
        result = number_squeezing_db(JointPhotonDistribution(probs))
        assert result == pytest.approx(10.0 * math.log10(4.0))

    def test_twin_beam_is_minus_infinity(self):
        joint = twin_beam_joint(PhotonDistribution([0.6, 0.3, 0.1]))
        assert number_squeezing_db(joint) == float("-inf")

    def test_independent_poissonians_with_mean_two_sit_at_zero(self):
        # Var(n - m) = 2 mu for independent Poissonians, so the ratio to
        # the mean product mu^2 crosses 1 exactly at mu = 2
        p = poisson_probs(2.0, 40)
        joint = JointPhotonDistribution(np.outer(p, p))
        assert number_squeezing_db(joint) == pytest.approx(0.0, abs=1e-9)

    def test_zero_mean_degenerate(self):
        probs = np.zeros((2, 2))
        probs[0, 0] = 1.0
        with pytest.raises(DegenerateConditionError):
            number_squeezing_db(JointPhotonDistribution(probs))


class TestModelProbs:
    def test_thermal_geometric_ratio(self):
        p = thermal_probs(0.5, 10)
        ratios = p[1:] / p[:-1]
        np.testing.assert_allclose(ratios, 0.5 / 1.5)
        assert p.sum() == pytest.approx(1.0)

    def test_thermal_zero_mean_is_vacuum(self):
        np.testing.assert_array_equal(thermal_probs(0.0, 4), [1, 0, 0, 0, 0])

    def test_poisson_matches_renormalized_pmf(self):
        from scipy.stats import poisson

        raw = poisson.pmf(np.arange(7), 2.2)
        np.testing.assert_allclose(poisson_probs(2.2, 6), raw / raw.sum())

    def test_rejects_negative_parameters(self):
        with pytest.raises(DomainError):
            thermal_probs(-0.1, 5)
        with pytest.raises(DomainError):
            poisson_probs(1.0, -1)

    @given(mean=st.floats(0.01, 50.0), n_max=st.integers(1, 40))
    @settings(max_examples=40, deadline=None)
    def test_both_families_normalized(self, mean, n_max):
        assert thermal_probs(mean, n_max).sum() == pytest.approx(1.0)
        assert poisson_probs(mean, n_max).sum() == pytest.approx(1.0)


class TestFits:
    def test_poisson_recovers_exact_mean(self):
        dist = PhotonDistribution(poisson_probs(1.3, 12))
        result = fit_poisson(dist)
        assert result.family == "poisson"
        assert result.mean == pytest.approx(1.3, abs=1e-6)
        assert result.residual_l2 < 1e-8

    def test_thermal_recovers_exact_mean(self):
        dist = PhotonDistribution(thermal_probs(0.5, 12))
        result = fit_thermal(dist)
        assert result.family == "thermal"
        assert result.mean == pytest.approx(0.5, abs=1e-6)
        assert result.residual_l2 < 1e-8

    def test_own_family_fits_better(self):
        dist = PhotonDistribution(poisson_probs(1.3, 12))
        assert fit_poisson(dist).residual_l2 < fit_thermal(dist).residual_l2
        dist = PhotonDistribution(thermal_probs(1.3, 20))
        assert fit_thermal(dist).residual_l2 < fit_poisson(dist).residual_l2

    def test_cross_family_fit_lands_below_the_naive_mean(self):
        # the l2-best Poissonian for a unit-mean thermal target sits near
        # mean 0.66, not 1, so the one-photon miss is 0.0908 rather than
        # the e^{-1} - 0.25 = 0.1179 a fixed-mean comparison would give
        dist = PhotonDistribution(thermal_probs(1.0, 30))
        grid = np.linspace(0.01, 3.0, 60_000)
        best = min(
            grid,
            key=lambda m: float(np.linalg.norm(dist.probs - poisson_probs(m, 30))),
        )
        result = fit_poisson(dist)
        assert result.mean == pytest.approx(best, abs=1e-4)
        assert abs(result.per_bin_deviation[1]) == pytest.approx(0.0908, abs=1e-3)

    def test_deviation_is_target_minus_model(self):
        dist = PhotonDistribution(thermal_probs(0.8, 10))
        result = fit_poisson(dist)
        model = poisson_probs(result.mean, 10)
        np.testing.assert_allclose(result.per_bin_deviation, dist.probs - model, atol=1e-12)
        assert result.residual_l2 == pytest.approx(np.linalg.norm(result.per_bin_deviation))

    def test_unreachable_mean_raises(self):
        # a spike at the top bin pushes the best thermal mean to infinity
        dist = PhotonDistribution([0.0] * 5 + [1.0])
        with pytest.raises(NumericalError):
            fit_thermal(dist)
