"""Pair sources and reference distributions."""

import numpy as np
import pytest
from scipy.stats import nbinom

from tmdkit import (
    DomainError,
    PhotonDistribution,
    SourceModel,
    combine_collective,
    convolve,
    fock_dist,
    moment,
    multimode_pair_dist,
    poisson_dist,
    thermal_dist,
    twin_beam_joint,
)
from tmdkit.stats import thermal_probs


class TestReferenceDistributions:
    def test_thermal_mean(self):
        dist = thermal_dist(0.8, 60)
        assert dist.mean == pytest.approx(0.8, abs=1e-9)

    def test_poisson_mean_and_variance(self):
        dist = poisson_dist(1.5, 60)
        assert dist.mean == pytest.approx(1.5, abs=1e-9)
        var = moment(dist, 2) - dist.mean**2
        assert var == pytest.approx(1.5, abs=1e-8)

    def test_default_truncation_is_generous(self):
        dist = thermal_dist(2.0)
        assert dist.probs[-1] < 1e-7
        assert dist.mean == pytest.approx(2.0, abs=1e-5)

    def test_fock_is_a_spike(self):
        dist = fock_dist(3)
        np.testing.assert_array_equal(dist.probs, [0, 0, 0, 1])

    def test_fock_vacuum_keeps_two_entries(self):
        assert fock_dist(0).n_max == 1

    def test_fock_rejects_bad_values(self):
        with pytest.raises(DomainError):
            fock_dist(-1)
        with pytest.raises(DomainError):
            fock_dist(5, n_max=3)


class TestConvolve:
    def test_sum_of_focks(self):
        total = convolve(fock_dist(2), fock_dist(3))
        np.testing.assert_array_equal(total.probs, fock_dist(5).probs)

    def test_poisson_closed_under_convolution(self):
        a = poisson_dist(0.7, 40)
        b = poisson_dist(1.1, 40)
        total = convolve(a, b)
        np.testing.assert_allclose(total.probs[:41], poisson_dist(1.8, 40).probs, atol=1e-9)


class TestMultimodePairs:
    def test_one_mode_is_thermal(self):
        np.testing.assert_allclose(
            multimode_pair_dist(1, 0.9, 30).probs, thermal_probs(0.9, 30), atol=1e-12
        )

    def test_matches_explicit_mode_convolution(self):
        modes, total_mean, n_max = 4, 1.2, 25
        per_mode = PhotonDistribution(thermal_probs(total_mean / modes, n_max))
        acc = per_mode
        for _ in range(modes - 1):
            acc = convolve(acc, per_mode)
        expected = acc.probs[: n_max + 1]
        np.testing.assert_allclose(
            multimode_pair_dist(modes, total_mean, n_max).probs,
            expected / expected.sum(),
            atol=1e-10,
        )

    def test_matches_negative_binomial(self):
        p = multimode_pair_dist(6, 2.0, 40).probs
        raw = nbinom.pmf(np.arange(41), 6, 1.0 / (1.0 + 2.0 / 6.0))
        np.testing.assert_allclose(p, raw / raw.sum(), atol=1e-12)

    def test_many_modes_approach_poissonian(self):
        approx = multimode_pair_dist(400, 1.0, 20).probs
        target = poisson_dist(1.0, 20).probs
        assert np.abs(approx - target).max() < 2e-3

    def test_rejects_bad_parameters(self):
        with pytest.raises(DomainError):
            multimode_pair_dist(0, 1.0)
        with pytest.raises(DomainError):
            multimode_pair_dist(2, -0.5)


class TestTwinBeamJoint:
    def test_diagonal_structure(self):
        pair = PhotonDistribution([0.6, 0.3, 0.1])
        joint = twin_beam_joint(pair)
        np.testing.assert_array_equal(joint.probs, np.diag([0.6, 0.3, 0.1]))

    def test_rejects_negative_pair_probs(self):
        pair = PhotonDistribution([-0.0005, 1.0005])
        with pytest.raises(DomainError):
            twin_beam_joint(pair)


class TestSourceModel:
    def test_single_mode_squeezer(self):
        src = SourceModel.single_mode_squeezer(0.5, n_max=20)
        assert src.label == "thermal"
        assert src.mean == 0.5
        np.testing.assert_allclose(src.pair_dist.probs, thermal_probs(0.5, 20))

    def test_multimode_records_modes(self):
        src = SourceModel.multimode_pdc(100, 1.0, n_max=20)
        assert src.label == "multimode"
        assert src.modes == 100
        assert src.mean == 1.0

    def test_poissonian_pairs(self):
        src = SourceModel.poissonian_pairs(0.2, n_max=8)
        assert src.label == "poisson"
        np.testing.assert_allclose(src.pair_dist.probs, poisson_dist(0.2, 8).probs)

    def test_fock_pairs(self):
        src = SourceModel.fock_pairs(1)
        assert src.label == "fock"
        assert src.photons == 1
        np.testing.assert_array_equal(src.pair_dist.probs, [0, 1])

    def test_joint_total_doubles_pair_number(self):
        src = SourceModel.fock_pairs(2)
        total = combine_collective(src.joint)
        np.testing.assert_array_equal(total.probs, fock_dist(4).probs)

    def test_value_equality(self):
        a = SourceModel.poissonian_pairs(0.2, n_max=8)
        b = SourceModel.poissonian_pairs(0.2, n_max=8)
        assert a == b
        assert a != SourceModel.poissonian_pairs(0.3, n_max=8)
        assert a != SourceModel.single_mode_squeezer(0.2, n_max=8)
