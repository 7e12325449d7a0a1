import numpy as np
import pytest
from scipy.stats import poisson

from stabsim import gates, qstate
from stabsim.noise import NoiseParams
from stabsim.readout import (
    MeasurementOutcome,
    detect_be_direct,
    measure_ancilla,
    photon_count_classify,
)
from stabsim.qstate import new_register, state_from_ket, basis_ket


class TestMeasureAncilla:
    def test_deterministic_dark_state(self):
        rng = np.random.default_rng(0)
        s = new_register(0, 0, 1)
        out, post = measure_ancilla(s, 0, NoiseParams(), rng)
        assert out.bit == 1 and out.true_bit == 1
        assert np.allclose(post.rho, s.rho)

    def test_ideal_block_on_even_parity_reads_dark(self):
        rng = np.random.default_rng(1)
        s = qstate.apply_unitary(new_register(0, 0, 0),
                                 gates.build_stabilizer_unitary("Z"))
        out, _ = measure_ancilla(s, 0, NoiseParams(), rng)
        assert out.bit == 1

    def test_bias_flip_rate(self):
        params = NoiseParams(readout_bias0=0.05)
        rng = np.random.default_rng(2)
        s = new_register(0, 0, 1)
        n = 20_000
        flips = 0
        for _ in range(n):
            out, _ = measure_ancilla(s, 0, params, rng)
            flips += out.bit != out.true_bit
        sigma = np.sqrt(0.05 * 0.95 / n)
        assert abs(flips / n - 0.05) < 3 * sigma

    def test_born_frequencies(self):
        ket = (basis_ket(0, 0, 0) + basis_ket(0, 0, 1)) / np.sqrt(2)
        s = state_from_ket(ket)
        rng = np.random.default_rng(3)
        n = 20_000
        ones = sum(measure_ancilla(s, 0, NoiseParams(), rng)[0].true_bit for _ in range(n))
        sigma = np.sqrt(0.25 / n)
        assert abs(ones / n - 0.5) < 3 * sigma

    def test_collapse_is_repeatable(self):
        ket = (basis_ket(0, 0, 0) + basis_ket(0, 0, 1)) / np.sqrt(2)
        rng = np.random.default_rng(4)
        for _ in range(10):
            out1, post = measure_ancilla(state_from_ket(ket), 0, NoiseParams(), rng)
            out2, _ = measure_ancilla(post, 0, NoiseParams(), rng)
            assert out2.true_bit == out1.true_bit

    def test_degenerate_state_rejected(self):
        rng = np.random.default_rng(5)
        zero = qstate.RegisterState(np.zeros((18, 18), dtype=complex))
        with pytest.raises(ValueError):
            measure_ancilla(zero, 0, NoiseParams(), rng)

    def test_outcome_validation(self):
        with pytest.raises(ValueError):
            MeasurementOutcome(bit=2, true_bit=0)
        with pytest.raises(ValueError):
            MeasurementOutcome(bit=0, true_bit=0, counts=-1)


class TestPhotonCounts:
    def test_bright_misclassification_matches_poisson_tail(self):
        params = NoiseParams()
        # Oracle: tail mass of Poisson(25) at or below the threshold.
        p_err = float(poisson.cdf(params.photon_threshold, params.photon_mean_bright))
        assert p_err < 2e-6
        rng = np.random.default_rng(6)
        n = 200_000
        errors = sum(photon_count_classify(True, params, rng)[1] == 1 for _ in range(n))
        # With p_err ~ 1.4e-6 essentially no errors are expected in 2e5 draws.
        assert errors <= max(5, 10 * n * p_err)

    def test_dark_misclassification_matches_poisson_tail(self):
        params = NoiseParams()
        p_err = float(poisson.sf(params.photon_threshold, params.photon_mean_dark))
        assert p_err < 2e-3
        rng = np.random.default_rng(7)
        n = 100_000
        errors = sum(photon_count_classify(False, params, rng)[1] == 0 for _ in range(n))
        sigma = np.sqrt(p_err * (1 - p_err) / n)
        assert errors / n < p_err + 4 * sigma + 1e-6

    def test_zero_dark_mean_perfect_at_zero_threshold(self):
        params = NoiseParams(photon_mean_dark=0.0, photon_threshold=0)
        rng = np.random.default_rng(8)
        for _ in range(500):
            counts, bit = photon_count_classify(False, params, rng)
            assert counts == 0 and bit == 1

    def test_count_mode_in_ancilla_measurement(self):
        params = NoiseParams(use_photon_counts=True)
        rng = np.random.default_rng(9)
        s = new_register(0, 0, 1)  # dark
        out, _ = measure_ancilla(s, 0, params, rng)
        assert out.counts is not None and out.counts <= params.photon_threshold
        assert out.bit == 1


class TestDetectBeDirect:
    def test_exact_classification_without_error(self):
        rng = np.random.default_rng(10)
        bits, post = detect_be_direct(new_register(0, 0, 0), NoiseParams(), rng)
        assert bits == (0, 0)
        assert np.allclose(post.rho, new_register(0, 0, 0).rho)

    def test_error_rate(self):
        params = NoiseParams(det_error_be=0.005)
        rng = np.random.default_rng(11)
        s = new_register(0, 1, 0)
        n = 20_000
        good = 0
        for _ in range(n):
            bits, _ = detect_be_direct(s, params, rng)
            good += bits == (0, 1)
        expected = (1 - 0.005) ** 2
        sigma = np.sqrt(expected * (1 - expected) / n)
        assert abs(good / n - expected) < 3 * sigma

    def test_leaked_ion_classifies_dark(self):
        from stabsim.noise import leak_ion
        params = NoiseParams(det_error_be=0.005)
        rng = np.random.default_rng(12)
        s = leak_ion(new_register(0, 1, 0), "be2")
        for _ in range(200):
            bits, _ = detect_be_direct(s, params, rng)
            assert bits[1] == 1

    def test_leak_classification_configurable(self):
        from stabsim.noise import leak_ion
        params = NoiseParams(leak_detection="bright")
        rng = np.random.default_rng(13)
        s = leak_ion(new_register(0, 1, 0), "be1")
        bits, _ = detect_be_direct(s, params, rng)
        assert bits[0] == 0

    def test_born_sampling_on_superposition(self):
        ket = (basis_ket(0, 0, 0) + basis_ket(1, 1, 0)) / np.sqrt(2)
        s = state_from_ket(ket)
        rng = np.random.default_rng(14)
        n = 20_000
        n00 = 0
        for _ in range(n):
            bits, _ = detect_be_direct(s, NoiseParams(), rng)
            assert bits in ((0, 0), (1, 1))
            n00 += bits == (0, 0)
        sigma = np.sqrt(0.25 / n)
        assert abs(n00 / n - 0.5) < 3 * sigma

    def test_collapse_projects_configuration(self):
        ket = (basis_ket(0, 1, 0) + basis_ket(1, 0, 0)) / np.sqrt(2)
        rng = np.random.default_rng(15)
        bits, post = detect_be_direct(state_from_ket(ket), NoiseParams(), rng)
        diag = post.rho.diagonal().real
        assert diag[qstate.state_index(bits[0], bits[1], 0)] == pytest.approx(1.0, abs=1e-12)
