import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pinchar.waveforms import (
    AliasingWarning,
    CodeSequence,
    PwmSpec,
    SampledWaveform,
    UnitMismatchError,
    aperiodic_autocorrelation,
    bpsk_modulate,
    golay_pair,
    resample,
    signal_energy,
    synth_pwm_pulse,
)

HALF = np.r_[np.zeros(6), np.full(20, 70.0), np.zeros(6)]


class TestSampledWaveform:
    def test_duration_and_times(self):
        w = SampledWaveform(np.ones(80), 80e6, t0=1e-6)
        assert w.duration == pytest.approx(1e-6)
        assert w.times()[0] == 1e-6
        assert w.times()[-1] == pytest.approx(1e-6 + 79 / 80e6)

    @pytest.mark.parametrize(
        "samples, rate, unit",
        [(np.array([]), 1.0, "volts"), (np.ones(3), 0.0, "volts"), (np.ones(3), 1.0, "pascal")],
    )
    def test_rejects_invalid(self, samples, rate, unit):
        with pytest.raises(ValueError):
            SampledWaveform(samples, rate, unit=unit)

    def test_unit_mismatch(self):
        a = SampledWaveform(np.ones(4), 1.0, unit="volts")
        b = SampledWaveform(np.ones(4), 1.0, unit="lsb")
        with pytest.raises(UnitMismatchError):
            a + b

    def test_arithmetic(self):
        a = SampledWaveform(np.arange(4.0), 1.0)
        np.testing.assert_array_equal((a + a).samples, 2 * a.samples)
        np.testing.assert_array_equal((a - a).samples, 0)
        np.testing.assert_array_equal((-a).samples, -a.samples)

    def test_samples_are_read_only(self):
        w = SampledWaveform(np.ones(4), 1.0)
        with pytest.raises(ValueError):
            w.samples[0] = 2

    def test_padded_keeps_times(self):
        w = SampledWaveform(np.ones(4), 10.0, t0=1.0)
        p = w.padded(3, 2)
        assert len(p) == 9
        assert p.times()[3] == pytest.approx(1.0)


class TestPwm:
    @pytest.mark.parametrize("cycles", [0.5, 1, 1.5, 2])
    def test_half_cycle_pattern(self, cycles):
        w = synth_pwm_pulse(cycles)
        halves = w.samples.reshape(-1, 32)
        assert halves.shape[0] == int(2 * cycles)
        for k, h in enumerate(halves):
            np.testing.assert_array_equal(h, (-1) ** k * HALF)
        assert w.sample_rate == 480e6

    def test_two_cycle_peak_to_peak(self):
        w = synth_pwm_pulse(2)
        assert len(w) == 128
        assert np.ptp(w.samples) == 140.0

    def test_zero_amplitude(self):
        w = synth_pwm_pulse(1, PwmSpec(amplitude=0.0))
        assert len(w) == 64
        assert not np.any(w.samples)

    @pytest.mark.parametrize("cycles", [0, 0.25, 1.2, -1])
    def test_rejects_bad_cycles(self, cycles):
        with pytest.raises(ValueError):
            synth_pwm_pulse(cycles)

    def test_rejects_inconsistent_spec(self):
        with pytest.raises(ValueError):
            PwmSpec(zero_guard=20e-9)

    def test_high_time_is_twenty_symbols(self):
        s = PwmSpec()
        assert (s.guard_samples, s.high_samples, s.half_cycle_samples) == (6, 20, 32)

    def test_energy_doubles_with_length(self):
        e = signal_energy(synth_pwm_pulse(1)) / signal_energy(synth_pwm_pulse(0.5))
        assert e == pytest.approx(2.0, rel=1e-12)


class TestGolay:
    def test_length_eight_pair(self):
        a, b = golay_pair(8)
        np.testing.assert_array_equal(a.chips, [1, 1, -1, -1, -1, 1, -1, 1])
        np.testing.assert_array_equal(b.chips, [1, 1, 1, 1, -1, 1, 1, -1])

    def test_base_case(self):
        a, b = golay_pair(1)
        assert a.chips.tolist() == [1] and b.chips.tolist() == [1]

    @pytest.mark.parametrize("k", range(0, 9))
    def test_complementary(self, k):
        n = 2**k
        a, b = golay_pair(n)
        s = aperiodic_autocorrelation(a) + aperiodic_autocorrelation(b)
        assert s.dtype.kind == "i"
        assert s[n - 1] == 2 * n
        assert not np.any(np.delete(s, n - 1))

    @pytest.mark.parametrize("n", [0, 3, 6, 12, 8.0])
    def test_rejects_non_power_of_two(self, n):
        with pytest.raises(ValueError):
            golay_pair(n)

    def test_code_values(self):
        with pytest.raises(ValueError):
            CodeSequence(np.array([1, 0, -1]))
        with pytest.raises(ValueError):
            CodeSequence(np.array([], dtype=int))


class TestBpsk:
    def test_identity_code(self):
        w = synth_pwm_pulse(2)
        np.testing.assert_array_equal(bpsk_modulate(CodeSequence(np.array([1])), w).samples, w.samples)

    def test_sign_flip(self):
        w = synth_pwm_pulse(1)
        out = bpsk_modulate(CodeSequence(np.array([1, -1])), w).samples
        np.testing.assert_array_equal(out, np.r_[w.samples, -w.samples])

    def test_coded_duration(self):
        a, _ = golay_pair(8)
        w = bpsk_modulate(a, synth_pwm_pulse(2))
        assert w.duration == pytest.approx(8 * 2 / 7.5e6, rel=1e-12)
        assert w.duration == pytest.approx(2.133e-6, abs=1e-9)

    @given(st.lists(st.sampled_from([-1, 1]), min_size=1, max_size=32))
    def test_energy_additivity(self, chips):
        chip = synth_pwm_pulse(1.5)
        w = bpsk_modulate(CodeSequence(np.array(chips)), chip)
        assert signal_energy(w) == pytest.approx(len(chips) * signal_energy(chip), rel=1e-12)


class TestEnergy:
    def test_constant(self):
        assert signal_energy(SampledWaveform(np.ones(50), 80e6, unit="lsb")) == pytest.approx(50 / 80e6)

    def test_zero(self):
        assert signal_energy(SampledWaveform(np.zeros(5), 1.0)) == 0.0

    @settings(max_examples=50)
    @given(st.integers(1, 400), st.integers(0, 2**31))
    def test_parseval(self, n, seed):
        x = np.random.default_rng(seed).normal(size=n)
        w = SampledWaveform(x, 80e6)
        spec = np.sum(np.abs(np.fft.fft(x)) ** 2) / n / w.sample_rate
        assert spec == pytest.approx(signal_energy(w), rel=1e-6)


class TestResample:
    def test_same_rate_is_identity(self):
        w = synth_pwm_pulse(2)
        assert resample(w, w.sample_rate) is w

    def test_tone_amplitude(self):
        t = np.arange(4800) / 480e6
        w = SampledWaveform(np.sin(2 * np.pi * 7.5e6 * t), 480e6)
        r = resample(w, 80e6)
        core = r.samples[100:-100]
        assert np.abs(core).max() == pytest.approx(1.0, rel=0.01)
        assert r.duration == pytest.approx(w.duration, abs=1 / 80e6)
        assert r.t0 == w.t0

    def test_round_trip(self, rng):
        x = np.convolve(rng.normal(size=2000), np.hanning(15), "same")
        w = SampledWaveform(x, 80e6)
        back = resample(resample(w, 160e6), 80e6)
        err = np.sqrt(np.mean((back.samples - x) ** 2) / np.mean(x**2))
        assert err < 1e-3

    def test_in_band_energy(self):
        t = np.arange(4000) / 80e6
        x = np.sin(2 * np.pi * 5e6 * t) * np.hanning(t.size)
        w = SampledWaveform(x, 80e6)
        assert signal_energy(resample(w, 40e6)) == pytest.approx(signal_energy(w), rel=1e-3)

    def test_aliasing_warning_and_strict(self):
        w = synth_pwm_pulse(2)
        with pytest.warns(AliasingWarning):
            resample(w, 20e6)
        with pytest.raises(ValueError):
            resample(w, 20e6, strict=True)

    def test_keep_tails_preserves_spectrum(self):
        import warnings

        w = synth_pwm_pulse(0.5)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AliasingWarning)
            r = resample(w, 80e6, keep_tails=True)
        f = np.arange(1, 16) * 1e6
        dtft = lambda x: np.exp(-2j * np.pi * np.outer(f, x.times())) @ x.samples / x.sample_rate
        np.testing.assert_allclose(dtft(r), dtft(w), rtol=1e-3, atol=1e-3 * np.abs(dtft(w)).max())

    def test_rejects_nonpositive_rate(self):
        with pytest.raises(ValueError):
            resample(synth_pwm_pulse(1), 0)
