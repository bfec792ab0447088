"""Element transfer functions: synthesis, application and estimation.

Only the two-way response H2 = H_RX * H_TX is observable in pulse-echo
data, so that is what is modelled and estimated here. When a one-way
response is needed it is taken as sqrt(H2) (half the phase).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .waveforms import SampledWaveform

FWHM_PER_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))


@dataclass(frozen=True, eq=False)
class TransferFunction:
    """Complex response on the one-sided DFT grid of length ``n_fft``.

    ``valid`` marks bins where an estimate is trustworthy; synthetic
    responses are valid everywhere.
    """

    freqs: np.ndarray
    values: np.ndarray
    n_fft: int
    valid: np.ndarray | None = None

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if f.ndim != 1 or f.shape != v.shape:
            raise ValueError("freqs and values must be 1-D arrays of equal length")
        if f.size > 1 and np.any(np.diff(f) <= 0):
            raise ValueError("freqs must be strictly increasing")
        if f.size != self.n_fft // 2 + 1:
            raise ValueError("grid size does not match n_fft")
        valid = np.ones(f.size, bool) if self.valid is None else np.asarray(self.valid, bool)
        if valid.shape != f.shape:
            raise ValueError("valid mask has the wrong shape")
        for a in (f, v, valid):
            a.flags.writeable = False
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "valid", valid)
        object.__setattr__(self, "n_fft", int(self.n_fft))

    @classmethod
    def from_grid(cls, values, sample_rate: float, n_fft: int, valid=None):
        return cls(np.fft.rfftfreq(n_fft, 1.0 / sample_rate), values, n_fft, valid)

    @property
    def sample_rate(self) -> float:
        return float(self.freqs[1] * self.n_fft)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def at(self, freqs) -> np.ndarray:
        """Linear interpolation of re/im onto ``freqs``; zero beyond the grid."""
        freqs = np.abs(np.asarray(freqs, dtype=float))
        re = np.interp(freqs, self.freqs, self.values.real, right=0.0)
        im = np.interp(freqs, self.freqs, self.values.imag, right=0.0)
        return re + 1j * im

    def impulse_response(self) -> np.ndarray:
        return np.fft.irfft(self.values, self.n_fft)

    def one_way(self) -> "TransferFunction":
        """sqrt(H2): magnitude square root with half the unwrapped phase."""
        mag = np.sqrt(self.magnitude)
        phase = np.unwrap(np.angle(self.values)) / 2
        return TransferFunction(self.freqs, mag * np.exp(1j * phase), self.n_fft, self.valid)


def _minimum_phase(log_mag: np.ndarray, n_fft: int) -> np.ndarray:
    """Minimum-phase spectrum from a one-sided log-magnitude (folded cepstrum)."""
    full = np.concatenate([log_mag, log_mag[-2:0:-1]])
    ceps = np.fft.ifft(full).real
    fold = np.zeros(n_fft)
    fold[0] = 1.0
    fold[1 : n_fft // 2] = 2.0
    fold[n_fft // 2] = 1.0
    return np.exp(np.fft.fft(ceps * fold))[: n_fft // 2 + 1]


def synth_two_way_response(
    fc: float, fbw: float, sample_rate: float, n_fft: int = 16384
) -> TransferFunction:
    """Minimum-phase Gaussian bandpass standing in for a measured H2.

    |H| is a Gaussian lobe at +fc minus its mirror at -fc (the spectrum of a
    Gaussian-enveloped carrier), so the response is exactly zero at DC. In
    band the mirror term is negligible: |H|^2 has a full width at half
    maximum of ``fbw * fc`` and the -3 dB band of |H| is
    ``fc * (1 -/+ fbw / 2)``. The log-magnitude is soft-floored at about
    -217 dB to keep the cepstrum well conditioned.
    """
    if fc <= 0:
        raise ValueError("fc must be positive")
    if not 0 < fbw < 2:
        raise ValueError("fractional bandwidth must be in (0, 2)")
    if n_fft % 2:
        raise ValueError("n_fft must be even")
    if sample_rate / 2 < fc * (1 + fbw):
        raise ValueError(
            f"grid Nyquist {sample_rate / 2:g} Hz is below fc*(1+fbw) = {fc * (1 + fbw):g} Hz"
        )
    freqs = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    sigma_power = fbw * fc / FWHM_PER_SIGMA
    q = (freqs - fc) ** 2 / (4 * sigma_power**2)
    # log(G(f-fc) - G(f+fc)) = -q + log(1 - exp(-f fc / sigma^2))
    mirror = -np.expm1(-freqs * fc / sigma_power**2)
    floor = 25.0
    log_mag = -floor * np.tanh(q / floor) + np.log(np.maximum(mirror, np.exp(-floor)))
    log_mag -= log_mag.max()
    return TransferFunction(freqs, _minimum_phase(log_mag, n_fft), n_fft)


@dataclass(frozen=True)
class ElementModel:
    """One array element: nominal centre frequency, bandwidth and H2."""

    center_freq: float
    fractional_bandwidth: float
    two_way: TransferFunction
    element_index: int = 0

    def __post_init__(self):
        if not 0 < self.fractional_bandwidth < 2:
            raise ValueError("fractional_bandwidth must be in (0, 2)")
        peak = self.two_way.freqs[np.argmax(self.two_way.magnitude)]
        if abs(peak - self.center_freq) > 0.05 * self.center_freq:
            raise ValueError("two-way response does not peak near center_freq")

    @classmethod
    def gaussian(cls, fc=7.5e6, fbw=0.70, sample_rate=80e6, n_fft=16384, element_index=0):
        tf = synth_two_way_response(fc, fbw, sample_rate, n_fft)
        return cls(fc, fbw, tf, element_index)


@dataclass(frozen=True, eq=False)
class ElementVariation:
    """Per-element linear gain and time offset applied on both TX and RX."""

    gains: np.ndarray
    delays: np.ndarray

    @classmethod
    def uniform(cls, n: int) -> "ElementVariation":
        return cls(np.ones(n), np.zeros(n))

    @classmethod
    def random(cls, n: int, gain_db_std: float, delay_std: float, seed: int = 0):
        rng = np.random.default_rng(seed)
        gains = 10 ** (rng.normal(0.0, gain_db_std, n) / 20)
        return cls(gains, rng.normal(0.0, delay_std, n))


def _tf_for_rate(tf: TransferFunction, sample_rate: float) -> tuple[np.ndarray, int]:
    if sample_rate == tf.sample_rate:
        return tf.values, tf.n_fft
    if sample_rate / 2 < tf.freqs[-1] * (1 - 1e-12):
        raise ValueError("waveform Nyquist does not cover the transfer-function grid")
    n_fft = int(round(tf.n_fft * sample_rate / tf.sample_rate))
    n_fft += n_fft % 2
    return tf.at(np.fft.rfftfreq(n_fft, 1.0 / sample_rate)), n_fft


def apply_transfer(w: SampledWaveform, tf: TransferFunction) -> SampledWaveform:
    """Filter ``w`` by ``tf`` as a linear (non-circular) convolution.

    The output is ``len(w) + n_fft - 1`` samples long so the tail of the
    impulse response is kept; it inherits the input's unit and ``t0``.
    """
    values, n_fft = _tf_for_rate(tf, w.sample_rate)
    h = np.fft.irfft(values, n_fft)
    return w.with_samples(signal.fftconvolve(w.samples, h))


def estimate_two_way_tf(
    tx: SampledWaveform, rx: SampledWaveform, reg: float = 0.05
) -> TransferFunction:
    """Spectral ratio RX(f)/TX(f) on the bins where |TX| >= reg * max|TX|.

    Bins outside that support are flagged invalid and set to zero rather
    than extrapolated. The time offset ``rx.t0 - tx.t0`` is kept as linear
    phase, so a bulk propagation delay shows up in the phase only.
    """
    if not 0 < reg < 1:
        raise ValueError("reg must lie strictly between 0 and 1")
    if tx.sample_rate != rx.sample_rate:
        raise ValueError("tx and rx must share a sample rate")
    n_fft = max(len(tx), len(rx))
    n_fft += n_fft % 2
    TX = np.fft.rfft(tx.samples, n_fft)
    RX = np.fft.rfft(rx.samples, n_fft)
    freqs = np.fft.rfftfreq(n_fft, tx.dt)
    RX = RX * np.exp(-2j * np.pi * freqs * (rx.t0 - tx.t0))
    mag = np.abs(TX)
    valid = mag >= reg * mag.max()
    H = np.zeros_like(RX)
    H[valid] = RX[valid] / TX[valid]
    return TransferFunction(freqs, H, n_fft, valid)
