"""Scanner simulation: array geometry, transmit schemes, receive chain.

The received signal for transmit element j, target p and receive element i
is the two-way chip (drive filtered by H2) delayed by the path time and
scaled by Gamma / sqrt(r_jp * r_pi) and by the medium attenuation over the
path. Because attenuation is multiplicative in path length, the transmit
sum over j factorises per target, which keeps diverging-wave shots cheap.

Time origin: t = 0 is when the earliest element fires.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .propagation import Phantom
from .transducer import ElementModel, ElementVariation
from .waveforms import CodeSequence, SampledWaveform

# LSB per (volt x 1/m) at 0 dB receive gain. With this value a 2-cycle,
# 70 V pulse reflected by a steel plate at 5 cm in water reads ~200 LSB
# peak-to-peak at 22 dB fixed gain and no TGC.
DEFAULT_SENSITIVITY = 0.00584


class SaturationWarning(UserWarning):
    """Some samples were clipped at the ADC rails."""


@dataclass(frozen=True)
class ArrayGeometry:
    """Linear array on the x axis, centred at the origin."""

    n_elements: int = 128
    pitch: float = 0.1e-3

    def __post_init__(self):
        if self.n_elements < 1 or self.pitch <= 0:
            raise ValueError("need at least one element and a positive pitch")

    @property
    def positions(self) -> np.ndarray:
        return (np.arange(self.n_elements) - (self.n_elements - 1) / 2) * self.pitch

    @property
    def aperture(self) -> float:
        return (self.n_elements - 1) * self.pitch

    @property
    def center_element(self) -> int:
        """0-based index of the mid element (the 64th of 128)."""
        return (self.n_elements - 1) // 2


@dataclass(frozen=True, eq=False)
class TxScheme:
    """Single-element (STA) or diverging-wave (DW) transmission.

    ``code`` and ``tag`` only label coded shots for downstream combining.
    """

    kind: str
    drive: SampledWaveform
    element: int | None = None
    r_v: float | None = None
    code: CodeSequence | None = None
    tag: str = ""

    def __post_init__(self):
        if self.kind == "sta":
            if self.element is None or self.element < 0:
                raise ValueError("STA scheme needs a non-negative element index")
        elif self.kind == "dw":
            if self.r_v is None or not self.r_v > 0:
                raise ValueError("DW scheme needs a positive virtual source distance")
        else:
            raise ValueError(f"unknown scheme kind {self.kind!r}")

    @classmethod
    def sta(cls, element: int, drive: SampledWaveform, **kw) -> "TxScheme":
        return cls("sta", drive, element=element, **kw)

    @classmethod
    def dw(cls, r_v: float, drive: SampledWaveform, **kw) -> "TxScheme":
        return cls("dw", drive, r_v=r_v, **kw)

    @property
    def label(self) -> str:
        base = f"sta{self.element}" if self.kind == "sta" else f"dw{self.r_v * 1e3:g}mm"
        return f"{base}{self.tag}"

    def firing(self, geom: ArrayGeometry, c: float) -> tuple[np.ndarray, np.ndarray]:
        """Indices of the firing elements and their transmit delays (s)."""
        if self.kind == "sta":
            if self.element >= geom.n_elements:
                raise ValueError("STA element index outside the array")
            return np.array([self.element]), np.zeros(1)
        return np.arange(geom.n_elements), dw_delays(self.r_v, geom, c)


@dataclass(frozen=True)
class ReceiveConfig:
    sample_rate: float = 80e6
    window: float = 95e-6
    fixed_gain: float = 22.0
    tgc_slope: float = 2.3
    adc_bits: int = 12
    noise_rms: float = 2.0
    seed: int = 0
    sensitivity: float = DEFAULT_SENSITIVITY

    def __post_init__(self):
        n = self.sample_rate * self.window
        if abs(n - round(n)) > 1e-6 * max(n, 1) or round(n) < 1:
            raise ValueError("sample_rate * window must be a positive integer")
        if not 2 <= self.adc_bits <= 16:
            raise ValueError("adc_bits must be in [2, 16]")
        if self.noise_rms < 0:
            raise ValueError("noise_rms must be non-negative")

    @property
    def n_samples(self) -> int:
        return int(round(self.sample_rate * self.window))

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def full_scale(self) -> int:
        return 2 ** (self.adc_bits - 1) - 1

    def gain_db(self, t, c: float) -> np.ndarray:
        """Fixed gain plus a TGC ramp linear in depth, capped at the window end."""
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.window)
        depth_cm = c * t / 2 * 100.0
        return self.fixed_gain + self.tgc_slope * depth_cm


@dataclass(frozen=True, eq=False)
class ChannelData:
    """Per-element receive records, ``samples[element, sample]``.

    Raw acquisitions hold int16 LSB values; correlated or otherwise
    processed data holds floats on a time axis starting at ``t0``.
    """

    samples: np.ndarray
    dt: float
    scheme: TxScheme | None = None
    config: ReceiveConfig | None = None
    t0: float = 0.0
    saturated: bool = False

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 2:
            raise ValueError("channel samples must be 2-D (element x sample)")
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    @property
    def n_elements(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def sample_rate(self) -> float:
        return 1.0 / self.dt

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_samples) * self.dt

    def trace(self, i: int) -> SampledWaveform:
        return SampledWaveform(self.samples[i].astype(float), self.sample_rate, self.t0, "lsb")

    def with_samples(self, samples, **changes) -> "ChannelData":
        return replace(self, samples=samples, **changes)


def dw_delays(r_v: float, geom: ArrayGeometry, c: float) -> np.ndarray:
    """Element delays emulating a line source ``r_v`` behind the aperture.

    Normalised so the earliest element fires at t = 0.
    """
    if not r_v > 0:
        raise ValueError("r_v must be positive")
    x = geom.positions
    tau = (np.sqrt(r_v**2 + x**2) - r_v) / c
    return tau - tau.min()


def chip_spectrum(
    drive: SampledWaveform, element: ElementModel, freqs: np.ndarray, sample_rate: float
) -> np.ndarray:
    """DFT (on the receive grid) of the drive filtered by H2.

    The drive's continuous spectrum is evaluated exactly at ``freqs``, so the
    result is the band-limited two-way chip sampled at ``sample_rate``.
    """
    ratio = drive.sample_rate / sample_rate
    m = round(ratio)
    df = freqs[1] - freqs[0] if freqs.size > 1 else 0.0
    n_rx = int(round(sample_rate / df)) if df > 0 else 0
    if abs(ratio - m) < 1e-9 and abs(freqs[0]) < 1e-9 * df and m * n_rx >= len(drive):
        V = np.fft.rfft(drive.samples, m * n_rx)[: freqs.size]
    else:
        V = np.exp(-2j * np.pi * np.outer(freqs, np.arange(len(drive)) / drive.sample_rate))
        V = V @ drive.samples
    V = V * np.exp(-2j * np.pi * freqs * drive.t0)
    return V * element.two_way.at(freqs) / ratio


def two_way_chip(
    drive: SampledWaveform, element: ElementModel, sample_rate: float, n_samples: int
) -> SampledWaveform:
    """Noise-free drive * H2 at the receive rate, starting at the drive time origin."""
    freqs = np.fft.rfftfreq(n_samples, 1.0 / sample_rate)
    x = np.fft.irfft(chip_spectrum(drive, element, freqs, sample_rate), n_samples)
    return SampledWaveform(x, sample_rate, 0.0, "volts")


def _propagated_spectra(phantom, geom, scheme, freqs, variation) -> np.ndarray:
    """Sum over targets of the per-receive-element transfer (n_el x n_f)."""
    medium = phantom.medium
    c = medium.sound_speed
    x = geom.positions
    tx_idx, tx_delay = scheme.firing(geom, c)
    g = variation.gains
    d = variation.delays
    tx_delay = tx_delay + d[tx_idx]
    # complex wavenumber per metre: phase plus attenuation
    kx = 2j * np.pi * freqs / c + medium.attenuation_np_per_m(freqs)
    rx_phase = np.exp(-2j * np.pi * np.outer(d, freqs)) * g[:, None]
    out = np.zeros((geom.n_elements, freqs.size), dtype=complex)
    for pin in phantom.pins:
        r_tx = np.hypot(x[tx_idx] - pin.lateral, pin.depth)
        r_rx = np.hypot(x - pin.lateral, pin.depth)
        e_tx = np.exp(-np.outer(r_tx, kx) - 2j * np.pi * np.outer(tx_delay, freqs))
        field_at_pin = (g[tx_idx] / np.sqrt(r_tx)) @ e_tx
        e_rx = np.exp(-np.outer(r_rx, kx)) / np.sqrt(r_rx)[:, None]
        out += pin.reflection(medium) * field_at_pin[None, :] * e_rx * rx_phase
    for plate in phantom.plates:
        gamma = (plate.impedance - medium.impedance) / (plate.impedance + medium.impedance)
        for j, tau in zip(tx_idx, tx_delay):
            path = np.hypot(2 * plate.depth, x - x[j])
            e = np.exp(-np.outer(path, kx) - 2j * np.pi * tau * freqs)
            out += gamma * g[j] * e * (2.0 / path)[:, None] * rx_phase
    return out


def simulate(
    phantom: Phantom,
    geom: ArrayGeometry,
    scheme: TxScheme,
    element: ElementModel,
    cfg: ReceiveConfig,
    variation: ElementVariation | None = None,
    rng: np.random.Generator | None = None,
) -> ChannelData:
    """One transmit event through the full chain to quantised channel data.

    drive -> H2 -> targets (delay, spreading, Gamma, attenuation) -> sum
    -> fixed gain + TGC -> white noise -> round -> clip. Noise is drawn
    from ``rng`` if given, else from a generator seeded with ``cfg.seed``.
    Clipping sets ``saturated`` and emits a :class:`SaturationWarning`.
    """
    if variation is None:
        variation = ElementVariation.uniform(geom.n_elements)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    n = cfg.n_samples
    c = phantom.medium.sound_speed
    freqs = np.fft.rfftfreq(n, cfg.dt)
    chip = chip_spectrum(scheme.drive, element, freqs, cfg.sample_rate)
    band = np.abs(chip) > 1e-9 * np.abs(chip).max() if np.any(chip) else np.zeros(freqs.size, bool)

    spectra = np.zeros((geom.n_elements, freqs.size), dtype=complex)
    if np.any(band) and (phantom.pins or phantom.plates):
        spectra[:, band] = _propagated_spectra(phantom, geom, scheme, freqs[band], variation)
        spectra[:, band] *= chip[band]
    rf = np.fft.irfft(spectra, n, axis=1)

    t = np.arange(n) * cfg.dt
    gain = 10 ** (cfg.gain_db(t, c) / 20) * cfg.sensitivity
    rf = rf * gain[None, :]
    if cfg.noise_rms > 0:
        rf = rf + rng.normal(0.0, cfg.noise_rms, rf.shape)
    q = np.rint(rf)
    fs = cfg.full_scale
    saturated = bool(np.any(np.abs(q) > fs))
    if saturated:
        warnings.warn(
            f"{np.count_nonzero(np.abs(q) > fs)} samples clipped at +/-{fs} LSB",
            SaturationWarning,
            stacklevel=2,
        )
    q = np.clip(q, -fs, fs).astype(np.int16)
    return ChannelData(q, cfg.dt, scheme, cfg, 0.0, saturated)


def golay_transmit_pair(
    phantom: Phantom,
    geom: ArrayGeometry,
    scheme_a: TxScheme,
    scheme_b: TxScheme,
    element: ElementModel,
    cfg: ReceiveConfig,
    variation: ElementVariation | None = None,
    cfg_b: ReceiveConfig | None = None,
) -> tuple[ChannelData, ChannelData]:
    """The two shots of a complementary-coded frame.

    Both shots see identical targets; their noise comes from two successive
    draws of one generator seeded with ``cfg.seed``.
    """
    if cfg_b is not None and cfg_b != cfg:
        raise ValueError("both shots of a Golay pair must share one receive config")
    if (scheme_a.kind, scheme_a.element, scheme_a.r_v) != (
        scheme_b.kind,
        scheme_b.element,
        scheme_b.r_v,
    ):
        raise ValueError("both shots of a Golay pair must use the same transmit geometry")
    if scheme_a.code is not None and scheme_b.code is not None:
        a, b = scheme_a.code.chips, scheme_b.code.chips
        acf = np.correlate(a, a, "full") + np.correlate(b, b, "full")
        if a.size != b.size or np.any(np.delete(acf, a.size - 1)):
            raise ValueError("codes do not form a complementary pair")
    scheme_a = replace(scheme_a, tag=scheme_a.tag or "A")
    scheme_b = replace(scheme_b, tag=scheme_b.tag or "B")
    rng = np.random.default_rng(cfg.seed)
    shot_a = simulate(phantom, geom, scheme_a, element, cfg, variation, rng)
    shot_b = simulate(phantom, geom, scheme_b, element, cfg, variation, rng)
    return shot_a, shot_b


def sta_acquisition(
    phantom: Phantom,
    geom: ArrayGeometry,
    drive: SampledWaveform,
    element: ElementModel,
    cfg: ReceiveConfig,
    elements=None,
    variation: ElementVariation | None = None,
) -> list[ChannelData]:
    """One shot per transmit element, noise drawn from one seeded stream."""
    elements = range(geom.n_elements) if elements is None else elements
    rng = np.random.default_rng(cfg.seed)
    return [
        simulate(phantom, geom, TxScheme.sta(int(j), drive), element, cfg, variation, rng)
        for j in elements
    ]
