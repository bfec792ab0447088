"""Correlation reception and delay-and-sum beamforming."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal

from .acquisition import ArrayGeometry, ChannelData, TxScheme
from .waveforms import SampledWaveform, signal_energy


@dataclass(frozen=True, eq=False)
class ReferenceSignal:
    """Correlator reference; unit energy unless built as a Golay pair member."""

    waveform: SampledWaveform
    source: str = ""

    @property
    def energy(self) -> float:
        return signal_energy(self.waveform)


def trim_tail(w: SampledWaveform, rel: float = 1e-6) -> SampledWaveform:
    """Drop trailing samples below ``rel`` times the peak magnitude."""
    x = w.samples
    above = np.flatnonzero(np.abs(x) >= rel * np.abs(x).max())
    return w.with_samples(x[: above[-1] + 1] if above.size else x[:1])


def make_reference(w: SampledWaveform, source: str = "") -> ReferenceSignal:
    """Scale ``w`` to unit energy so correlator gain is the same for every chip."""
    e = signal_energy(w)
    if e == 0:
        raise ValueError("cannot normalise a zero-energy reference")
    return ReferenceSignal(w.scaled(1.0 / np.sqrt(e)), source)


def make_golay_references(
    wa: SampledWaveform, wb: SampledWaveform, source: str = "golay"
) -> tuple[ReferenceSignal, ReferenceSignal]:
    """References for the two codes of a pair, sharing one scale factor.

    The received A and B code waveforms differ slightly in energy once the
    chips ring into each other, so they are scaled jointly to a mean energy
    of one. Separate normalisation would break the sidelobe cancellation.
    Both are zero-padded at the end to a common length so the correlator
    outputs land on one time grid.
    """
    if wa.t0 != wb.t0 or wa.sample_rate != wb.sample_rate:
        raise ValueError("Golay references must share t0 and sample rate")
    n = max(len(wa), len(wb))
    wa, wb = wa.padded(0, n - len(wa)), wb.padded(0, n - len(wb))
    e = 0.5 * (signal_energy(wa) + signal_energy(wb))
    if e == 0:
        raise ValueError("cannot normalise zero-energy references")
    k = 1.0 / np.sqrt(e)
    return ReferenceSignal(wa.scaled(k), source + ":A"), ReferenceSignal(wb.scaled(k), source + ":B")


def correlate(trace: SampledWaveform, ref: ReferenceSignal) -> SampledWaveform:
    """Correlation receiver output, dt * sum_n trace[n + lag] * ref[n].

    Output time is trace.t0 - ref.t0 + lag * dt, so an echo of the reference
    delayed by tau peaks at tau.
    """
    r = ref.waveform
    if trace.sample_rate != r.sample_rate:
        raise ValueError("trace and reference sample rates differ")
    y = signal.correlate(trace.samples, r.samples, mode="full") * trace.dt
    t0 = trace.t0 - r.t0 - (len(r) - 1) * trace.dt
    return trace.with_samples(y, t0=t0)


def correlate_channels(data: ChannelData, ref: ReferenceSignal) -> ChannelData:
    """:func:`correlate` applied to every receive channel."""
    r = ref.waveform
    if not np.isclose(data.sample_rate, r.sample_rate, rtol=1e-12):
        raise ValueError("channel and reference sample rates differ")
    x = data.samples.astype(float)
    y = signal.fftconvolve(x, r.samples[::-1][None, :], axes=1) * data.dt
    t0 = data.t0 - r.t0 - (len(r) - 1) * data.dt
    return data.with_samples(y, t0=t0)


def golay_combine(corr_a, corr_b):
    """Sample-wise sum of the A and B correlator outputs.

    Works on :class:`SampledWaveform` or :class:`ChannelData` inputs.
    """
    if corr_a.samples.shape != corr_b.samples.shape:
        raise ValueError("correlator outputs differ in length")
    if isinstance(corr_a, SampledWaveform):
        if corr_a.sample_rate != corr_b.sample_rate or corr_a.t0 != corr_b.t0:
            raise ValueError("correlator outputs are on different time grids")
        return corr_a + corr_b
    if corr_a.dt != corr_b.dt or corr_a.t0 != corr_b.t0:
        raise ValueError("correlator outputs are on different time grids")
    return corr_a.with_samples(corr_a.samples + corr_b.samples)


@dataclass(frozen=True)
class Raster:
    """Regular grid of field points; both edges of the extent are included."""

    center: tuple[float, float]
    extent: tuple[float, float] = (6e-3, 6e-3)
    spacing: float = 25e-6

    def __post_init__(self):
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        for e in self.extent:
            n = e / self.spacing
            if e < 0 or abs(n - round(n)) > 1e-6:
                raise ValueError("extent must be a non-negative multiple of spacing")

    @property
    def shape(self) -> tuple[int, int]:
        """(n_depth, n_lateral)."""
        nx = int(round(self.extent[0] / self.spacing)) + 1
        nz = int(round(self.extent[1] / self.spacing)) + 1
        return nz, nx

    @property
    def lateral(self) -> np.ndarray:
        nx = self.shape[1]
        return self.center[0] + (np.arange(nx) - (nx - 1) / 2) * self.spacing

    @property
    def depth(self) -> np.ndarray:
        nz = self.shape[0]
        return self.center[1] + (np.arange(nz) - (nz - 1) / 2) * self.spacing

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened (lateral, depth) coordinates in row-major (depth, lateral) order."""
        zz, xx = np.meshgrid(self.depth, self.lateral, indexing="ij")
        return xx.ravel(), zz.ravel()


@dataclass(frozen=True, eq=False)
class BeamformedImage:
    """Envelope amplitude over a raster, ``amplitudes[depth, lateral]``."""

    amplitudes: np.ndarray
    raster: Raster
    scheme: str = ""
    out_of_window: np.ndarray | None = None

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=float)
        if a.shape != self.raster.shape:
            raise ValueError(f"image shape {a.shape} does not match raster {self.raster.shape}")
        object.__setattr__(self, "amplitudes", a)
        if self.out_of_window is None:
            object.__setattr__(self, "out_of_window", np.zeros(a.shape, bool))

    def scaled(self, k: float) -> "BeamformedImage":
        return BeamformedImage(self.amplitudes * k, self.raster, self.scheme, self.out_of_window)


def transmit_time(scheme: TxScheme, geom: ArrayGeometry, px, pz, c: float) -> np.ndarray:
    """Time from t = 0 until the transmitted wave reaches each field point."""
    if scheme.kind == "sta":
        return np.hypot(px - geom.positions[scheme.element], pz) / c
    r_v = scheme.r_v
    tau_min = np.min(np.sqrt(r_v**2 + geom.positions**2) - r_v) / c
    return (np.hypot(px, pz + r_v) - r_v) / c - tau_min


def _baseband(data: ChannelData, demod_freq: float) -> np.ndarray:
    x = data.samples.astype(float)
    analytic = signal.hilbert(x, axis=1)
    return analytic * np.exp(-2j * np.pi * demod_freq * data.times())[None, :]


def _sum_channels(
    data: ChannelData,
    geom: ArrayGeometry,
    px,
    pz,
    c: float,
    t_tx,
    demod_freq: float,
    interp: str,
    apodization,
):
    if data.n_elements != geom.n_elements:
        raise ValueError("channel count does not match the array")
    iq = _baseband(data, demod_freq)
    n = data.n_samples
    acc = np.zeros(px.shape, dtype=complex)
    outside = np.zeros(px.shape, dtype=bool)
    x = geom.positions
    for i in range(geom.n_elements):
        w = 1.0 if apodization is None else apodization[i]
        if w == 0:
            continue
        t = t_tx + np.hypot(px - x[i], pz) / c
        idx = (t - data.t0) / data.dt
        bad = (idx < 0) | (idx > n - 1)
        outside |= bad
        idx = np.clip(idx, 0, n - 1)
        if interp == "linear":
            i0 = np.minimum(idx.astype(np.int64), n - 2)
            frac = idx - i0
            v = iq[i, i0] * (1 - frac) + iq[i, i0 + 1] * frac
        elif interp == "cubic":
            v = ndimage.map_coordinates(iq[i].real, [idx], order=3) + 1j * ndimage.map_coordinates(
                iq[i].imag, [idx], order=3
            )
        else:
            raise ValueError(f"unknown interpolation {interp!r}")
        acc += w * v * np.exp(2j * np.pi * demod_freq * t)
    return acc, outside


def das_beamform(
    data: ChannelData,
    geom: ArrayGeometry,
    raster: Raster,
    c: float,
    *,
    scheme: TxScheme | None = None,
    t_offset: float = 0.0,
    demod_freq: float = 7.5e6,
    interp: str = "linear",
    apodization=None,
) -> BeamformedImage:
    """Delay-and-sum image of one transmit event.

    Each trace is converted to its analytic signal, mixed down by
    ``demod_freq``, sampled at the transmit plus receive flight time (plus
    ``t_offset``, the pulse's own delay when beamforming uncorrelated data),
    remodulated and summed over receive elements. The image is the
    magnitude of that sum. Points whose flight time falls outside the record
    are zeroed and flagged in ``out_of_window``.
    """
    scheme = scheme or data.scheme
    if scheme is None:
        raise ValueError("transmit scheme unknown; pass scheme=")
    px, pz = raster.points()
    t_tx = transmit_time(scheme, geom, px, pz, c) + t_offset
    acc, outside = _sum_channels(data, geom, px, pz, c, t_tx, demod_freq, interp, apodization)
    amp = np.abs(acc)
    amp[outside] = 0.0
    return BeamformedImage(
        amp.reshape(raster.shape), raster, scheme.label, outside.reshape(raster.shape)
    )


def sta_full_beamform(
    shots,
    geom: ArrayGeometry,
    raster: Raster,
    c: float,
    *,
    t_offset: float = 0.0,
    demod_freq: float = 7.5e6,
    interp: str = "linear",
    apodization=None,
) -> BeamformedImage:
    """Coherent sum over every (transmit, receive) pair of an STA acquisition.

    ``shots`` is one :class:`ChannelData` per firing element; a subset is
    accepted with a warning.
    """
    shots = list(shots)
    if not shots:
        raise ValueError("no STA shots given")
    if any(s.scheme is None or s.scheme.kind != "sta" for s in shots):
        raise ValueError("all shots must be single-element (STA) transmissions")
    if len({s.scheme.element for s in shots}) < geom.n_elements:
        warnings.warn(
            f"STA beamforming over {len(shots)} of {geom.n_elements} transmit elements",
            stacklevel=2,
        )
    px, pz = raster.points()
    acc = np.zeros(px.shape, dtype=complex)
    outside = np.zeros(px.shape, dtype=bool)
    for shot in shots:
        t_tx = transmit_time(shot.scheme, geom, px, pz, c) + t_offset
        a, o = _sum_channels(shot, geom, px, pz, c, t_tx, demod_freq, interp, apodization)
        acc += a
        outside |= o
    amp = np.abs(acc)
    amp[outside] = 0.0
    return BeamformedImage(amp.reshape(raster.shape), raster, "sta", outside.reshape(raster.shape))
