"""Characterisation figures: PSD, bandwidth, LSF, range resolution, beamwidth, SNR."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .processing import BeamformedImage
from .waveforms import SampledWaveform


class BoundaryPeakError(ValueError):
    """The image maximum sits on the raster edge; widths are not reliable."""


@dataclass(frozen=True, eq=False)
class PsdEstimate:
    freqs: np.ndarray
    density: np.ndarray
    n: int
    fs: float

    def positive(self) -> "PsdEstimate":
        """The f >= 0 half (values not doubled)."""
        keep = self.freqs >= 0
        return PsdEstimate(self.freqs[keep], self.density[keep], self.n, self.fs)


def periodogram(x: SampledWaveform, nfft: int | None = None) -> PsdEstimate:
    """Rectangular-window periodogram |sum x_n e^{-j2pi f n/fs}|^2 / (N fs).

    Evaluated on ``nfft`` (>= N) equally spaced frequencies in (-fs/2, fs/2];
    zero padding only refines the frequency grid, N stays the record length.
    """
    n = len(x)
    nfft = n if nfft is None else int(nfft)
    if nfft < n:
        raise ValueError("nfft must not be shorter than the record")
    X = np.fft.fft(x.samples, nfft)
    f = np.fft.fftfreq(nfft, x.dt)
    if nfft % 2 == 0:
        f[nfft // 2] = x.sample_rate / 2  # -fs/2 folds onto +fs/2
    order = np.argsort(f)
    p = np.abs(X) ** 2 / (n * x.sample_rate)
    return PsdEstimate(f[order], p[order], n, x.sample_rate)


def psd_energy(psd: PsdEstimate) -> float:
    """Signal energy (dt * sum x^2) recovered from the PSD."""
    df = psd.fs / psd.freqs.size
    return float(np.sum(psd.density) * df * psd.n / psd.fs)


class Bandwidth(NamedTuple):
    fbw: float
    fc: float
    f_lo: float
    f_hi: float


def _crossing(x0, x1, y0, y1, level):
    return x0 + (level - y0) * (x1 - x0) / (y1 - y0)


def fractional_bandwidth(psd: PsdEstimate) -> Bandwidth:
    """FWHM of the PSD main lobe over its centre frequency.

    The lobe is the contiguous run of bins at or above half the maximum
    around the global peak (positive frequencies); its edges are located by
    linear interpolation. The centre is the midpoint of the band.
    """
    half_psd = psd.positive()
    f, p = half_psd.freqs, half_psd.density
    k = int(np.argmax(p))
    level = p[k] / 2
    lo = k
    while lo > 0 and p[lo - 1] >= level:
        lo -= 1
    hi = k
    while hi < p.size - 1 and p[hi + 1] >= level:
        hi += 1
    if lo == 0 or hi == p.size - 1:
        raise ValueError("no half-maximum crossing within the frequency grid")
    f_lo = _crossing(f[lo - 1], f[lo], p[lo - 1], p[lo], level)
    f_hi = _crossing(f[hi], f[hi + 1], p[hi], p[hi + 1], level)
    fc = 0.5 * (f_lo + f_hi)
    return Bandwidth((f_hi - f_lo) / fc, fc, f_lo, f_hi)


def spectral_centroid(x: SampledWaveform) -> float:
    """Power-weighted mean of the positive frequencies."""
    p = np.abs(np.fft.rfft(x.samples)) ** 2
    f = np.fft.rfftfreq(len(x), x.dt)
    return float(np.sum(f * p) / np.sum(p))


def _lobe_edges(y: np.ndarray, k: int, level: float) -> tuple[float, float]:
    """Fractional indices where ``y`` first drops below ``level`` either side of ``k``."""
    lo = k
    while lo > 0 and y[lo - 1] >= level:
        lo -= 1
    hi = k
    while hi < y.size - 1 and y[hi + 1] >= level:
        hi += 1
    if lo == 0 or hi == y.size - 1:
        raise BoundaryPeakError("main lobe reaches the edge of the profile")
    left = _crossing(lo - 1, lo, y[lo - 1], y[lo], level)
    right = _crossing(hi, hi + 1, y[hi], y[hi + 1], level)
    return left, right


def profile_width(y, spacing: float, level_db: float, k: int | None = None) -> float:
    """Width of the lobe around index ``k`` (default: argmax) at ``level_db``."""
    y = np.asarray(y, dtype=float)
    k = int(np.argmax(y)) if k is None else k
    left, right = _lobe_edges(y, k, y[k] * 10 ** (level_db / 20))
    return (right - left) * spacing


def sidelobe_level(y, k: int | None = None) -> float:
    """Highest local maximum outside the contiguous -6 dB main lobe, in dB.

    Returns ``-inf`` when the profile has no such maximum.
    """
    y = np.asarray(y, dtype=float)
    k = int(np.argmax(y)) if k is None else k
    left, right = _lobe_edges(y, k, y[k] / 2)
    interior = np.arange(1, y.size - 1)
    is_max = (y[interior] >= y[interior - 1]) & (y[interior] >= y[interior + 1])
    peaks = interior[is_max & ((interior < left) | (interior > right))]
    if peaks.size == 0:
        return -np.inf
    return float(20 * np.log10(y[peaks].max() / y[k]))


def _peak_index(img: BeamformedImage) -> tuple[int, int]:
    a = img.amplitudes
    iz, ix = np.unravel_index(int(np.argmax(a)), a.shape)  # first (smallest) index on ties
    if iz in (0, a.shape[0] - 1) or ix in (0, a.shape[1] - 1):
        raise BoundaryPeakError(f"image maximum at raster edge (row {iz}, col {ix})")
    return int(iz), int(ix)


@dataclass(frozen=True, eq=False)
class Profile:
    """A 1-D cut through an image: coordinates (m) and amplitudes."""

    positions: np.ndarray
    amplitudes: np.ndarray

    def db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 20 * np.log10(self.amplitudes / self.amplitudes.max())


@dataclass(frozen=True)
class LsfResult:
    profile: Profile
    width_3db: float
    width_6db: float
    sidelobe_db: float
    peak_position: tuple[float, float]


@dataclass(frozen=True)
class RangeResult:
    profile: Profile
    width_3db: float
    width_3db_seconds: float
    peak_position: tuple[float, float]


@dataclass(frozen=True)
class ResolutionReport:
    lsf_3db_width: float
    lsf_6db_width: float
    lateral_sidelobe_db: float
    range_3db_width: float
    range_3db_seconds: float
    peak_position: tuple[float, float]

    def text(self) -> str:
        return "\n".join(
            [
                f"peak at x = {self.peak_position[0] * 1e3:.3f} mm, z = {self.peak_position[1] * 1e3:.3f} mm",
                f"LSF -3 dB width     {self.lsf_3db_width * 1e3:.3f} mm",
                f"LSF -6 dB width     {self.lsf_6db_width * 1e3:.3f} mm",
                f"lateral sidelobe    {self.lateral_sidelobe_db:.1f} dB",
                f"range -3 dB width   {self.range_3db_width * 1e3:.3f} mm ({self.range_3db_seconds * 1e9:.0f} ns)",
            ]
        )


def lsf_extract(img: BeamformedImage) -> LsfResult:
    """Lateral cut through the image maximum with -3/-6 dB widths and sidelobe."""
    iz, ix = _peak_index(img)
    r = img.raster
    y = img.amplitudes[iz]
    return LsfResult(
        Profile(r.lateral.copy(), y.copy()),
        profile_width(y, r.spacing, -3.0, ix),
        profile_width(y, r.spacing, -6.0, ix),
        sidelobe_level(y, ix),
        (float(r.lateral[ix]), float(r.depth[iz])),
    )


def range_resolution_extract(img: BeamformedImage, c: float) -> RangeResult:
    """Depth cut through the maximum; width also given as two-way time."""
    iz, ix = _peak_index(img)
    r = img.raster
    y = img.amplitudes[:, ix]
    w = profile_width(y, r.spacing, -3.0, iz)
    return RangeResult(
        Profile(r.depth.copy(), y.copy()), w, w / (c / 2), (float(r.lateral[ix]), float(r.depth[iz]))
    )


def resolution_report(img: BeamformedImage, c: float) -> ResolutionReport:
    lsf = lsf_extract(img)
    rng = range_resolution_extract(img, c)
    return ResolutionReport(
        lsf.width_3db, lsf.width_6db, lsf.sidelobe_db, rng.width_3db, rng.width_3db_seconds, lsf.peak_position
    )


@dataclass(frozen=True, eq=False)
class BeamwidthProfile:
    """Per-pin amplitudes in dB along a grating.

    ``reference`` is the linear amplitude mapped to 0 dB. By default it is the
    profile's own maximum; a shared reference lets profiles of different
    schemes be compared on one scale (with the caveat that coding gain and
    the number of transmissions differ between schemes).
    """

    positions: np.ndarray
    amplitudes_db: np.ndarray
    label: str
    reference: float

    @property
    def linear(self) -> np.ndarray:
        return self.reference * 10 ** (self.amplitudes_db / 20)

    def renormalized(self, reference: float | None = None) -> "BeamwidthProfile":
        return beamwidth_profile(self.linear, self.positions, self.label, reference)


def pin_amplitudes(img: BeamformedImage, pins, half_window: float = 0.5e-3) -> np.ndarray:
    """Maximum image amplitude within +/- ``half_window`` of each (lateral, depth) pin."""
    pins = [tuple(p) for p in pins]
    for a in range(len(pins)):
        for b in range(a + 1, len(pins)):
            dx = abs(pins[a][0] - pins[b][0])
            dz = abs(pins[a][1] - pins[b][1])
            if dx < 2 * half_window and dz < 2 * half_window:
                raise ValueError("pin windows overlap; responses cannot be separated")
    r = img.raster
    out = []
    for x, z in pins:
        cols = np.abs(r.lateral - x) <= half_window + 1e-12
        rows = np.abs(r.depth - z) <= half_window + 1e-12
        if not cols.any() or not rows.any():
            raise ValueError(f"pin at ({x:g}, {z:g}) lies outside the raster")
        out.append(img.amplitudes[np.ix_(rows, cols)].max())
    return np.array(out)


def beamwidth_profile(amplitudes, positions, label: str = "", reference: float | None = None):
    """Normalise per-pin amplitudes to dB re ``reference`` (default: their max)."""
    a = np.asarray(amplitudes, dtype=float)
    if np.any(a <= 0):
        raise ValueError("pin amplitudes must be positive")
    ref = float(a.max()) if reference is None else float(reference)
    return BeamwidthProfile(np.asarray(positions, float), 20 * np.log10(a / ref), label, ref)


def _region(x, noise_region) -> np.ndarray:
    """Samples of ``x`` inside a (t_start, t_stop) window or index slice."""
    if isinstance(noise_region, slice):
        return np.asarray(x.samples if hasattr(x, "samples") else x)[noise_region]
    t = x.times()
    lo, hi = noise_region
    return x.samples[(t >= lo) & (t < hi)]


def snr_db(output, noise_region) -> float:
    """20 log10(peak |output| / noise RMS over ``noise_region``)."""
    noise = _region(output, noise_region)
    if noise.size == 0:
        raise ValueError("empty noise region")
    x = output.samples if hasattr(output, "samples") else np.asarray(output)
    return float(20 * np.log10(np.abs(x).max() / np.sqrt(np.mean(noise**2))))


def snr_gain(coded_output, pulsed_output, noise_region) -> float:
    """SNR improvement (dB) of the coded output over the pulsed one."""
    return snr_db(coded_output, noise_region) - snr_db(pulsed_output, noise_region)
