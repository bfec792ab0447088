"""End-to-end pipelines behind each characterisation figure.

Every function here is a thin composition of the library modules and is
deterministic given its inputs (noise comes from explicit seeds).
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .acquisition import (
    ArrayGeometry,
    ChannelData,
    ReceiveConfig,
    TxScheme,
    golay_transmit_pair,
    simulate,
    sta_acquisition,
    two_way_chip,
)
from .processing import (
    BeamformedImage,
    Raster,
    correlate,
    correlate_channels,
    das_beamform,
    golay_combine,
    make_golay_references,
    make_reference,
    sta_full_beamform,
    trim_tail,
)
from .propagation import Medium, Phantom, PinTarget, attenuation_filter, grating, water_tank
from .transducer import ElementModel, TransferFunction, estimate_two_way_tf
from .waveforms import (
    AliasingWarning,
    SampledWaveform,
    bpsk_modulate,
    golay_pair,
    resample,
    synth_pwm_pulse,
)

CYCLES = (0.5, 1.0, 1.5, 2.0)
RV_SWEEP = (10.5e-3, 14e-3, 17.5e-3, 21e-3)

# Echo window cut around the plate arrival: lead-in and length in seconds.
_LEAD = 1e-6
_SPAN = 5e-6


def water_config(**changes) -> ReceiveConfig:
    """Receive settings of the water-tank measurement (no TGC ramp, no noise)."""
    base = dict(tgc_slope=0.0, noise_rms=0.0)
    base.update(changes)
    return ReceiveConfig(**base)


def plate_echo(
    drive: SampledWaveform,
    element: ElementModel,
    cfg: ReceiveConfig | None = None,
    geom: ArrayGeometry | None = None,
    plate_depth: float = 50e-3,
) -> SampledWaveform:
    """Plate echo seen by the centre element when the centre element fires.

    The returned window starts 1 us before the nominal arrival and keeps the
    absolute time axis in ``t0``.
    """
    cfg = cfg or water_config()
    geom = geom or ArrayGeometry()
    phantom = water_tank(plate_depth)
    mid = geom.center_element
    data = simulate(phantom, geom, TxScheme.sta(mid, drive), element, cfg)
    arrival = 2 * plate_depth / phantom.medium.sound_speed
    i0 = int(round((arrival - _LEAD) * cfg.sample_rate))
    n = int(round(_SPAN * cfg.sample_rate))
    if i0 < 0 or i0 + n > data.n_samples:
        raise ValueError("plate echo falls outside the receive window")
    tr = data.trace(mid)
    return tr.with_samples(tr.samples[i0 : i0 + n], t0=tr.t0 + i0 * tr.dt)


def received_chips(element: ElementModel, cycles=CYCLES, cfg=None, **kw) -> dict:
    """Plate echoes for each PWM pulse length, keyed by cycle count."""
    return {c: plate_echo(synth_pwm_pulse(c), element, cfg, **kw) for c in cycles}


def attenuate(w: SampledWaveform, depth_cm: float, alpha_db: float = 0.5) -> SampledWaveform:
    """Apply round-trip attenuation for a target ``depth_cm`` deep.

    The record is zero-padded by its own length on both sides first so the
    zero-phase filter does not wrap around.
    """
    n = len(w)
    return attenuation_filter(w.padded(n, n), 2 * depth_cm, alpha_db)


def chip_bandwidths(chips: dict) -> dict:
    """Fractional bandwidth of each chip's periodogram (8x zero padded)."""
    return {
        k: metrics.fractional_bandwidth(metrics.periodogram(w, 8 * len(w))) for k, w in chips.items()
    }


def correlator_peaks(chips: dict, depth_cm: float = 0.0, alpha_db: float = 0.5) -> dict:
    """Peak correlator output of each chip against its own unit-energy reference.

    With ``depth_cm`` > 0 the received chip is attenuated before correlation
    while the reference stays the unattenuated echo.
    """
    out = {}
    for k, w in chips.items():
        ref = make_reference(w, f"{k}c")
        rx = attenuate(w, depth_cm, alpha_db) if depth_cm > 0 else w
        out[k] = float(np.abs(correlate(rx, ref).samples).max())
    return out


@dataclass(frozen=True)
class TfRoundTrip:
    estimate: TransferFunction
    path_gain: float
    truth: TransferFunction

    def normalized(self) -> np.ndarray:
        """|estimate| divided by the known path gain, on the valid bins."""
        return np.abs(self.estimate.values[self.estimate.valid]) / self.path_gain

    def max_error(self) -> float:
        """Largest magnitude error on the valid support, relative to the peak of the truth."""
        f = self.estimate.freqs[self.estimate.valid]
        err = np.abs(self.normalized() - np.abs(self.truth.at(f)))
        return float(err.max() / np.abs(self.truth.values).max())


def tf_round_trip(
    element: ElementModel,
    cycles: float = 0.5,
    cfg: ReceiveConfig | None = None,
    plate_depth: float = 50e-3,
    reg: float = 0.05,
) -> TfRoundTrip:
    """Estimate H2 from a simulated plate echo and the known drive.

    The drive is brought to the receive rate with its filter tails kept; the
    known plate path gain (Gamma * 2/L times the receive gain) is returned so
    the estimate can be compared with the element's true response.
    """
    cfg = cfg or water_config()
    drive = synth_pwm_pulse(cycles)
    rx = plate_echo(drive, element, cfg, plate_depth=plate_depth)
    with warnings.catch_warnings():
        # PWM harmonics above the receive Nyquist are removed by the
        # anti-aliasing filter, which is what is wanted here.
        warnings.simplefilter("ignore", AliasingWarning)
        tx = resample(drive, cfg.sample_rate, keep_tails=True)
    est = estimate_two_way_tf(tx, rx, reg)
    medium = water_tank(plate_depth).medium
    gamma = (44.0 - medium.impedance) / (44.0 + medium.impedance)
    gain = gamma * 2 / (2 * plate_depth) * 10 ** (cfg.fixed_gain / 20) * cfg.sensitivity
    return TfRoundTrip(est, gain, element.two_way)


def coded_snr_gain(
    element: ElementModel,
    n_chips: int = 8,
    cycles: float = 2.0,
    noise_rms: float = 1.0,
    n_samples: int = 1 << 16,
    seed: int = 0,
    sample_rate: float = 80e6,
) -> float:
    """SNR improvement of a Golay pair (two shots) over one chip, in dB.

    Each shot is the noise-free two-way waveform buried in independent white
    Gaussian noise and passed through its matched correlator. The noise RMS
    is measured over the first part of the output, well before the echo.
    """
    chip = synth_pwm_pulse(cycles)
    a, b = golay_pair(n_chips)

    def echo(drive):
        return trim_tail(two_way_chip(drive, element, sample_rate, 4096))

    single = echo(chip)
    wa, wb = echo(bpsk_modulate(a, chip)), echo(bpsk_modulate(b, chip))
    ref = make_reference(single, "chip")
    ra, rb = make_golay_references(wa, wb)
    rng = np.random.default_rng(seed)
    pos = n_samples // 2

    def record(w):
        x = rng.normal(0.0, noise_rms, n_samples)
        x[pos : pos + len(w)] += w.samples
        return SampledWaveform(x, sample_rate)

    out_single = correlate(record(single), ref)
    out_coded = golay_combine(correlate(record(wa), ra), correlate(record(wb), rb))
    region = (-np.inf, (pos - 4 * len(wa)) / sample_rate)
    return metrics.snr_gain(out_coded, out_single, region)


# --- pin-target imaging -------------------------------------------------


def chip_reference(drive: SampledWaveform, element: ElementModel, sample_rate: float = 80e6):
    """Noise-free two-way waveform of ``drive`` used as a correlator reference."""
    return trim_tail(two_way_chip(drive, element, sample_rate, 8192))


@dataclass(frozen=True)
class ImagingSetup:
    element: ElementModel = field(default_factory=ElementModel.gaussian)
    geom: ArrayGeometry = field(default_factory=ArrayGeometry)
    cfg: ReceiveConfig = field(default_factory=lambda: ReceiveConfig(window=62.5e-6))
    medium: Medium = field(default_factory=Medium)
    interp: str = "linear"


def _coded_drives(cycles: float, n_chips: int):
    chip = synth_pwm_pulse(cycles)
    if n_chips == 1:
        return chip, None
    a, b = golay_pair(n_chips)
    return (bpsk_modulate(a, chip), a), (bpsk_modulate(b, chip), b)


def dw_channels(
    phantom: Phantom, setup: ImagingSetup, r_v: float, cycles: float = 2.0, n_chips: int = 1
) -> ChannelData:
    """Correlated (and, for coded shots, Golay-combined) DW channel data."""
    el, geom, cfg = setup.element, setup.geom, setup.cfg
    if n_chips == 1:
        chip = synth_pwm_pulse(cycles)
        data = simulate(phantom, geom, TxScheme.dw(r_v, chip), el, cfg)
        return correlate_channels(data, make_reference(chip_reference(chip, el, cfg.sample_rate)))
    (wa, a), (wb, b) = _coded_drives(cycles, n_chips)
    da, db = golay_transmit_pair(
        phantom, geom, TxScheme.dw(r_v, wa, code=a), TxScheme.dw(r_v, wb, code=b), el, cfg
    )
    ra, rb = make_golay_references(chip_reference(wa, el, cfg.sample_rate), chip_reference(wb, el, cfg.sample_rate))
    return golay_combine(correlate_channels(da, ra), correlate_channels(db, rb))


def sta_channels(phantom: Phantom, setup: ImagingSetup, cycles: float = 2.0) -> list[ChannelData]:
    """Correlated single-chip shots from every transmit element."""
    el, cfg = setup.element, setup.cfg
    chip = synth_pwm_pulse(cycles)
    ref = make_reference(chip_reference(chip, el, cfg.sample_rate))
    return [correlate_channels(s, ref) for s in sta_acquisition(phantom, setup.geom, chip, el, cfg)]


def pin_image(
    phantom: Phantom,
    setup: ImagingSetup,
    raster: Raster,
    *,
    scheme: str = "dw",
    r_v: float = 14e-3,
    cycles: float = 2.0,
    n_chips: int = 1,
) -> BeamformedImage:
    """Beamformed image of ``phantom`` on ``raster`` for a DW or full STA scan."""
    c = phantom.medium.sound_speed
    if scheme == "dw":
        data = dw_channels(phantom, setup, r_v, cycles, n_chips)
        return das_beamform(data, setup.geom, raster, c, interp=setup.interp)
    if scheme == "sta":
        if n_chips != 1:
            raise ValueError("STA scans are single-chip")
        shots = sta_channels(phantom, setup, cycles)
        return sta_full_beamform(shots, setup.geom, raster, c, interp=setup.interp)
    raise ValueError(f"unknown scheme {scheme!r}")


def resolution_at(
    depth: float = 40e-3,
    setup: ImagingSetup | None = None,
    *,
    cycles: float = 2.0,
    n_chips: int = 1,
    r_v: float = 14e-3,
    extent=(3e-3, 2e-3),
    spacing: float = 25e-6,
) -> tuple[metrics.ResolutionReport, BeamformedImage]:
    """LSF and range resolution of a single pin on the array axis."""
    setup = setup or ImagingSetup()
    phantom = Phantom(setup.medium, [PinTarget(0.0, depth)])
    raster = Raster((0.0, depth), extent, spacing)
    img = pin_image(phantom, setup, raster, r_v=r_v, cycles=cycles, n_chips=n_chips)
    return metrics.resolution_report(img, setup.medium.sound_speed), img


def grating_amplitudes(
    data,
    pins,
    setup: ImagingSetup,
    c: float,
    half_window: float = 0.25e-3,
    spacing: float = 25e-6,
) -> np.ndarray:
    """Peak image amplitude around each pin, beamforming only a small patch per pin.

    ``data`` is one DW :class:`ChannelData` or a list of STA shots.
    """
    out = []
    for p in pins:
        raster = Raster(p.position, (2 * half_window, 2 * half_window), spacing)
        if isinstance(data, ChannelData):
            img = das_beamform(data, setup.geom, raster, c, interp=setup.interp)
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)
                img = sta_full_beamform(data, setup.geom, raster, c, interp=setup.interp)
        out.append(img.amplitudes.max())
    return np.array(out)


def _dw_grating(args):
    phantom, setup, r_v, cycles, n_chips = args
    data = dw_channels(phantom, setup, r_v, cycles, n_chips)
    return grating_amplitudes(data, phantom.pins, setup, phantom.medium.sound_speed)


def grating_phantom(depth: float = 25e-3, count: int = 7, medium: Medium | None = None) -> Phantom:
    return Phantom(medium or Medium(), grating(depth, 5e-3, count))


def rv_sweep(
    phantom: Phantom,
    setup: ImagingSetup | None = None,
    r_vs=RV_SWEEP,
    cycles: float = 2.0,
    n_chips: int = 8,
    jobs: int = 1,
) -> dict:
    """Per-pin linear amplitudes along a grating for each virtual-source distance.

    Independent r_v values run in ``jobs`` worker processes.
    """
    setup = setup or ImagingSetup()
    tasks = [(phantom, setup, rv, cycles, n_chips) for rv in r_vs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_dw_grating, tasks))
    else:
        results = [_dw_grating(t) for t in tasks]
    return dict(zip(r_vs, results))


def sta_grating(phantom: Phantom, setup: ImagingSetup | None = None, cycles: float = 2.0) -> np.ndarray:
    """Per-pin linear amplitudes along a grating from a full single-chip STA scan."""
    setup = setup or ImagingSetup()
    shots = sta_channels(phantom, setup, cycles)
    return grating_amplitudes(shots, phantom.pins, setup, phantom.medium.sound_speed)
