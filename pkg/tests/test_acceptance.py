"""Acceptance suite: one test (or a few) per criterion, each recording a PASS/FAIL line.

Sub-checks that the default model cannot meet are marked ``xfail(strict=True)``:
they run at full tolerance, their FAIL line is reported, and an unexpected
pass would break the run.
"""

import json
import warnings

import numpy as np
import pytest

from pinchar import cli, experiments as ex, storage
from pinchar.acquisition import ReceiveConfig, TxScheme, simulate
from pinchar.metrics import (
    fractional_bandwidth,
    lsf_extract,
    periodogram,
    psd_energy,
    range_resolution_extract,
    spectral_centroid,
)
from pinchar.processing import Raster, das_beamform
from pinchar.propagation import Medium, Phantom, PinTarget, attenuation_filter
from pinchar.waveforms import (
    SampledWaveform,
    aperiodic_autocorrelation,
    golay_pair,
    signal_energy,
    synth_pwm_pulse,
)

from helpers import SMALL, cfg_with

CELL = 25e-6
C = 1450.0
PIN_DEPTH = 40e-3
EXTENT = (3e-3, 4e-3)


@pytest.fixture(scope="module")
def chips(element):
    """Plate echoes of the four PWM pulses, as recorded in the water tank."""
    return ex.received_chips(element)


@pytest.fixture(scope="module")
def pin_images():
    """DW (r_v = 14 mm) images of one pin at 40 mm, keyed by (cycles, chips)."""
    cache = {}

    def get(cycles, n_chips):
        key = (cycles, n_chips)
        if key not in cache:
            _, cache[key] = ex.resolution_at(PIN_DEPTH, cycles=cycles, n_chips=n_chips, extent=EXTENT)
        return cache[key]

    return get


@pytest.fixture(scope="module")
def sweep():
    phantom = ex.grating_phantom(25e-3, 7)
    setup = ex.ImagingSetup()
    dw = ex.rv_sweep(phantom, setup, ex.RV_SWEEP, cycles=2.0, n_chips=8)
    sta = ex.sta_grating(phantom, setup, cycles=2.0)
    return dw, sta


def db(x):
    return 20 * np.log10(x)


# --- 1 ---------------------------------------------------------------------


def test_c01_golay_exactness(criterion):
    ok = True
    for n in (2, 4, 8, 16):
        a, b = golay_pair(n)
        s = aperiodic_autocorrelation(a) + aperiodic_autocorrelation(b)
        ok &= s.dtype.kind == "i" and s[n - 1] == 2 * n and not np.any(np.delete(s, n - 1))
    criterion(1, ok, "complementary sum is 2N at lag 0 and 0 elsewhere for N = 2, 4, 8, 16")
    assert ok


# --- 2 ---------------------------------------------------------------------


def test_c02_pwm_structure(criterion):
    half = np.r_[np.zeros(6), np.full(20, 70.0), np.zeros(6)]
    ok = True
    for cycles in (0.5, 1, 1.5, 2):
        w = synth_pwm_pulse(cycles)
        expect = np.concatenate([(-1) ** k * half for k in range(int(2 * cycles))])
        ok &= w.sample_rate == 480e6 and np.array_equal(w.samples, expect)
    criterion(2, ok, "6/20/6 half-cycles at 480 MHz, bit-exact for 0.5/1/1.5/2 cycles")
    assert ok


# --- 3 ---------------------------------------------------------------------


def test_c03_parseval(criterion):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(8, 4096))
        w = SampledWaveform(rng.normal(size=n) * rng.uniform(1e-3, 1e3), 80e6)
        psd = periodogram(w, n * int(rng.integers(1, 5)))
        worst = max(worst, abs(psd_energy(psd) / signal_energy(w) - 1))
    ok = worst < 1e-6
    criterion(3, ok, f"worst relative PSD/energy mismatch {worst:.1e} over 100 waveforms")
    assert ok


# --- 4 ---------------------------------------------------------------------


def test_c04_bandwidth_ordering(chips, criterion):
    bw = ex.chip_bandwidths(chips)
    fbw = [bw[c].fbw for c in ex.CYCLES]
    target = [0.67, 0.62, 0.50, 0.39]
    ordered = all(a > b for a, b in zip(fbw, fbw[1:]))
    close = all(abs(f - t) <= 0.10 for f, t in zip(fbw, target))
    shown = "/".join(f"{100 * f:.1f}" for f in fbw)
    criterion(4, ordered and close, f"fbw {shown} % (targets 67/62/50/39 +/- 10 points), strictly decreasing")
    assert ordered and close


# --- 5 ---------------------------------------------------------------------


def test_c05_attenuation(chips, criterion):
    t = np.arange(320) / 80e6
    tone = SampledWaveform(np.cos(2 * np.pi * 7.5e6 * t), 80e6)
    tone_db = db(1 / np.abs(attenuation_filter(tone, 8.0, 0.5).samples).max())
    w = chips[2.0]
    att = ex.attenuate(w, 4.0)
    drop = np.abs(w.samples).max() / np.abs(att.samples).max()
    c0, c1 = spectral_centroid(w), spectral_centroid(att)
    ok = abs(tone_db - 30.0) <= 0.1 and 14 <= drop <= 28 and c1 < c0
    criterion(
        5, ok,
        f"tone loss {tone_db:.3f} dB; 2-cycle peak drop {drop:.1f}:1; centroid {c0 / 1e6:.2f} -> {c1 / 1e6:.2f} MHz",
    )
    assert ok


# --- 6 ---------------------------------------------------------------------


def test_c06_correlator_ratios(chips, criterion):
    p0 = ex.correlator_peaks(chips)
    p4 = ex.correlator_peaks(chips, depth_cm=4.0)
    r1 = (p0[1.0] / p0[2.0], p4[1.0] / p4[2.0])
    r05 = (p0[0.5] / p0[2.0], p4[0.5] / p4[2.0])
    ok = 0.55 <= r1[0] <= 0.75 and r1[1] > r1[0] and r05[1] > r05[0]
    criterion(6, ok, f"1c/2c {r1[0]:.3f} -> {r1[1]:.3f}; 0.5c/2c {r05[0]:.3f} -> {r05[1]:.3f} under 4 cm")
    assert ok


# --- 7 ---------------------------------------------------------------------


def test_c07_coded_snr_gain(element, criterion):
    gain = ex.coded_snr_gain(element, n_chips=8, cycles=2.0, seed=0)
    ok = abs(gain - 12.0) <= 1.5
    criterion(7, ok, f"8-chip Golay pair vs single chip: {gain:.2f} dB (ideal 10 log10(16) = 12.04 dB)")
    assert ok


# --- 8 ---------------------------------------------------------------------


def _peak(img):
    iz, ix = np.unravel_index(np.argmax(img.amplitudes), img.amplitudes.shape)
    return img.raster.lateral[ix], img.raster.depth[iz]


def test_c08_focus_localisation(criterion):
    setup = ex.ImagingSetup(cfg=ReceiveConfig(window=62.5e-6, noise_rms=0.0))
    phantom = Phantom(Medium(), [PinTarget(0.0, PIN_DEPTH)])
    dw = ex.pin_image(phantom, setup, Raster((0.0, PIN_DEPTH), (3e-3, 2e-3), CELL), r_v=14e-3)
    sta = ex.pin_image(phantom, setup, Raster((0.0, PIN_DEPTH), (1e-3, 1e-3), CELL), scheme="sta")
    errs = []
    for img in (dw, sta):
        x, z = _peak(img)
        errs.append(max(abs(x), abs(z - PIN_DEPTH)))
    ok = all(e <= CELL + 1e-9 for e in errs)
    criterion(8, ok, f"peak offset DW {errs[0] * 1e6:.1f} um, STA {errs[1] * 1e6:.1f} um (limit 25 um)")
    assert ok


# --- 9 ---------------------------------------------------------------------


def test_c09_coded_equals_single(pin_images, criterion):
    single, coded = pin_images(2.0, 1), pin_images(2.0, 8)
    ls, lc = lsf_extract(single), lsf_extract(coded)
    rs, rc = range_resolution_extract(single, C), range_resolution_extract(coded, C)
    d_lat = abs(ls.width_3db - lc.width_3db)
    d_rng = abs(rs.width_3db - rc.width_3db)
    a = rs.profile.amplitudes / rs.profile.amplitudes.max()
    b = rc.profile.amplitudes / rc.profile.amplitudes.max()
    extra = db(np.abs(b - a).max())
    ok = d_lat <= CELL and d_rng <= CELL and extra < -30
    criterion(
        9, ok,
        f"width differences lateral {d_lat * 1e6:.1f} um, range {d_rng * 1e6:.1f} um; "
        f"coded-minus-single range residual {extra:.1f} dB",
    )
    assert ok


# --- 10 --------------------------------------------------------------------


def test_c10_lateral_width_and_trend(pin_images, criterion):
    widths = [lsf_extract(pin_images(c, 8)).width_3db for c in ex.CYCLES]
    ballpark = abs(widths[-1] / 0.675e-3 - 1) <= 0.30
    trend = all(a >= b for a, b in zip(widths, widths[1:])) and widths[-1] < widths[0]
    shown = "/".join(f"{w * 1e3:.3f}" for w in widths)
    criterion(10, ballpark and trend, f"LSF -3 dB {shown} mm for 0.5..2 cycles/chip (2c target 0.675 +/- 30 %)")
    assert ballpark and trend


@pytest.mark.xfail(
    strict=True,
    reason="depth-cut -3 dB width is c/2 x 200 ns; 0.31 mm corresponds to c x 200 ns",
)
def test_c10_range_width(pin_images, criterion):
    r = range_resolution_extract(pin_images(2.0, 1), C)
    ok = abs(r.width_3db / 0.31e-3 - 1) <= 0.30
    criterion(
        10, ok,
        f"range -3 dB {r.width_3db * 1e3:.3f} mm ({r.width_3db_seconds * 1e9:.0f} ns two-way; target 0.31 mm +/- 30 %)",
    )
    assert ok


# --- 11 --------------------------------------------------------------------


def _levels(dw):
    return np.array([db(dw[rv]) for rv in ex.RV_SWEEP])  # (r_v, pin), common scale


def test_c11_centre_spread_and_sta(sweep, criterion):
    dw, sta = sweep
    lv = _levels(dw)
    centre = lv.shape[1] // 2
    centre_best = ex.RV_SWEEP[int(np.argmax(lv[:, centre]))]
    spread = float(np.max(lv.max(axis=0) - lv.min(axis=0)))
    ref = db(dw[14e-3] / dw[14e-3].max())
    sta_db = db(sta / sta.max())
    match = float(np.abs(ref - sta_db).max())
    ok = np.isclose(centre_best, 21e-3) and spread >= 8.0 and match <= 3.0
    criterion(
        11, ok,
        f"centre pin strongest at r_v = {centre_best * 1e3:g} mm; family spread {spread:.1f} dB; "
        f"r_v = 14 mm vs STA max difference {match:.2f} dB",
    )
    assert ok


@pytest.mark.xfail(
    strict=True,
    reason="the +/-15 mm outer pins sit inside the r_v = 14 mm insonified sector at 25 mm depth",
)
def test_c11_outer_pins(sweep, criterion):
    dw, _ = sweep
    lv = _levels(dw)
    best = [ex.RV_SWEEP[int(np.argmax(lv[:, k]))] for k in (0, lv.shape[1] - 1)]
    ok = all(np.isclose(b, 10.5e-3) for b in best)
    criterion(11, ok, "outermost pins strongest at r_v = " + ", ".join(f"{b * 1e3:g}" for b in best) + " mm (want 10.5)")
    assert ok


# --- 12 --------------------------------------------------------------------


def test_c12_tf_round_trip(element, criterion):
    rt = ex.tf_round_trip(element, cycles=0.5, cfg=ex.water_config(adc_bits=16, fixed_gain=66.0))
    err = rt.max_error()
    ok = err < 0.01
    criterion(12, ok, f"plate-echo H2 estimate within {100 * err:.2f} % of peak over {int(rt.estimate.valid.sum())} valid bins")
    assert ok


# --- 13 --------------------------------------------------------------------


def _cli_run(out, ini):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert cli.main(["synth", "--config", str(ini), "--out", str(out)]) == 0
        assert cli.main(["simulate", "--config", str(ini), "--out", str(out)]) == 0
        inputs = [str(p) for p in sorted(out.glob("dw*.ucd"))]
        assert cli.main(["analyze", "--config", str(ini), "--out", str(out), *inputs]) == 0
        assert cli.main(["report", "--out", str(out)]) == 0
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_c13_determinism(element, tmp_path, criterion, capsys):
    setup = ex.ImagingSetup()
    phantom = Phantom(Medium(), [PinTarget(0.0, 20e-3), PinTarget(3e-3, 30e-3)])
    raster = Raster((0.0, 20e-3), (1e-3, 1e-3), CELL)
    blobs = []
    for _ in range(2):
        data = simulate(phantom, setup.geom, TxScheme.dw(14e-3, synth_pwm_pulse(2)), element, setup.cfg)
        img = das_beamform(data, setup.geom, raster, C)
        blobs.append((storage.encode(data, seed=0), storage.encode(img, seed=0)))
    ini = tmp_path / "run.ini"
    ini.write_text(cfg_with(**SMALL))
    runs = [_cli_run(tmp_path / name, ini) for name in ("a", "b")]
    capsys.readouterr()
    same_lib = blobs[0] == blobs[1]
    same_cli = runs[0] == runs[1]
    ok = same_lib and same_cli and "report.txt" in runs[0]
    criterion(13, ok, f"channel data and image containers identical; {len(runs[0])} CLI outputs byte-identical")
    assert ok
