"""Command-line front end: ``pinchar {synth,simulate,analyze,report}``.

Failures print one JSON line ``{"error": ..., "message": ...}`` to stderr
and exit nonzero; successful runs print one line per written file.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import metrics, storage
from .acquisition import ChannelData, SaturationWarning, TxScheme, golay_transmit_pair, simulate
from .config import DEFAULT_CONFIG, ConfigError, RunConfig
from .processing import (
    Raster,
    correlate,
    correlate_channels,
    das_beamform,
    golay_combine,
    make_golay_references,
    make_reference,
)
from .propagation import Phantom
from .waveforms import bpsk_modulate, golay_pair, synth_pwm_pulse


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("UsageError", message, code=2)


def _fail(kind: str, message: str, code: int = 1):
    line = json.dumps({"error": kind, "message": " ".join(str(message).split())})
    print(line, file=sys.stderr)
    raise SystemExit(code)


def _fmt(x: float) -> str:
    return f"{x:g}"


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig.default()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _task_seed(seed: int, index: int) -> int:
    """Independent per-task seed derived from the run seed."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


# --- synth --------------------------------------------------------------


def cmd_synth(cfg: RunConfig, out: Path) -> list[Path]:
    files = []
    for c in cfg.cycles:
        w = synth_pwm_pulse(c, cfg.pwm)
        files.append(storage.write(out / f"pwm_{_fmt(c)}c.ucd", w, cfg.receive.seed))
        files.append(storage.write_waveform_csv(out / f"pwm_{_fmt(c)}c.csv", w))
    if cfg.code_length > 1:
        a, b = golay_pair(cfg.code_length)
        chip = synth_pwm_pulse(cfg.scheme_cycles, cfg.pwm)
        for tag, code in (("A", a), ("B", b)):
            w = bpsk_modulate(code, chip)
            name = f"golay{cfg.code_length}_{_fmt(cfg.scheme_cycles)}c_{tag}.ucd"
            files.append(storage.write(out / name, w, cfg.receive.seed, code=[int(x) for x in code.chips]))
    return files


# --- simulate -----------------------------------------------------------


def _scheme_label(r_v: float, cycles: float, n_chips: int) -> str:
    return f"dw{r_v * 1e3:g}mm_{_fmt(cycles)}c_n{n_chips}"


def _simulate_one(args):
    cfg, index, r_v, out = args
    el = cfg.element()
    rcfg = replace(cfg.receive, seed=_task_seed(cfg.receive.seed, index))
    phantom = cfg.phantom()
    chip = synth_pwm_pulse(cfg.scheme_cycles, cfg.pwm)
    n = cfg.code_length if cfg.coded else 1
    label = _scheme_label(r_v, cfg.scheme_cycles, n)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", SaturationWarning)
        if n == 1:
            shots = {"": simulate(phantom, cfg.geom, TxScheme.dw(r_v, chip), el, rcfg)}
        else:
            a, b = golay_pair(n)
            sa = TxScheme.dw(r_v, bpsk_modulate(a, chip), code=a, tag="A")
            sb = TxScheme.dw(r_v, bpsk_modulate(b, chip), code=b, tag="B")
            da, db = golay_transmit_pair(phantom, cfg.geom, sa, sb, el, rcfg)
            shots = {"_A": da, "_B": db}
    written = []
    for suffix, data in shots.items():
        path = storage.write(out / f"{label}{suffix}.ucd", data, cfg.receive.seed, group=label)
        written.append((str(path), data.saturated))
    return written, len(caught)


def cmd_simulate(cfg: RunConfig, out: Path, jobs: int = 1) -> list[tuple[Path, bool]]:
    tasks = [(cfg, i, rv, out) for i, rv in enumerate(cfg.r_v)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_simulate_one, tasks))
    else:
        results = [_simulate_one(t) for t in tasks]
    return [(Path(p), sat) for written, _ in results for p, sat in written]


# --- analyze ------------------------------------------------------------


def _chip_analysis(cfg: RunConfig, out: Path) -> tuple[dict, list[Path]]:
    el = cfg.element()
    files = []
    rcfg = ex.water_config(sample_rate=cfg.receive.sample_rate, adc_bits=cfg.receive.adc_bits)
    chips = {c: ex.plate_echo(synth_pwm_pulse(c, cfg.pwm), el, rcfg) for c in cfg.cycles}
    depth_cm = 4.0
    attenuated = {c: ex.attenuate(w, depth_cm, cfg.medium.attenuation) for c, w in chips.items()}
    summary = {"chips": {}}
    for c, w in chips.items():
        row = {"energy_lsb2_s": float(np.sum(w.samples**2) * w.dt)}
        for tag, x in (("", w), ("_attenuated", attenuated[c])):
            psd = metrics.periodogram(x, 8 * len(x)).positive()
            files.append(
                storage.write_csv(
                    out / f"psd_{_fmt(c)}c{tag}.csv",
                    {"frequency": psd.freqs, "psd": psd.density},
                    {"frequency": "Hz", "psd": "LSB^2/Hz"},
                )
            )
            try:
                bw = metrics.fractional_bandwidth(psd)
                row[f"fbw{tag}"], row[f"fc{tag}"] = float(bw.fbw), float(bw.fc)
                row[f"bw{tag}"] = float(bw.f_hi - bw.f_lo)
            except ValueError:
                row[f"fbw{tag}"] = row[f"fc{tag}"] = row[f"bw{tag}"] = None
            row[f"centroid{tag}"] = metrics.spectral_centroid(x)
            row[f"peak{tag}"] = float(np.abs(x.samples).max())
        summary["chips"][_fmt(c)] = row
    for tag, depth in (("", 0.0), ("_attenuated", depth_cm)):
        peaks = ex.correlator_peaks(chips, depth, cfg.medium.attenuation)
        for c, w in chips.items():
            ref = make_reference(w)
            rx = ex.attenuate(w, depth, cfg.medium.attenuation) if depth else w
            y = correlate(rx, ref)
            files.append(
                storage.write_csv(
                    out / f"correlator_{_fmt(c)}c{tag}.csv",
                    {"time": y.times(), "output": y.samples},
                    {"time": "s", "output": "LSB*sqrt(s)"},
                )
            )
            summary["chips"][_fmt(c)][f"corr_peak{tag}"] = peaks[c]
    rt = ex.tf_round_trip(el, cfg=rcfg)
    est = rt.estimate
    files.append(
        storage.write_csv(
            out / "tf.csv",
            {
                "frequency": est.freqs,
                "estimate": np.abs(est.values) / rt.path_gain,
                "model": np.abs(el.two_way.at(est.freqs)),
                "valid": est.valid.astype(int),
            },
            {"frequency": "Hz", "estimate": "1", "model": "1"},
        )
    )
    summary["tf_max_error"] = rt.max_error()
    return summary, files


def _load_groups(inputs) -> dict:
    groups: dict = {}
    for p in inputs:
        data, header = storage.read(p)
        if not isinstance(data, ChannelData):
            raise CliError(f"{p}: expected channel data, got {header['kind']}")
        if data.scheme is None:
            raise CliError(f"{p}: channel file lacks a transmit scheme")
        key = header.get("group") or data.scheme.label
        groups.setdefault(key, []).append(data)
    return groups


def _correlated(shots: list[ChannelData], cfg: RunConfig) -> ChannelData:
    el = cfg.element()
    fs = cfg.receive.sample_rate
    if len(shots) == 1:
        d = shots[0]
        return correlate_channels(d, make_reference(ex.chip_reference(d.scheme.drive, el, fs)))
    if len(shots) != 2:
        raise CliError(f"a coded group needs exactly two shots, got {len(shots)}")
    da, db = sorted(shots, key=lambda d: d.scheme.tag)
    ra, rb = make_golay_references(
        ex.chip_reference(da.scheme.drive, el, fs), ex.chip_reference(db.scheme.drive, el, fs)
    )
    return golay_combine(correlate_channels(da, ra), correlate_channels(db, rb))


def _image_analysis(cfg: RunConfig, inputs, out: Path, compare: str | None) -> tuple[dict, list[Path]]:
    files = []
    summary: dict = {}
    groups = _load_groups(inputs)
    setup = ex.ImagingSetup(cfg.element(), cfg.geom, cfg.receive, cfg.medium)
    c = cfg.medium.sound_speed
    pins = cfg.grating_pins(cfg.grating_depth)
    if not pins:
        raise CliError(f"no grating at {cfg.grating_depth:g} m in the phantom")
    positions = np.array([p.lateral for p in pins])
    profiles = {}
    for key in sorted(groups):
        data = _correlated(groups[key], cfg)
        scheme = groups[key][0].scheme
        if scheme.kind != "dw":
            continue
        amps = ex.grating_amplitudes(data, pins, setup, c)
        prof = metrics.beamwidth_profile(amps, positions, key)
        profiles[scheme.r_v] = prof
        files.append(
            storage.write_csv(
                out / f"beamwidth_{key}.csv",
                {"lateral": positions, "amplitude": amps, "level": prof.amplitudes_db},
                {"lateral": "m", "amplitude": "a.u.", "level": "dB"},
            )
        )
        if np.isclose(scheme.r_v, cfg.reference_r_v):
            raster = Raster((0.0, cfg.resolution_depth), tuple(cfg.raster_extent), cfg.raster_spacing)
            img = das_beamform(data, cfg.geom, raster, c)
            files.append(storage.write(out / f"image_{key}.ucd", img, cfg.receive.seed))
            lsf = metrics.lsf_extract(img)
            rng = metrics.range_resolution_extract(img, c)
            rep = metrics.resolution_report(img, c)
            files.append(
                storage.write_csv(
                    out / "lsf.csv",
                    {"lateral": lsf.profile.positions, "level": lsf.profile.db()},
                    {"lateral": "m", "level": "dB"},
                )
            )
            files.append(
                storage.write_csv(
                    out / "range.csv",
                    {"depth": rng.profile.positions, "level": rng.profile.db()},
                    {"depth": "m", "level": "dB"},
                )
            )
            files.append(storage.atomic_write_text(out / "resolution.txt", rep.text() + "\n"))
            summary["resolution"] = {
                "scheme": key,
                "lsf_3db_m": rep.lsf_3db_width,
                "lsf_6db_m": rep.lsf_6db_width,
                "lateral_sidelobe_db": rep.lateral_sidelobe_db,
                "range_3db_m": rep.range_3db_width,
                "range_3db_s": rep.range_3db_seconds,
            }
    if profiles:
        cols = {"lateral": positions}
        for rv in sorted(profiles):
            cols[f"r_v={rv * 1e3:g}mm"] = profiles[rv].amplitudes_db
        files.append(storage.write_csv(out / "beamwidth_sweep.csv", cols, {"lateral": "m"}))
        summary["beamwidth"] = {f"{rv * 1e3:g}": profiles[rv].amplitudes_db.tolist() for rv in sorted(profiles)}
    if compare == "sta":
        ref = next((p for rv, p in profiles.items() if np.isclose(rv, cfg.reference_r_v)), None)
        if ref is None:
            raise CliError("--compare sta needs the reference r_v among the inputs")
        phantom = Phantom(cfg.medium, pins)
        sta = metrics.beamwidth_profile(ex.sta_grating(phantom, setup, cfg.scheme_cycles), positions, "sta")
        files.append(
            storage.write_csv(
                out / "compare_sta.csv",
                {
                    "lateral": positions,
                    "dw": ref.amplitudes_db,
                    "sta": sta.amplitudes_db,
                    "difference": ref.amplitudes_db - sta.amplitudes_db,
                },
                {"lateral": "m", "dw": "dB", "sta": "dB", "difference": "dB"},
            )
        )
        summary["compare_sta_max_abs_db"] = float(np.abs(ref.amplitudes_db - sta.amplitudes_db).max())
    return summary, files


def cmd_analyze(cfg: RunConfig, inputs, out: Path, compare: str | None = None) -> list[Path]:
    for p in inputs:
        if not Path(p).is_file():
            raise FileNotFoundError(f"input file not found: {p}")
    summary, files = _chip_analysis(cfg, out)
    if inputs:
        s2, f2 = _image_analysis(cfg, inputs, out, compare)
        summary.update(s2)
        files += f2
    elif compare:
        raise CliError("--compare needs channel-data inputs")
    summary["seed"] = cfg.receive.seed
    summary["config_sha256"] = cfg.config_hash
    files.append(storage.atomic_write_text(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n"))
    return files


# --- report -------------------------------------------------------------


def render_report(summary: dict) -> str:
    lines = ["chip  fbw    fc (MHz)  bw (MHz)  | 4 cm: fbw  fc (MHz)  bw (MHz)  | corr peak  4 cm"]
    chips = summary.get("chips", {})
    for c in sorted(chips, key=float):
        r = chips[c]

        def num(v, scale=1.0, fmt="{:.3f}"):
            return "   n/a" if v is None else fmt.format(v * scale)

        lines.append(
            f"{c:>4}  {num(r['fbw'])}  {num(r['fc'], 1e-6, '{:8.3f}')}  {num(r.get('bw'), 1e-6, '{:8.3f}')}  "
            f"|       {num(r['fbw_attenuated'])}  {num(r['fc_attenuated'], 1e-6, '{:8.3f}')}  "
            f"{num(r.get('bw_attenuated'), 1e-6, '{:8.3f}')}  | {r['corr_peak']:.4g}  {r['corr_peak_attenuated']:.4g}"
        )
    if "tf_max_error" in summary:
        lines.append(f"TF round-trip max error: {summary['tf_max_error'] * 100:.2f} % of peak")
    res = summary.get("resolution")
    if res:
        lines.append(
            f"{res['scheme']}: LSF -3 dB {res['lsf_3db_m'] * 1e3:.3f} mm, -6 dB {res['lsf_6db_m'] * 1e3:.3f} mm, "
            f"sidelobe {res['lateral_sidelobe_db']:.1f} dB, range -3 dB {res['range_3db_m'] * 1e3:.3f} mm "
            f"({res['range_3db_s'] * 1e9:.0f} ns)"
        )
    for rv, levels in summary.get("beamwidth", {}).items():
        lines.append(f"r_v {rv:>5} mm: " + " ".join(f"{v:6.1f}" for v in levels) + " dB")
    if "compare_sta_max_abs_db" in summary:
        lines.append(f"DW vs STA profile: max |difference| {summary['compare_sta_max_abs_db']:.2f} dB")
    lines.append(f"seed {summary.get('seed')}  config {str(summary.get('config_sha256'))[:12]}")
    return "\n".join(lines) + "\n"


def cmd_report(out: Path) -> Path:
    path = out / "summary.json"
    if not path.is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    text = render_report(json.loads(path.read_text()))
    sys.stdout.write(text)
    return storage.atomic_write_text(out / "report.txt", text)


# --- entry point --------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pinchar", description="Pin-target transducer characterisation toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="INI run configuration (default: built-in)")
        sp.add_argument("--seed", type=int, help="override the receive seed")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes")
        return sp

    common(sub.add_parser("synth", help="write drive waveforms"))
    common(sub.add_parser("simulate", help="simulate the DW r_v sweep"))
    a = common(sub.add_parser("analyze", help="figure data from chips and channel files"))
    a.add_argument("inputs", nargs="*", help="channel-data containers")
    a.add_argument("--compare", choices=["sta"], help="overlay a reference scheme")
    common(sub.add_parser("report", help="print the analysis summary"))
    sub.add_parser("default-config", help="print the default configuration")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "default-config":
            sys.stdout.write(DEFAULT_CONFIG)
            return 0
        if args.jobs < 1:
            raise CliError("--jobs must be at least 1")
        out = Path(args.out)
        if args.command == "report":
            print(cmd_report(out))
            return 0
        cfg = _load_config(args)
        if args.command == "synth":
            files = cmd_synth(cfg, out)
        elif args.command == "simulate":
            written = cmd_simulate(cfg, out, args.jobs)
            for path, sat in written:
                print(f"{path} saturated={'yes' if sat else 'no'}")
            files = [p for p, _ in written]
        else:
            files = cmd_analyze(cfg, args.inputs, out, args.compare)
        if args.command != "simulate":
            for f in files:
                print(f)
        storage.write_manifest(out, args.command, cfg.config_hash, cfg.receive.seed, files)
    except FileNotFoundError as exc:
        msg = f"{exc.strerror}: {exc.filename}" if exc.filename else str(exc)
        _fail("FileNotFoundError", msg)
    except (ConfigError, CliError, storage.ContainerError) as exc:
        _fail(type(exc).__name__, str(exc))
    except Exception as exc:  # noqa: BLE001 - last-resort single-line report
        _fail(type(exc).__name__, str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
