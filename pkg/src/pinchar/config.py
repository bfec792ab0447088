"""Run configuration: an INI file with unit-suffixed keys.

Every key carries its unit in the name (``_m``, ``_hz``, ``_db`` ...) and
is range-checked on load, which catches the usual slip of typing
millimetres where metres are expected.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .acquisition import ArrayGeometry, ReceiveConfig
from .propagation import Medium, Phantom, Plate, grating
from .transducer import ElementModel
from .waveforms import PwmSpec

DEFAULT_CONFIG = """\
# Default run: 128-element 7.5 MHz phased array over a pin-target phantom.

[array]
n_elements = 128
pitch_m = 0.1e-3

[transducer]
# Synthetic two-way response: Gaussian magnitude, minimum phase.
center_freq_hz = 7.5e6
fractional_bandwidth = 0.70
n_fft = 16384

[drive]
# 3-level PWM at 480 MHz: 6 zero / 20 high / 6 zero symbols per half cycle.
symbol_rate_hz = 480e6
carrier_freq_hz = 7.5e6
amplitude_v = 70
cycles = 0.5, 1, 1.5, 2
# Golay code length for coded shots (1 = uncoded).
code_length = 8

[receive]
sample_rate_hz = 80e6
window_s = 95e-6
fixed_gain_db = 22
tgc_slope_db_per_cm = 2.3
adc_bits = 12
noise_rms_lsb = 2
seed = 0

[medium]
sound_speed_m_s = 1450
attenuation_db_per_cm_mhz = 0.5
impedance_mrayl = 1.5

[phantom]
# Horizontal pin gratings (nylon, 50 um diameter), 5 mm pitch.
grating_depths_m = 0.020, 0.025, 0.040, 0.045
grating_spacing_m = 5e-3
grating_count = 7
pin_radius_m = 25e-6
pin_impedance_mrayl = 3.0
# Optional specular plate; leave empty for none.
plate_depth_m =

[schemes]
# Diverging-wave virtual-source distances for the sweep.
r_v_m = 0.0105, 0.014, 0.0175, 0.021
cycles = 2
coded = yes

[analysis]
resolution_depth_m = 0.040
grating_depth_m = 0.025
reference_r_v_m = 0.014
raster_spacing_m = 25e-6
raster_extent_m = 3e-3, 2e-3
"""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration value."""


# (section, key) -> (low, high) accepted range in the key's own unit
_RANGES = {
    ("array", "pitch_m"): (1e-6, 5e-3),
    ("transducer", "center_freq_hz"): (1e5, 1e8),
    ("transducer", "fractional_bandwidth"): (0.0, 2.0),
    ("drive", "symbol_rate_hz"): (1e6, 1e10),
    ("drive", "amplitude_v"): (0.0, 1e3),
    ("drive", "carrier_freq_hz"): (1e5, 1e8),
    ("receive", "sample_rate_hz"): (1e5, 1e10),
    ("receive", "window_s"): (1e-7, 1e-2),
    ("receive", "fixed_gain_db"): (-40.0, 100.0),
    ("receive", "tgc_slope_db_per_cm"): (0.0, 20.0),
    ("receive", "noise_rms_lsb"): (0.0, 1e4),
    ("medium", "sound_speed_m_s"): (100.0, 1e4),
    ("medium", "attenuation_db_per_cm_mhz"): (0.0, 10.0),
    ("medium", "impedance_mrayl"): (0.01, 100.0),
    ("phantom", "grating_depths_m"): (1e-4, 1.0),
    ("phantom", "grating_spacing_m"): (1e-5, 0.1),
    ("phantom", "pin_radius_m"): (1e-7, 1e-2),
    ("phantom", "pin_impedance_mrayl"): (0.01, 100.0),
    ("phantom", "plate_depth_m"): (1e-4, 1.0),
    ("schemes", "r_v_m"): (1e-4, 1.0),
    ("schemes", "cycles"): (0.5, 100.0),
    ("analysis", "resolution_depth_m"): (1e-4, 1.0),
    ("analysis", "grating_depth_m"): (1e-4, 1.0),
    ("analysis", "reference_r_v_m"): (1e-4, 1.0),
    ("analysis", "raster_spacing_m"): (1e-7, 1e-2),
    ("analysis", "raster_extent_m"): (0.0, 0.2),
}


class _Reader:
    def __init__(self, parser: configparser.ConfigParser):
        self.p = parser

    def _raw(self, section, key):
        try:
            return self.p[section][key]
        except KeyError:
            raise ConfigError(f"[{section}] {key}: missing") from None

    def _check(self, section, key, v):
        lo, hi = _RANGES.get((section, key), (-float("inf"), float("inf")))
        if not lo <= v <= hi:
            raise ConfigError(f"[{section}] {key} = {v:g} outside the plausible range [{lo:g}, {hi:g}]")
        return v

    def float(self, section, key):
        raw = self._raw(section, key)
        try:
            v = float(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key}: {raw!r} is not a number") from None
        return self._check(section, key, v)

    def int(self, section, key):
        raw = self._raw(section, key)
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key}: {raw!r} is not an integer") from None

    def floats(self, section, key, allow_empty=False):
        raw = self._raw(section, key).strip()
        if not raw:
            if allow_empty:
                return ()
            raise ConfigError(f"[{section}] {key}: empty list")
        try:
            vals = tuple(float(x) for x in raw.split(","))
        except ValueError:
            raise ConfigError(f"[{section}] {key}: {raw!r} is not a comma-separated list of numbers") from None
        return tuple(self._check(section, key, v) for v in vals)

    def bool(self, section, key):
        try:
            return self.p.getboolean(section, key)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from None
        except (KeyError, configparser.NoOptionError, configparser.NoSectionError):
            raise ConfigError(f"[{section}] {key}: missing") from None


@dataclass(frozen=True)
class RunConfig:
    geom: ArrayGeometry = field(default_factory=ArrayGeometry)
    center_freq: float = 7.5e6
    fractional_bandwidth: float = 0.70
    n_fft: int = 16384
    pwm: PwmSpec = field(default_factory=PwmSpec)
    cycles: tuple = (0.5, 1.0, 1.5, 2.0)
    code_length: int = 8
    receive: ReceiveConfig = field(default_factory=ReceiveConfig)
    medium: Medium = field(default_factory=Medium)
    grating_depths: tuple = (20e-3, 25e-3, 40e-3, 45e-3)
    grating_spacing: float = 5e-3
    grating_count: int = 7
    pin_radius: float = 25e-6
    pin_impedance: float = 3.0
    plate_depth: float | None = None
    r_v: tuple = (10.5e-3, 14e-3, 17.5e-3, 21e-3)
    scheme_cycles: float = 2.0
    coded: bool = True
    resolution_depth: float = 40e-3
    grating_depth: float = 25e-3
    reference_r_v: float = 14e-3
    raster_spacing: float = 25e-6
    raster_extent: tuple = (3e-3, 2e-3)
    text: str = field(default=DEFAULT_CONFIG, compare=False, repr=False)

    @classmethod
    def from_string(cls, text: str) -> "RunConfig":
        p = configparser.ConfigParser(inline_comment_prefixes=("#",))
        try:
            p.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"config syntax: {exc}".replace("\n", " ")) from None
        r = _Reader(p)
        try:
            geom = ArrayGeometry(r.int("array", "n_elements"), r.float("array", "pitch_m"))
            pwm = PwmSpec(
                symbol_rate=r.float("drive", "symbol_rate_hz"),
                amplitude=r.float("drive", "amplitude_v"),
                carrier_freq=r.float("drive", "carrier_freq_hz"),
            )
            receive = ReceiveConfig(
                sample_rate=r.float("receive", "sample_rate_hz"),
                window=r.float("receive", "window_s"),
                fixed_gain=r.float("receive", "fixed_gain_db"),
                tgc_slope=r.float("receive", "tgc_slope_db_per_cm"),
                adc_bits=r.int("receive", "adc_bits"),
                noise_rms=r.float("receive", "noise_rms_lsb"),
                seed=r.int("receive", "seed"),
            )
            medium = Medium(
                r.float("medium", "sound_speed_m_s"),
                r.float("medium", "attenuation_db_per_cm_mhz"),
                r.float("medium", "impedance_mrayl"),
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        plate = r.floats("phantom", "plate_depth_m", allow_empty=True)
        extent = r.floats("analysis", "raster_extent_m")
        if len(extent) != 2:
            raise ConfigError("[analysis] raster_extent_m: need lateral, depth")
        cycles = r.floats("drive", "cycles")
        for c in cycles + (r.float("schemes", "cycles"),):
            if c <= 0 or abs(2 * c - round(2 * c)) > 1e-9:
                raise ConfigError(f"cycle count {c:g} is not a positive multiple of 0.5")
        code_length = r.int("drive", "code_length")
        if code_length < 1 or code_length & (code_length - 1):
            raise ConfigError(f"[drive] code_length = {code_length}: must be a power of two")
        cfg = cls(
            geom=geom,
            center_freq=r.float("transducer", "center_freq_hz"),
            fractional_bandwidth=r.float("transducer", "fractional_bandwidth"),
            n_fft=r.int("transducer", "n_fft"),
            pwm=pwm,
            cycles=cycles,
            code_length=code_length,
            receive=receive,
            medium=medium,
            grating_depths=r.floats("phantom", "grating_depths_m"),
            grating_spacing=r.float("phantom", "grating_spacing_m"),
            grating_count=r.int("phantom", "grating_count"),
            pin_radius=r.float("phantom", "pin_radius_m"),
            pin_impedance=r.float("phantom", "pin_impedance_mrayl"),
            plate_depth=plate[0] if plate else None,
            r_v=r.floats("schemes", "r_v_m"),
            scheme_cycles=r.float("schemes", "cycles"),
            coded=r.bool("schemes", "coded"),
            resolution_depth=r.float("analysis", "resolution_depth_m"),
            grating_depth=r.float("analysis", "grating_depth_m"),
            reference_r_v=r.float("analysis", "reference_r_v_m"),
            raster_spacing=r.float("analysis", "raster_spacing_m"),
            raster_extent=extent,
            text=text,
        )
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        return cls.from_string(path.read_text())

    @classmethod
    def default(cls) -> "RunConfig":
        return cls.from_string(DEFAULT_CONFIG)

    def validate(self):
        if self.grating_count < 0:
            raise ConfigError("[phantom] grating_count must not be negative")
        if self.grating_depth not in self.grating_depths:
            raise ConfigError("[analysis] grating_depth_m does not match any grating depth")
        if self.resolution_depth not in self.grating_depths:
            raise ConfigError("[analysis] resolution_depth_m does not match any grating depth")
        if self.reference_r_v not in self.r_v:
            raise ConfigError("[analysis] reference_r_v_m is not in the r_v sweep")
        if self.receive.sample_rate / 2 < self.center_freq * (1 + self.fractional_bandwidth):
            raise ConfigError("[receive] sample_rate_hz too low for the transducer band")

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()

    def with_seed(self, seed: int) -> "RunConfig":
        from dataclasses import replace

        return replace(self, receive=replace(self.receive, seed=int(seed)))

    def element(self) -> ElementModel:
        return ElementModel.gaussian(
            self.center_freq, self.fractional_bandwidth, self.receive.sample_rate, self.n_fft
        )

    def phantom(self) -> Phantom:
        pins = []
        for d in self.grating_depths:
            pins += grating(
                d,
                self.grating_spacing,
                self.grating_count,
                radius=self.pin_radius,
                impedance=self.pin_impedance,
            )
        plates = () if self.plate_depth is None else (Plate(self.plate_depth),)
        return Phantom(self.medium, pins, plates)

    def grating_pins(self, depth: float):
        return [p for p in self.phantom().pins if p.depth == depth]
