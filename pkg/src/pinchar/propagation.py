"""Acoustic path model: spreading, reflection, attenuation, pin scattering.

Propagation in the imaging plane is cylindrical, so each leg contributes
1/sqrt(r) in amplitude. Pins are thin nylon lines (ka < 1) and are treated
as omnidirectional reflectors of strength Gamma.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .waveforms import SampledWaveform

DB_PER_NEPER = 8.6859


@dataclass(frozen=True)
class Medium:
    """Sound speed (m/s), attenuation (dB/cm/MHz) and impedance (MRayl)."""

    sound_speed: float = 1450.0
    attenuation: float = 0.5
    impedance: float = 1.5

    def __post_init__(self):
        if self.sound_speed <= 0:
            raise ValueError("sound_speed must be positive")
        if self.attenuation < 0:
            raise ValueError("attenuation must be non-negative")
        if self.impedance <= 0:
            raise ValueError("impedance must be positive")

    def attenuation_np_per_m(self, freqs) -> np.ndarray:
        """Amplitude attenuation in Np/m at ``freqs`` (Hz)."""
        return self.attenuation / DB_PER_NEPER * np.abs(freqs) / 1e6 * 100.0


@dataclass(frozen=True)
class PinTarget:
    """Line target normal to the imaging plane.

    ``gamma`` overrides the impedance-based reflection coefficient when set.
    """

    lateral: float
    depth: float
    radius: float = 25e-6
    impedance: float = 3.0
    gamma: float | None = None

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("pin radius must be positive")
        if self.depth <= 0:
            raise ValueError("pin depth must be positive")

    @property
    def position(self) -> tuple[float, float]:
        return (self.lateral, self.depth)

    def reflection(self, medium: Medium) -> float:
        if self.gamma is not None:
            return float(self.gamma)
        return reflection_coefficient(medium.impedance, self.impedance)


@dataclass(frozen=True)
class Plate:
    """Flat specular reflector parallel to the aperture."""

    depth: float
    impedance: float = 44.0

    def __post_init__(self):
        if self.depth <= 0:
            raise ValueError("plate depth must be positive")


@dataclass(frozen=True)
class Phantom:
    medium: Medium = field(default_factory=Medium)
    pins: tuple[PinTarget, ...] = ()
    plates: tuple[Plate, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "pins", tuple(self.pins))
        object.__setattr__(self, "plates", tuple(self.plates))
        positions = [p.position for p in self.pins]
        if len(set(positions)) != len(positions):
            raise ValueError("pin positions must be unique")


def grating(depth: float, spacing: float = 5e-3, count: int = 7, **pin_kw) -> list[PinTarget]:
    """``count`` pins ``spacing`` apart, centred laterally at ``depth``."""
    offsets = (np.arange(count) - (count - 1) / 2) * spacing
    return [PinTarget(float(x), depth, **pin_kw) for x in offsets]


def pin_grating_phantom(count: int = 7) -> Phantom:
    """Four horizontal 5 mm gratings at 20, 25, 40 and 45 mm depth."""
    pins = []
    for d in (20e-3, 25e-3, 40e-3, 45e-3):
        pins += grating(d, 5e-3, count)
    return Phantom(Medium(), pins)


def water_tank(plate_depth: float = 50e-3) -> Phantom:
    """Fresh water over a steel plate; attenuation neglected."""
    return Phantom(Medium(1480.0, 0.0, 1.5), plates=(Plate(plate_depth, 44.0),))


def attenuation_filter(
    w: SampledWaveform, round_trip: float, alpha_db: float
) -> SampledWaveform:
    """Scale the spectrum by exp(-alpha f L), L = ``round_trip`` in cm.

    ``alpha_db`` is in dB/cm/MHz. The filter is zero-phase and applied on the
    waveform's own DFT grid, so repeated application composes exactly; give
    the input enough zero padding if wrap-around matters.
    """
    if round_trip < 0:
        raise ValueError("round_trip must be non-negative")
    if round_trip == 0:
        return w
    n = len(w)
    f_mhz = np.fft.rfftfreq(n, w.dt) / 1e6
    gain = np.exp(-alpha_db / DB_PER_NEPER * f_mhz * round_trip)
    return w.with_samples(np.fft.irfft(np.fft.rfft(w.samples) * gain, n))


def spread_loss(r: float) -> float:
    """Cylindrical spreading amplitude factor 1/sqrt(r) for one leg."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("distance must be positive")
    out = 1.0 / np.sqrt(r)
    return float(out) if out.ndim == 0 else out


def reflection_coefficient(z1: float, z2: float) -> float:
    """Pressure reflection coefficient going from impedance z1 into z2."""
    if z1 <= 0 or z2 <= 0:
        raise ValueError("impedances must be positive")
    return (z2 - z1) / (z2 + z1)


def ka(radius: float, freq: float, c: float) -> float:
    return 2 * np.pi * freq * radius / c


def pin_echo(
    tx_spectrum,
    freqs,
    element_pos,
    pin: PinTarget,
    medium: Medium,
    rx_pos=None,
    scatter_gain=None,
) -> np.ndarray:
    """Received pressure spectrum from one pin.

    Outbound leg, reflection and inbound leg, each leg carrying 1/sqrt(r),
    the phase exp(-jkr) and the medium's attenuation over its length.
    Distances are measured from element centres (``(lateral, depth)``, m)
    to the pin axis. ``scatter_gain(freqs)`` is an optional frequency
    dependent target-strength factor; it defaults to 1.
    """
    freqs = np.asarray(freqs, dtype=float)
    rx_pos = element_pos if rx_pos is None else rx_pos
    legs = []
    for pos in (element_pos, rx_pos):
        r = float(np.hypot(pin.lateral - pos[0], pin.depth - pos[1]))
        if r == 0:
            raise ValueError("element coincides with the pin")
        legs.append(r)
    total = legs[0] + legs[1]
    k = 2 * np.pi * freqs / medium.sound_speed
    prop = np.exp(-1j * k * total - medium.attenuation_np_per_m(freqs) * total)
    out = np.asarray(tx_spectrum) * pin.reflection(medium) * prop
    out = out / np.sqrt(legs[0] * legs[1])
    if scatter_gain is not None:
        out = out * scatter_gain(freqs)
    return out
