"""Drive-signal synthesis and basic sampled-signal arithmetic.

The scanner's driver stage produces 3-level PWM pulses (0, +Vm, -Vm) at a
480 MHz symbol rate. A half-cycle at 7.5 MHz is exactly 32 symbols: 6 at
0 V, 20 at the rail, 6 at 0 V. Coded transmissions are built by BPSK
modulating such a chip with a Golay complementary code.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import signal

UNITS = ("volts", "lsb")


class UnitMismatchError(ValueError):
    """Raised when volts and LSB signals are combined arithmetically."""


class AliasingWarning(UserWarning):
    """The target sample rate is below twice the occupied bandwidth."""


@dataclass(frozen=True, eq=False)
class SampledWaveform:
    """A uniformly sampled real signal.

    Attributes:
        samples: 1-D float array.
        sample_rate: Samples per second.
        t0: Time of the first sample in seconds.
        unit: ``"volts"`` or ``"lsb"``.
    """

    samples: np.ndarray
    sample_rate: float
    t0: float = 0.0
    unit: str = "volts"

    def __post_init__(self):
        x = np.array(self.samples, dtype=float).ravel()
        if x.size == 0:
            raise ValueError("waveform must have at least one sample")
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.unit not in UNITS:
            raise ValueError(f"unknown unit {self.unit!r}; expected one of {UNITS}")
        x.flags.writeable = False
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))
        object.__setattr__(self, "t0", float(self.t0))

    def __len__(self):
        return self.samples.size

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) / self.sample_rate

    def with_samples(self, samples, **changes) -> "SampledWaveform":
        """Copy with new samples (and optionally other fields)."""
        kw = dict(sample_rate=self.sample_rate, t0=self.t0, unit=self.unit)
        kw.update(changes)
        return SampledWaveform(samples, **kw)

    def scaled(self, k: float) -> "SampledWaveform":
        return self.with_samples(self.samples * k)

    def padded(self, before: int = 0, after: int = 0) -> "SampledWaveform":
        """Zero-pad, shifting t0 so existing samples keep their times."""
        x = np.pad(self.samples, (before, after))
        return self.with_samples(x, t0=self.t0 - before / self.sample_rate)

    def _check_compatible(self, other: "SampledWaveform"):
        if self.unit != other.unit:
            raise UnitMismatchError(f"cannot combine {self.unit} with {other.unit}")
        if self.sample_rate != other.sample_rate:
            raise ValueError("sample rates differ")
        if len(self) != len(other) or self.t0 != other.t0:
            raise ValueError("waveforms are not on the same time grid")

    def __add__(self, other: "SampledWaveform") -> "SampledWaveform":
        self._check_compatible(other)
        return self.with_samples(self.samples + other.samples)

    def __sub__(self, other: "SampledWaveform") -> "SampledWaveform":
        self._check_compatible(other)
        return self.with_samples(self.samples - other.samples)

    def __neg__(self) -> "SampledWaveform":
        return self.with_samples(-self.samples)


@dataclass(frozen=True, eq=False)
class CodeSequence:
    """Bipolar code, every chip exactly +1 or -1."""

    chips: np.ndarray = field(default_factory=lambda: np.ones(1, dtype=np.int64))

    def __post_init__(self):
        c = np.asarray(self.chips)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("code must be a non-empty 1-D sequence")
        if not np.all((c == 1) | (c == -1)):
            raise ValueError("every chip must be +1 or -1")
        c = c.astype(np.int64)
        c.flags.writeable = False
        object.__setattr__(self, "chips", c)

    def __len__(self):
        return self.chips.size

    @property
    def length(self) -> int:
        return self.chips.size

    def __neg__(self) -> "CodeSequence":
        return CodeSequence(-self.chips)


def _as_count(value: float, what: str, tol: float = 0.05) -> int:
    n = round(value)
    if abs(value - n) > tol:
        raise ValueError(f"{what} is not an integer number of symbols ({value:.4f})")
    return int(n)


@dataclass(frozen=True)
class PwmSpec:
    """Timing of one PWM half-cycle.

    The default high time is 1/(24 MHz), i.e. 20 symbols at 480 MHz, so the
    half-cycle is exactly 32 symbols.
    """

    symbol_rate: float = 480e6
    zero_guard: float = 12.5e-9
    high_time: float = 1.0 / 24e6
    amplitude: float = 70.0
    carrier_freq: float = 7.5e6

    def __post_init__(self):
        if self.symbol_rate <= 0 or self.carrier_freq <= 0:
            raise ValueError("symbol_rate and carrier_freq must be positive")
        if self.zero_guard < 0 or self.high_time <= 0:
            raise ValueError("zero_guard must be >= 0 and high_time > 0")
        half = self.half_cycle_samples
        if 2 * self.guard_samples + self.high_samples != half:
            raise ValueError(
                "2*zero_guard + high_time must equal one half-cycle "
                f"({2 * self.guard_samples} + {self.high_samples} != {half} symbols)"
            )

    @property
    def half_cycle_samples(self) -> int:
        return _as_count(self.symbol_rate / (2 * self.carrier_freq), "half-cycle")

    @property
    def guard_samples(self) -> int:
        return _as_count(self.zero_guard * self.symbol_rate, "zero_guard")

    @property
    def high_samples(self) -> int:
        return _as_count(self.high_time * self.symbol_rate, "high_time")


def synth_pwm_pulse(cycles: float, spec: PwmSpec | None = None) -> SampledWaveform:
    """3-level PWM burst of ``cycles`` carrier periods, first half-cycle positive.

    >>> len(synth_pwm_pulse(2).samples)
    128
    """
    spec = spec or PwmSpec()
    halves = 2 * float(cycles)
    if halves <= 0 or not float(halves).is_integer():
        raise ValueError(f"cycles must be a positive multiple of 0.5, got {cycles}")
    g, h = spec.guard_samples, spec.high_samples
    half = np.concatenate([np.zeros(g), np.full(h, spec.amplitude), np.zeros(g)])
    signs = (-1.0) ** np.arange(int(halves))
    x = np.concatenate([s * half for s in signs])
    return SampledWaveform(x + 0.0, spec.symbol_rate, 0.0, "volts")


# The scanner's 8-chip pair, returned verbatim for length 8.
_GOLAY8 = (
    np.array([1, 1, -1, -1, -1, 1, -1, 1]),
    np.array([1, 1, 1, 1, -1, 1, 1, -1]),
)


def golay_pair(length: int) -> tuple[CodeSequence, CodeSequence]:
    """Complementary Golay pair of a power-of-two length.

    Length 8 returns the pair used on the scanner; other lengths come from
    the doubling recursion A' = A|B, B' = A|-B seeded with ([1], [1]).
    """
    if not isinstance(length, (int, np.integer)) or length < 1 or length & (length - 1):
        raise ValueError(f"length must be a power of two, got {length}")
    if length == 8:
        return CodeSequence(_GOLAY8[0]), CodeSequence(_GOLAY8[1])
    a = b = np.ones(1, dtype=np.int64)
    while a.size < length:
        a, b = np.concatenate([a, b]), np.concatenate([a, -b])
    return CodeSequence(a), CodeSequence(b)


def aperiodic_autocorrelation(code: CodeSequence) -> np.ndarray:
    """Integer autocorrelation over lags -(N-1)..N-1."""
    c = code.chips
    return np.correlate(c, c, mode="full")


def bpsk_modulate(code: CodeSequence, chip: SampledWaveform) -> SampledWaveform:
    """Concatenate one chip slot per code element, sign-flipped for -1 chips."""
    if len(code) == 0:
        raise ValueError("empty code")
    x = np.kron(code.chips.astype(float), chip.samples)
    return chip.with_samples(x)


def signal_energy(w: SampledWaveform) -> float:
    """Sampling interval times the sum of squared samples (unit^2 * s)."""
    return float(np.sum(w.samples**2) / w.sample_rate)


def occupied_bandwidth(w: SampledWaveform, fraction: float = 0.99) -> float:
    """Frequency below which ``fraction`` of the signal energy lies."""
    p = np.abs(np.fft.rfft(w.samples)) ** 2
    total = p.sum()
    if total == 0:
        return 0.0
    f = np.fft.rfftfreq(len(w), w.dt)
    k = int(np.searchsorted(np.cumsum(p) / total, fraction))
    return float(f[min(k, f.size - 1)])


def resample(
    w: SampledWaveform, new_rate: float, *, strict: bool = False, keep_tails: bool = False
) -> SampledWaveform:
    """Band-limited polyphase (Kaiser-windowed sinc) resampling.

    The output keeps ``t0`` and the duration (to within one output sample).
    With ``keep_tails`` the input is first zero-padded by the filter half
    length on both sides, so ringing of short pulses outside the record is
    kept rather than cut off; ``t0`` moves back accordingly.
    When ``new_rate`` is below twice the 99 % occupied bandwidth an
    :class:`AliasingWarning` is issued, or ``ValueError`` raised if ``strict``.
    """
    if not new_rate > 0:
        raise ValueError("new_rate must be positive")
    if new_rate == w.sample_rate:
        return w
    bw = occupied_bandwidth(w)
    if new_rate < 2 * bw:
        msg = f"resampling to {new_rate:g} Hz aliases content up to {bw:g} Hz"
        if strict:
            raise ValueError(msg)
        warnings.warn(msg, AliasingWarning, stacklevel=2)
    ratio = Fraction(new_rate / w.sample_rate).limit_denominator(10_000)
    up, down = ratio.numerator, ratio.denominator
    half_len = 20 * max(up, down)
    taps = signal.firwin(2 * half_len + 1, 1.0 / max(up, down), window=("kaiser", 9.0))
    if keep_tails:
        # pad in whole output samples so t0 stays on the new grid
        n_pad = math.ceil(half_len / up / down) * down
        w = w.padded(n_pad, n_pad)
    y = signal.resample_poly(w.samples, up, down, window=taps)
    n_out = math.ceil(len(w) * up / down)
    return w.with_samples(y[:n_out], sample_rate=w.sample_rate * up / down)
