"""Octave-band analysis, A-weighted level and LTASS spectral shaping.

The octave filterbank covers the seven standard STI bands (125 Hz to
8 kHz). Filters are 4th-order Butterworth band-passes with edges at
fc * 2**(+-0.48): pulled slightly inside the half-octave points so the
bank's crossover power sum stays at or below unity while keeping 0 dB
gain at band centers and > 30 dB rejection one octave beyond the edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

import numpy as np
from scipy import signal

from iselab.audio import AudioBuffer, rms

OCTAVE_CENTERS = (125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0)
EDGE_EXPONENT = 0.48  # band edges at fc * 2**(+-EDGE_EXPONENT)
FILTER_ORDER = 4
SILENT = float("-inf")  # marker for bands / levels with zero power
BELOW_FLOOR = float("-inf")


def band_edges(center: float) -> tuple[float, float]:
    """Lower/upper passband edge of the octave band centered at `center`."""
    k = 2.0 ** EDGE_EXPONENT
    return center / k, center * k


def minimum_sample_rate() -> float:
    """Lowest sample rate that accommodates the 8 kHz band."""
    return 2.0 * band_edges(OCTAVE_CENTERS[-1])[1]


def _design_bank(sample_rate: int) -> list[np.ndarray]:
    if sample_rate < minimum_sample_rate():
        raise ValueError(
            f"sample rate {sample_rate} Hz too low for the 8 kHz octave band "
            f"(needs >= {minimum_sample_rate():.0f} Hz)"
        )
    bank = []
    for fc in OCTAVE_CENTERS:
        lo, hi = band_edges(fc)
        bank.append(signal.butter(FILTER_ORDER, [lo, hi], btype="bandpass",
                                  fs=sample_rate, output="sos"))
    return bank


def octave_filterbank(buffer: AudioBuffer) -> list[AudioBuffer]:
    """Split a buffer into the 7 octave bands, 125 Hz .. 8 kHz."""
    bank = _design_bank(buffer.sample_rate)
    return [AudioBuffer(signal.sosfilt(sos, buffer.samples), buffer.sample_rate)
            for sos in bank]


def band_power_signals(buffer: AudioBuffer) -> np.ndarray:
    """7 x N array of band-filtered samples (shared helper for STI paths)."""
    bank = _design_bank(buffer.sample_rate)
    return np.stack([signal.sosfilt(sos, buffer.samples) for sos in bank])


@dataclass(frozen=True)
class BandLevels:
    """Octave-band levels in dB re digital full scale; -inf marks a silent band."""

    levels: tuple

    def __post_init__(self):
        if len(self.levels) != len(OCTAVE_CENTERS):
            raise ValueError(f"expected {len(OCTAVE_CENTERS)} band levels, got {len(self.levels)}")
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        for v in self.levels:
            if math.isnan(v) or v == float("inf"):
                raise ValueError("band levels must be finite or the silent marker (-inf)")

    def is_silent(self, k: int) -> bool:
        return self.levels[k] == SILENT

    def shifted(self, db: float) -> "BandLevels":
        """Levels after a uniform gain of `db` (silent bands stay silent)."""
        return BandLevels(tuple(v if v == SILENT else v + db for v in self.levels))


def _power_to_db(power: np.ndarray) -> np.ndarray:
    out = np.full(power.shape, SILENT)
    nz = power > 0
    out[nz] = 10.0 * np.log10(power[nz])
    return out


def band_levels(buffer: AudioBuffer) -> BandLevels:
    """Mean-power level per octave band, 10*log10(mean(x^2)) re full scale."""
    if len(buffer) == 0:
        raise ValueError("band_levels of an empty buffer")
    bands = band_power_signals(buffer)
    power = np.mean(np.square(bands), axis=1)
    return BandLevels(tuple(_power_to_db(power)))


# A-weighting: analytic IEC 61672 pole/zero magnitude, normalized to 0 dB at 1 kHz.
_A_F1 = 20.598997
_A_F2 = 107.65265
_A_F3 = 737.86223
_A_F4 = 12194.217


def a_weight_db(freq_hz: np.ndarray | float) -> np.ndarray | float:
    """A-weighting correction in dB at the given frequency (0 dB at 1 kHz)."""
    f2 = np.square(np.asarray(freq_hz, dtype=np.float64))

    def ra(f2):
        return (_A_F4 ** 2 * f2 ** 2) / (
            (f2 + _A_F1 ** 2)
            * np.sqrt((f2 + _A_F2 ** 2) * (f2 + _A_F3 ** 2))
            * (f2 + _A_F4 ** 2)
        )

    with np.errstate(divide="ignore"):
        out = 20.0 * np.log10(ra(f2) / ra(np.float64(1000.0 ** 2)))
    return out if np.ndim(freq_hz) else float(out)


def a_weighted_level(buffer: AudioBuffer, calibration_offset: float = 0.0) -> float:
    """Overall A-weighted level in dB(A).

    The A-curve is applied to the signal's power spectrum bin by bin and
    the weighted power is summed; `calibration_offset` maps digital full
    scale to physical SPL. Silence returns BELOW_FLOOR (-inf).
    """
    if len(buffer) == 0:
        raise ValueError("a_weighted_level of an empty buffer")
    x = buffer.samples
    n = len(x)
    spec = np.fft.rfft(x)
    # Per-bin mean power so that the bins sum to mean(x^2) (Parseval).
    power = np.square(np.abs(spec)) / (n * n)
    weights = np.full(len(power), 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
    freqs = np.fft.rfftfreq(n, d=1.0 / buffer.sample_rate)
    gains = np.zeros(len(power))
    gains[1:] = np.power(10.0, a_weight_db(freqs[1:]) / 10.0)  # DC gets zero weight
    total = float(np.sum(power * weights * gains))
    if total <= 0.0:
        return BELOW_FLOOR
    return 10.0 * math.log10(total) + calibration_offset


@dataclass(frozen=True)
class SpectrumProfile:
    """Spectral shape target: ordered (center frequency Hz, level dB relative) pairs."""

    bands: tuple
    name: str = "profile"

    def __post_init__(self):
        bands = tuple((float(f), float(l)) for f, l in self.bands)
        freqs = [f for f, _ in bands]
        if len(bands) < 2:
            raise ValueError("profile needs at least two bands")
        if any(nxt <= prev for prev, nxt in zip(freqs, freqs[1:])):
            raise ValueError("profile center frequencies must be strictly increasing")
        if not all(math.isfinite(l) for _, l in bands):
            raise ValueError("profile levels must be finite")
        object.__setattr__(self, "bands", bands)

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([f for f, _ in self.bands])

    @property
    def levels(self) -> np.ndarray:
        return np.array([l for _, l in self.bands])

    def covers(self, lo: float = 125.0, hi: float = 8000.0) -> bool:
        """Whether the profile's band centers span at least [lo, hi]."""
        return self.frequencies[0] <= lo and self.frequencies[-1] >= hi

    @classmethod
    def from_file(cls, path) -> "SpectrumProfile":
        """Read `frequency,level` pairs from a delimited text file ('#' comments)."""
        bands = []
        with open(path) as fh:
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = [p for p in line.replace(",", " ").split() if p]
                if len(parts) != 2:
                    raise ValueError(f"bad profile line in {path}: {line!r}")
                bands.append((float(parts[0]), float(parts[1])))
        return cls(tuple(bands), name=str(path))

    @classmethod
    def default_ltass(cls) -> "SpectrumProfile":
        """The LTASS profile shipped with the package (see data/ltass.csv)."""
        ref = resources.files("iselab.data").joinpath("ltass.csv")
        with resources.as_file(ref) as path:
            profile = cls.from_file(path)
        return cls(profile.bands, name="ltass-default")

    @classmethod
    def flat(cls, level: float = 0.0) -> "SpectrumProfile":
        """All-equal profile over the standard third-octave series 100 Hz .. 10 kHz."""
        freqs = [100.0 * 10.0 ** (k / 10.0) for k in range(21)]
        return cls(tuple((f, level) for f in freqs), name="flat")


def third_octave_levels(buffer: AudioBuffer, centers: Sequence[float],
                        window_seconds: float = 0.25) -> np.ndarray:
    """Third-octave band levels (dB) via Welch-averaged power spectra.

    Band power integrates the PSD over [fc / 2^(1/6), fc * 2^(1/6)].
    Returns -inf for bands with no power.
    """
    x = buffer.samples
    sr = buffer.sample_rate
    nperseg = min(len(x), 2 ** int(round(math.log2(max(sr * window_seconds, 16)))))
    freqs, psd = signal.welch(x, fs=sr, window="hann", nperseg=nperseg,
                              noverlap=nperseg // 2)
    df = freqs[1] - freqs[0]
    third = 2.0 ** (1.0 / 6.0)
    powers = []
    for fc in centers:
        mask = (freqs >= fc / third) & (freqs < fc * third)
        powers.append(float(np.sum(psd[mask]) * df) if np.any(mask) else 0.0)
    return _power_to_db(np.array(powers))


def apply_ltass(buffer: AudioBuffer, profile: SpectrumProfile,
                min_duration: float = 10.0, window_seconds: float = 0.25,
                passes: int = 2) -> AudioBuffer:
    """Shape a buffer's long-term spectrum to the profile.

    Measures third-octave levels at the profile's centers, builds a
    zero-phase FFT-domain gain curve that aligns the measured shape with
    the target shape, and re-normalizes the result to the input RMS.
    Up to `passes` correction passes are applied (the second pass mops up
    residuals from band-edge interpolation); the loop stops early once
    every band is within 0.5 dB of the target shape.
    """
    if buffer.duration < min_duration:
        raise ValueError(
            f"buffer too short for spectral shaping: {buffer.duration:.2f} s "
            f"< required {min_duration:.2f} s"
        )
    if not profile.covers(125.0, 8000.0):
        raise ValueError("profile does not cover the 125 Hz .. 8 kHz range")

    centers = profile.frequencies
    usable = centers <= buffer.sample_rate / 2.0 / (2.0 ** (1.0 / 6.0))
    if not np.any(usable):
        raise ValueError("profile lies entirely above the Nyquist range")
    centers = centers[usable]
    target = profile.levels[usable]
    target_shape = target - np.mean(target)

    input_rms = rms(buffer)
    if input_rms == 0.0:
        raise ValueError("cannot shape silence")

    x = buffer.samples.copy()
    sr = buffer.sample_rate
    n = len(x)
    fft_freqs = np.fft.rfftfreq(n, d=1.0 / sr)

    for _ in range(passes):
        measured = third_octave_levels(AudioBuffer(x, sr), centers, window_seconds)
        if np.any(measured == SILENT):
            raise ValueError("input has silent third-octave bands inside the profile range")
        measured_shape = measured - np.mean(measured)
        gain_db = target_shape - measured_shape
        if np.max(np.abs(gain_db)) <= 0.5:
            break
        # Interpolate band gains over log-frequency; hold edge values outside.
        with np.errstate(divide="ignore"):
            logf = np.log(np.maximum(fft_freqs, fft_freqs[1] / 2.0))
        bin_gain_db = np.interp(logf, np.log(centers), gain_db,
                                left=gain_db[0], right=gain_db[-1])
        spec = np.fft.rfft(x)
        spec *= np.power(10.0, bin_gain_db / 20.0)
        x = np.fft.irfft(spec, n=n)

    x *= input_rms / np.sqrt(np.mean(np.square(x)))
    meta = dict(buffer.metadata)
    meta["ltass_profile"] = profile.name
    return AudioBuffer(x, sr, meta)
