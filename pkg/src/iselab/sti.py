"""Speech transmission index: stationary path and sliding-window variant.

The stationary path derives one apparent SNR per octave band from
long-term band levels, maps it to a transmission index through the
clipped affine rule TI = (clip(SNR, -15, +15) + 15) / 30, and collapses
the 7 x 14 transmission-index matrix with octave-band weights. The
sliding-window variant re-evaluates the masker's band levels in short
windows against the long-term speech levels and averages the
instantaneous index over window positions, which credits gaps in a
fluctuating masker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from iselab.audio import AudioBuffer
from iselab.spectral import (
    SILENT,
    BandLevels,
    OCTAVE_CENTERS,
    band_levels,
    band_power_signals,
)

SNR_FLOOR = -15.0
SNR_CEIL = 15.0

MODULATION_FREQUENCIES = (
    0.63, 0.8, 1.0, 1.25, 1.6, 2.0, 2.5, 3.15, 4.0, 5.0, 6.3, 8.0, 10.0, 12.5,
)


@dataclass(frozen=True)
class ModulationGrid:
    """The 14 third-octave modulation frequencies, 0.63 Hz .. 12.5 Hz."""

    frequencies: tuple = MODULATION_FREQUENCIES

    def __post_init__(self):
        f = self.frequencies
        if len(f) != 14 or any(b <= a for a, b in zip(f, f[1:])):
            raise ValueError("modulation grid must be 14 strictly increasing values")
        if f[0] != 0.63 or f[-1] != 12.5:
            raise ValueError("modulation grid must run 0.63 Hz .. 12.5 Hz")


def modulation_grid() -> ModulationGrid:
    return ModulationGrid()


@dataclass(frozen=True)
class StiWeights:
    """Octave-band weight factors; non-negative, summing to one."""

    w: tuple

    def __post_init__(self):
        w = tuple(float(v) for v in self.w)
        if len(w) != len(OCTAVE_CENTERS):
            raise ValueError(f"expected {len(OCTAVE_CENTERS)} weights, got {len(w)}")
        if any(v < 0 or not math.isfinite(v) for v in w):
            raise ValueError("weights must be finite and non-negative")
        total = sum(w)
        if not 0.99 <= total <= 1.01:
            raise ValueError(f"weights must sum to 1 within 1%, got {total}")
        object.__setattr__(self, "w", w)

    @classmethod
    def uniform(cls) -> "StiWeights":
        return cls((1.0 / 7.0,) * 7)

    @classmethod
    def default_male(cls) -> "StiWeights":
        """Weights from the packaged male-speech table (data/sti_weights_male.csv)."""
        ref = resources.files("iselab.data").joinpath("sti_weights_male.csv")
        with resources.as_file(ref) as path:
            return cls.from_file(path)

    @classmethod
    def from_file(cls, path) -> "StiWeights":
        """Read `center_hz, weight` rows ('#' comments allowed)."""
        rows = []
        with open(path) as fh:
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = [p for p in line.replace(",", " ").split() if p]
                rows.append((float(parts[0]), float(parts[1])))
        rows.sort()
        centers = tuple(f for f, _ in rows)
        if centers != OCTAVE_CENTERS:
            raise ValueError(f"weight file must cover the octave centers {OCTAVE_CENTERS}")
        return cls(tuple(v for _, v in rows))


@dataclass(frozen=True)
class TiMatrix:
    """Transmission indices, 7 octave bands x 14 modulation frequencies."""

    ti: np.ndarray

    def __post_init__(self):
        ti = np.asarray(self.ti, dtype=np.float64)
        if ti.shape != (len(OCTAVE_CENTERS), len(MODULATION_FREQUENCIES)):
            raise ValueError(f"TI matrix must be 7x14, got {ti.shape}")
        if np.any(ti < 0) or np.any(ti > 1) or not np.all(np.isfinite(ti)):
            raise ValueError("TI entries must lie in [0, 1]")
        ti.flags.writeable = False
        object.__setattr__(self, "ti", ti)


@dataclass(frozen=True)
class StiResult:
    """Scalar STI with its per-band transmission indices and provenance."""

    sti: float
    per_band_ti: tuple
    method: str
    weights: tuple  # effective weights (zero on excluded bands, renormalized)
    excluded_bands: tuple = ()
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not -1e-9 <= self.sti <= 1.0 + 1e-9:
            raise ValueError(f"sti out of [0, 1]: {self.sti}")
        dot = float(np.dot(self.weights, self.per_band_ti))
        if abs(dot - self.sti) > 1e-9:
            raise ValueError("sti does not equal the weighted per-band TI sum")
        object.__setattr__(self, "sti", min(max(float(self.sti), 0.0), 1.0))


def ti_from_apparent_snr(snr: float) -> float:
    """Map an apparent SNR in dB to a transmission index in [0, 1]."""
    if isinstance(snr, float) and math.isnan(snr):
        raise ValueError("snr is NaN")
    return (min(max(float(snr), SNR_FLOOR), SNR_CEIL) + 15.0) / 30.0


def mtf_stationary(snr: float) -> float:
    """Modulation reduction factor of stationary noise at the given SNR."""
    if not math.isfinite(snr):
        raise ValueError(f"snr must be finite, got {snr}")
    return 1.0 / (1.0 + 10.0 ** (-snr / 10.0))


def apparent_snr_from_mtf(m: float) -> float:
    """Apparent SNR (dB, clipped to [-15, +15]) from a modulation factor."""
    if math.isnan(m) or m < 0.0 or m > 1.0:
        raise ValueError(f"modulation factor must lie in [0, 1], got {m}")
    if m == 0.0:
        return SNR_FLOOR
    if m == 1.0:
        return SNR_CEIL
    snr = 10.0 * math.log10(m / (1.0 - m))
    return min(max(snr, SNR_FLOOR), SNR_CEIL)


def sti(ti: TiMatrix, weights: StiWeights, method: str = "mtf") -> StiResult:
    """Collapse a TI matrix: per-band mean over modulation frequencies,
    then the weighted band sum."""
    per_band = ti.ti.mean(axis=1)
    value = float(np.dot(weights.w, per_band))
    return StiResult(sti=value, per_band_ti=tuple(float(v) for v in per_band),
                     method=method, weights=tuple(weights.w))


def _band_snrs(speech: BandLevels, noise: BandLevels) -> list:
    """Per-band apparent SNR; None marks a both-silent (excluded) band."""
    out = []
    for s, n in zip(speech.levels, noise.levels):
        if s == SILENT and n == SILENT:
            out.append(None)
        elif s == SILENT:
            out.append(SNR_FLOOR)
        elif n == SILENT:
            out.append(SNR_CEIL)
        else:
            out.append(s - n)
    return out


def _collapse(snrs: list, weights: StiWeights, method: str, params: dict) -> StiResult:
    """Weighted STI from per-band SNRs with exclusion renormalization."""
    excluded = tuple(k for k, s in enumerate(snrs) if s is None)
    if len(excluded) == len(snrs):
        raise ValueError("all octave bands are silent in both signals")
    eff = np.array(weights.w, dtype=np.float64)
    eff[list(excluded)] = 0.0
    eff /= eff.sum()
    per_band = tuple(0.0 if s is None else ti_from_apparent_snr(s) for s in snrs)
    value = float(np.dot(eff, per_band))
    return StiResult(sti=value, per_band_ti=per_band, method=method,
                     weights=tuple(float(v) for v in eff),
                     excluded_bands=excluded, params=params)


def sti_from_signals(speech: AudioBuffer, noise: AudioBuffer,
                     weights: StiWeights | None = None) -> StiResult:
    """STI of speech against a stationary masker, from long-term band levels.

    The per-band SNR is the speech band level minus the noise band level;
    for a stationary masker the transmission index is the same at every
    modulation frequency, so the modulation average is exact.
    """
    weights = weights or StiWeights.uniform()
    if len(speech) == 0 or len(noise) == 0:
        raise ValueError("speech and noise must be non-empty")
    if speech.sample_rate != noise.sample_rate:
        raise ValueError(
            f"sample-rate mismatch: speech {speech.sample_rate} Hz, noise {noise.sample_rate} Hz"
        )
    snrs = _band_snrs(band_levels(speech), band_levels(noise))
    return _collapse(snrs, weights, "stationary-snr", {})


def sti_from_band_levels(speech: BandLevels, noise: BandLevels,
                         weights: StiWeights | None = None) -> StiResult:
    """Stationary STI straight from precomputed band levels."""
    weights = weights or StiWeights.uniform()
    return _collapse(_band_snrs(speech, noise), weights, "stationary-snr", {})


def stit(speech: AudioBuffer, noise: AudioBuffer, weights: StiWeights | None = None,
         window: float = 1.0, hop: float = 0.25) -> StiResult:
    """Sliding-window STI for fluctuating maskers.

    Window and hop are mandatory, recorded parameters: the masker's band
    levels are re-measured in each window, compared against the long-term
    speech band levels, and the instantaneous indices are averaged
    arithmetically over window positions. Band exclusion (both signals
    silent in a band) is decided on long-term levels, so the same weight
    vector applies to every window and the reported value equals the
    weighted sum of per-band mean TIs exactly.
    """
    weights = weights or StiWeights.uniform()
    if window <= 0:
        raise ValueError("window must be > 0")
    if not 0 < hop <= window:
        raise ValueError("hop must satisfy 0 < hop <= window")
    if len(speech) == 0 or len(noise) == 0:
        raise ValueError("speech and noise must be non-empty")
    if speech.sample_rate != noise.sample_rate:
        raise ValueError(
            f"sample-rate mismatch: speech {speech.sample_rate} Hz, noise {noise.sample_rate} Hz"
        )
    sr = noise.sample_rate
    win_n = int(round(window * sr))
    hop_n = max(1, int(round(hop * sr)))
    if win_n > len(noise):
        raise ValueError(
            f"window ({window:.3f} s) longer than the noise signal ({noise.duration:.3f} s)"
        )

    speech_long = band_levels(speech)
    long_snrs = _band_snrs(speech_long, band_levels(noise))
    excluded = tuple(k for k, s in enumerate(long_snrs) if s is None)
    if len(excluded) == len(OCTAVE_CENTERS):
        raise ValueError("all octave bands are silent in both signals")

    noise_bands = band_power_signals(noise)
    # Cumulative band energies make every window's mean power an O(1) lookup.
    cums = np.concatenate(
        [np.zeros((noise_bands.shape[0], 1)), np.cumsum(np.square(noise_bands), axis=1)],
        axis=1,
    )
    starts = np.arange(0, len(noise.samples) - win_n + 1, hop_n)

    per_band = np.zeros(len(OCTAVE_CENTERS))
    for k in range(len(OCTAVE_CENTERS)):
        if k in excluded:
            continue
        s = speech_long.levels[k]
        if s == SILENT:
            continue  # speech-silent band against an audible masker: TI stays 0
        power = (cums[k, starts + win_n] - cums[k, starts]) / win_n
        with np.errstate(divide="ignore"):
            snr = np.where(power > 0, s - 10.0 * np.log10(np.maximum(power, 1e-300)),
                           SNR_CEIL)
        per_band[k] = float(np.mean((np.clip(snr, SNR_FLOOR, SNR_CEIL) + 15.0) / 30.0))

    eff = np.array(weights.w, dtype=np.float64)
    eff[list(excluded)] = 0.0
    eff /= eff.sum()
    value = float(np.dot(eff, per_band))
    params = {"window_seconds": window, "hop_seconds": hop, "n_windows": len(starts)}
    return StiResult(sti=value, per_band_ti=tuple(float(v) for v in per_band),
                     method="sliding-window", weights=tuple(float(v) for v in eff),
                     excluded_bands=excluded, params=params)
