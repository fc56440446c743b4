"""Background-sound condition builder.

Reproduces the stimulus chain: loop/assemble source material to the
requested duration, shape speech and babble to a common long-term
spectrum, normalize both to equal RMS, find the babble gain that puts
the mixture at the target STI by bisection on log-gain, and scale the
mix so a stated calibration offset yields the requested dB(A)
presentation level. Every build emits a manifest from which the output
can be reconstructed bit-exactly given the same sources.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from iselab.audio import AudioBuffer, normalize_rms, rms
from iselab.spectral import SpectrumProfile, a_weighted_level, apply_ltass, band_levels
from iselab.sti import StiWeights, sti_from_band_levels

SCHEMA_VERSION = 1
REFERENCE_RMS = 0.1  # common RMS for shaped speech and babble before mixing
DEFAULT_BRACKET_DB = (-40.0, 40.0)
MAX_BISECTION_STEPS = 60


class CalibrationError(ValueError):
    """Target STI cannot be reached inside the allowed gain bracket."""


@dataclass(frozen=True)
class StimulusSpec:
    """Recipe for one sound condition; target_sti=None builds the silence control."""

    target_sti: float | None
    duration: float = 540.0
    presentation_level: float = 55.0
    sti_tolerance: float = 0.01
    seed: int = 0
    calibration_offset: float = 100.0  # dB mapping digital full scale to SPL
    sample_rate: int | None = None     # required only for the silence control

    def __post_init__(self):
        if self.target_sti is not None and not 0.0 < self.target_sti <= 1.0:
            raise ValueError(f"target_sti must lie in (0, 1], got {self.target_sti}")
        if self.duration <= 0:
            raise ValueError("duration must be > 0")
        if self.sti_tolerance <= 0:
            raise ValueError("sti_tolerance must be > 0")

    @property
    def label(self) -> str:
        return "silence" if self.target_sti is None else f"sti-{self.target_sti:g}"


@dataclass(frozen=True)
class CalibrationResult:
    gain: float
    achieved_sti: float
    iterations: int
    bracket_db: tuple
    tolerance: float


@dataclass(frozen=True)
class StimulusManifest:
    """Full record of one condition build; serializes to canonical JSON."""

    spec: StimulusSpec
    condition_type: str                 # "sti-target" | "control"
    sources: tuple                      # ({role, sha256, samples, sample_rate}, ...)
    processing: tuple                   # ordered step descriptions
    babble_gain: float
    achieved_sti: float | None
    calibration: dict
    level: dict
    output: dict
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> str:
        payload = {
            "schema_version": self.schema_version,
            "condition_type": self.condition_type,
            "label": self.spec.label,
            "spec": {
                "target_sti": self.spec.target_sti,
                "duration": self.spec.duration,
                "presentation_level": self.spec.presentation_level,
                "sti_tolerance": self.spec.sti_tolerance,
                "seed": self.spec.seed,
                "calibration_offset": self.spec.calibration_offset,
                "sample_rate": self.spec.sample_rate,
            },
            "sources": list(self.sources),
            "processing": list(self.processing),
            "babble_gain": self.babble_gain,
            "achieved_sti": self.achieved_sti,
            "calibration": self.calibration,
            "level": self.level,
            "output": self.output,
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "StimulusManifest":
        d = json.loads(text)
        spec = StimulusSpec(
            target_sti=d["spec"]["target_sti"],
            duration=d["spec"]["duration"],
            presentation_level=d["spec"]["presentation_level"],
            sti_tolerance=d["spec"]["sti_tolerance"],
            seed=d["spec"]["seed"],
            calibration_offset=d["spec"]["calibration_offset"],
            sample_rate=d["spec"]["sample_rate"],
        )
        return cls(
            spec=spec,
            condition_type=d["condition_type"],
            sources=tuple(d["sources"]),
            processing=tuple(d["processing"]),
            babble_gain=d["babble_gain"],
            achieved_sti=d["achieved_sti"],
            calibration=d["calibration"],
            level=d["level"],
            output=d["output"],
            schema_version=d["schema_version"],
        )


def _float32_checksum(samples: np.ndarray) -> str:
    return hashlib.sha256(samples.astype("<f4").tobytes()).hexdigest()


def calibrate_gain_for_sti(speech: AudioBuffer, babble: AudioBuffer, target: float,
                           tolerance: float = 0.01,
                           bracket_db: tuple = DEFAULT_BRACKET_DB,
                           weights: StiWeights | None = None) -> CalibrationResult:
    """Find the linear babble gain that puts the mixture at the target STI.

    Bisection on log-gain: the per-band levels of both signals are measured
    once, and a gain of g shifts every babble band level by 20*log10(g)
    exactly, so each bisection step costs a seven-term weighted sum rather
    than a filterbank pass. STI is monotone non-increasing in babble gain;
    a violation inside the bracket raises a consistency error.
    """
    weights = weights or StiWeights.uniform()
    speech_levels = band_levels(speech)
    babble_levels = band_levels(babble)
    if all(babble_levels.is_silent(k) for k in range(7)):
        raise CalibrationError("masker is silent; STI is 1.0 at any gain")
    if target >= 1.0:
        raise CalibrationError("unreachable: requires silent masker (target STI = 1)")

    def sti_at(gain_db: float) -> float:
        return sti_from_band_levels(speech_levels, babble_levels.shifted(gain_db),
                                    weights).sti

    lo_db, hi_db = bracket_db
    sti_lo = sti_at(lo_db)   # quietest masker -> highest STI
    sti_hi = sti_at(hi_db)   # loudest masker -> lowest STI
    if sti_hi > sti_lo + 1e-12:
        raise RuntimeError("internal consistency: STI increased with masker gain")
    if target > sti_lo + tolerance:
        raise CalibrationError(
            f"unreachable: requires silent masker (STI at minimum gain {sti_lo:.4f} "
            f"< target {target})"
        )
    if target < sti_hi - tolerance:
        raise CalibrationError(
            f"unreachable: masker ceiling (STI at maximum gain {sti_hi:.4f} "
            f"> target {target})"
        )

    iterations = 0
    lo_val, hi_val = sti_lo, sti_hi
    mid_db, mid_val = lo_db, lo_val
    while iterations < MAX_BISECTION_STEPS:
        mid_db = 0.5 * (lo_db + hi_db)
        mid_val = sti_at(mid_db)
        iterations += 1
        if mid_val > lo_val + 1e-12 or mid_val < hi_val - 1e-12:
            raise RuntimeError("internal consistency: non-monotone STI inside bracket")
        if abs(mid_val - target) <= tolerance:
            break
        if mid_val > target:
            lo_db, lo_val = mid_db, mid_val
        else:
            hi_db, hi_val = mid_db, mid_val
    else:
        raise RuntimeError(
            f"calibration failed to converge in {MAX_BISECTION_STEPS} steps "
            f"(last STI {mid_val:.4f}, target {target})"
        )

    return CalibrationResult(gain=10.0 ** (mid_db / 20.0), achieved_sti=mid_val,
                             iterations=iterations, bracket_db=tuple(bracket_db),
                             tolerance=tolerance)


def assemble_to_duration(buffer: AudioBuffer, n_samples: int, seed,
                         segment_seconds: float = 5.0, crossfade_ms: float = 50.0,
                         loop: bool = True) -> AudioBuffer:
    """Deterministically extend source material to an exact sample count.

    Long sources are trimmed. Short sources are looped: the material is cut
    into segments, each loop cycle concatenates a fresh seeded shuffle of
    them, and joins are equal-power crossfades of `crossfade_ms`.
    """
    x = buffer.samples
    sr = buffer.sample_rate
    if len(x) >= n_samples:
        return AudioBuffer(x[:n_samples].copy(), sr, dict(buffer.metadata))
    if not loop:
        raise ValueError(
            f"source too short ({len(x)} samples) for {n_samples} samples with looping disabled"
        )
    if len(x) == 0:
        raise ValueError("cannot assemble an empty source")

    rng = np.random.default_rng(seed)
    seg_n = max(1, int(round(segment_seconds * sr)))
    segments = [x[i:i + seg_n] for i in range(0, len(x), seg_n)]
    if len(segments) > 1 and len(segments[-1]) < seg_n // 2:
        segments[-2] = np.concatenate([segments[-2], segments[-1]])
        segments.pop()
    cf_n = int(round(crossfade_ms / 1000.0 * sr))
    cf_n = min(cf_n, min(len(s) for s in segments) // 2)
    ramp = np.sin(0.5 * np.pi * np.linspace(0.0, 1.0, cf_n, endpoint=False)) if cf_n else None

    out = np.empty(n_samples + seg_n + 1)
    pos = 0
    first = True
    while pos < n_samples:
        for idx in rng.permutation(len(segments)):
            seg = segments[idx]
            if first:
                out[:len(seg)] = seg
                pos = len(seg)
                first = False
            elif cf_n:
                fade = out[pos - cf_n:pos] * ramp[::-1] + seg[:cf_n] * ramp
                out[pos - cf_n:pos] = fade
                take = min(len(seg) - cf_n, len(out) - pos)
                out[pos:pos + take] = seg[cf_n:cf_n + take]
                pos += take
            else:
                take = min(len(seg), len(out) - pos)
                out[pos:pos + take] = seg[:take]
                pos += take
            if pos >= n_samples:
                break
    return AudioBuffer(out[:n_samples].copy(), sr, dict(buffer.metadata))


def synth_babble(speech_sources: Sequence[AudioBuffer], n_talkers: int, seed,
                 duration: float | None = None) -> AudioBuffer:
    """Multi-talker babble: sum of circularly time-offset, RMS-equalized streams.

    Deterministic for a given seed. With one talker the output is simply a
    time-offset copy of a source, i.e. maximal envelope fluctuation; more
    talkers flatten the envelope.
    """
    if n_talkers < 1:
        raise ValueError("n_talkers must be >= 1")
    if not speech_sources:
        raise ValueError("insufficient material: no sources given")
    sr = speech_sources[0].sample_rate
    if any(s.sample_rate != sr for s in speech_sources):
        raise ValueError("all babble sources must share one sample rate")
    if any(len(s) == 0 or rms(s) == 0.0 for s in speech_sources):
        raise ValueError("insufficient material: empty or silent source")

    n_out = int(round((duration if duration is not None else
                       max(s.duration for s in speech_sources)) * sr))
    rng = np.random.default_rng(seed)
    mix = np.zeros(n_out)
    for i in range(n_talkers):
        src = speech_sources[i % len(speech_sources)]
        stream = src.samples / rms(src)
        offset = int(rng.integers(0, len(stream)))
        rolled = np.roll(stream, offset)
        reps = int(np.ceil(n_out / len(rolled)))
        mix += np.tile(rolled, reps)[:n_out]

    target = float(np.mean([rms(s) for s in speech_sources]))
    out = AudioBuffer(mix, sr, {"n_talkers": n_talkers, "babble_seed": seed})
    return normalize_rms(out, target)


def synthetic_speech_like(duration: float, sample_rate: int = 24000,
                          seed=0, modulation_hz: float = 3.2) -> AudioBuffer:
    """Noise with a speech-paced envelope; a stand-in source for demos and tests.

    Not speech: just a carrier with a slow sinusoidal envelope around the
    syllable rate, enough to exercise shaping, calibration, and mixing
    without shipping recordings.
    """
    if duration <= 0:
        raise ValueError("duration must be > 0")
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    phase = rng.uniform(0.0, 2.0 * np.pi)
    envelope = 0.55 + 0.45 * np.sin(2.0 * np.pi * modulation_hz * t + phase)
    samples = rng.standard_normal(n) * envelope
    return AudioBuffer(samples * 0.1, sample_rate,
                       {"synthetic": "speech-like", "seed": seed})


def _source_entry(role: str, buffer: AudioBuffer) -> dict:
    return {
        "role": role,
        "sha256": buffer.checksum(),
        "samples": len(buffer),
        "sample_rate": buffer.sample_rate,
        "path": buffer.metadata.get("source_path"),
    }


def build_condition(speech: AudioBuffer | None, babble: AudioBuffer | None,
                    spec: StimulusSpec, profile: SpectrumProfile | None = None,
                    weights: StiWeights | None = None, loop: bool = True,
                    ltass_min_duration: float = 10.0,
                    segment_seconds: float = 5.0,
                    crossfade_ms: float = 50.0) -> tuple[AudioBuffer, StimulusManifest]:
    """Build one sound condition and its reconstruction manifest."""
    if spec.target_sti is None:
        return _build_silence(spec)
    if speech is None or babble is None:
        raise ValueError("speech and babble sources are required for an STI target")
    if speech.sample_rate != babble.sample_rate:
        raise ValueError("speech and babble must share a sample rate")

    profile = profile or SpectrumProfile.default_ltass()
    weights = weights or StiWeights.uniform()
    sr = speech.sample_rate
    n_samples = int(round(spec.duration * sr))

    speech_asm = assemble_to_duration(speech, n_samples, [spec.seed, 0],
                                      segment_seconds, crossfade_ms, loop)
    babble_asm = assemble_to_duration(babble, n_samples, [spec.seed, 1],
                                      segment_seconds, crossfade_ms, loop)
    speech_sh = normalize_rms(
        apply_ltass(speech_asm, profile, min_duration=ltass_min_duration), REFERENCE_RMS)
    babble_sh = normalize_rms(
        apply_ltass(babble_asm, profile, min_duration=ltass_min_duration), REFERENCE_RMS)

    cal = calibrate_gain_for_sti(speech_sh, babble_sh, spec.target_sti,
                                 spec.sti_tolerance, weights=weights)

    mix = speech_sh.samples + cal.gain * babble_sh.samples
    mix_buf = AudioBuffer(mix, sr)
    measured = a_weighted_level(mix_buf, spec.calibration_offset)
    output_gain = 10.0 ** ((spec.presentation_level - measured) / 20.0)
    out = AudioBuffer(mix * output_gain, sr, {"condition": spec.label})

    processing = (
        {"step": "assemble", "segment_seconds": segment_seconds,
         "crossfade_ms": crossfade_ms, "loop": loop, "samples": n_samples},
        {"step": "ltass", "profile": profile.name,
         "min_duration": ltass_min_duration},
        {"step": "normalize_rms", "reference_rms": REFERENCE_RMS},
        {"step": "mix", "babble_gain": cal.gain},
        {"step": "level", "output_gain": output_gain},
    )
    manifest = StimulusManifest(
        spec=spec,
        condition_type="sti-target",
        sources=(_source_entry("speech", speech), _source_entry("babble", babble)),
        processing=processing,
        babble_gain=cal.gain,
        achieved_sti=cal.achieved_sti,
        calibration={"iterations": cal.iterations, "bracket_db": list(cal.bracket_db),
                     "tolerance": cal.tolerance, "weights": list(weights.w)},
        level={"calibration_offset": spec.calibration_offset,
               "presentation_dba": spec.presentation_level,
               "measured_pre_gain_dba": measured,
               "output_gain": output_gain},
        output={"samples": len(out), "sample_rate": sr,
                "sha256_float32": _float32_checksum(out.samples),
                "peak": float(np.max(np.abs(out.samples)))},
    )
    return out, manifest


def _build_silence(spec: StimulusSpec) -> tuple[AudioBuffer, StimulusManifest]:
    if spec.sample_rate is None:
        raise ValueError("the silence control needs spec.sample_rate")
    n = int(round(spec.duration * spec.sample_rate))
    out = AudioBuffer(np.zeros(n), spec.sample_rate, {"condition": "silence"})
    manifest = StimulusManifest(
        spec=spec,
        condition_type="control",
        sources=(),
        processing=({"step": "silence", "samples": n},),
        babble_gain=0.0,
        achieved_sti=None,
        calibration={},
        level={"calibration_offset": spec.calibration_offset,
               "presentation_dba": None, "output_gain": 0.0},
        output={"samples": n, "sample_rate": spec.sample_rate,
                "sha256_float32": _float32_checksum(out.samples), "peak": 0.0},
    )
    return out, manifest


def rebuild_condition(manifest: StimulusManifest, speech: AudioBuffer | None,
                      babble: AudioBuffer | None,
                      profile: SpectrumProfile | None = None) -> AudioBuffer:
    """Reconstruct a condition from its manifest, verifying source checksums
    and the output checksum. Uses the recorded gains (no re-search)."""
    spec = manifest.spec
    if manifest.condition_type == "control":
        out, _ = _build_silence(spec)
        return out

    expected = {s["role"]: s["sha256"] for s in manifest.sources}
    for role, buf in (("speech", speech), ("babble", babble)):
        if buf is None:
            raise ValueError(f"{role} source required to rebuild this manifest")
        if buf.checksum() != expected[role]:
            raise ValueError(f"{role} source checksum mismatch; not the original material")

    profile = profile or SpectrumProfile.default_ltass()
    steps = {p["step"]: p for p in manifest.processing}
    sr = speech.sample_rate
    n_samples = steps["assemble"]["samples"]
    speech_asm = assemble_to_duration(speech, n_samples, [spec.seed, 0],
                                      steps["assemble"]["segment_seconds"],
                                      steps["assemble"]["crossfade_ms"],
                                      steps["assemble"]["loop"])
    babble_asm = assemble_to_duration(babble, n_samples, [spec.seed, 1],
                                      steps["assemble"]["segment_seconds"],
                                      steps["assemble"]["crossfade_ms"],
                                      steps["assemble"]["loop"])
    min_dur = steps["ltass"]["min_duration"]
    ref = steps["normalize_rms"]["reference_rms"]
    speech_sh = normalize_rms(apply_ltass(speech_asm, profile, min_duration=min_dur), ref)
    babble_sh = normalize_rms(apply_ltass(babble_asm, profile, min_duration=min_dur), ref)
    mix = speech_sh.samples + manifest.babble_gain * babble_sh.samples
    out = AudioBuffer(mix * manifest.level["output_gain"], sr,
                      {"condition": spec.label})
    if _float32_checksum(out.samples) != manifest.output["sha256_float32"]:
        raise ValueError("rebuild does not match the manifest output checksum")
    return out
