"""Mono audio buffers, WAV I/O and RMS utilities.

All processing in the toolkit runs on float64 sample arrays at nominal
full scale +-1.0. Multichannel files are averaged down to mono on load
(the playback chain is a single loudspeaker) and the original channel
count is kept in the buffer metadata.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.io import wavfile


@dataclass(frozen=True)
class AudioBuffer:
    """Immutable mono signal: float64 samples plus sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"AudioBuffer is mono, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioBuffer samples must be finite")
        if not (isinstance(self.sample_rate, (int, np.integer)) and self.sample_rate > 0):
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate!r}")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        """Length in seconds."""
        return len(self.samples) / self.sample_rate

    def scaled(self, gain: float) -> "AudioBuffer":
        """Return a copy with a scalar gain applied."""
        return AudioBuffer(self.samples * gain, self.sample_rate, dict(self.metadata))

    def checksum(self) -> str:
        """SHA-256 of the raw little-endian float64 sample bytes."""
        return hashlib.sha256(self.samples.astype("<f8").tobytes()).hexdigest()


def load_wave(path) -> AudioBuffer:
    """Read a PCM16 / PCM32 / float32 WAV file as a mono AudioBuffer.

    Multichannel content is averaged down; `metadata["source_channels"]`
    records the original channel count.
    """
    try:
        sr, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ValueError(f"unsupported or corrupt WAV: {path} ({exc})") from exc

    if data.size == 0:
        raise ValueError(f"zero-length WAV payload: {path}")

    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"unsupported or corrupt WAV: {path} (dtype {data.dtype})")

    channels = 1 if samples.ndim == 1 else samples.shape[1]
    if samples.ndim == 2:
        samples = samples.mean(axis=1)

    return AudioBuffer(samples, int(sr), {"source_channels": channels, "source_path": str(path)})


def save_wave(path, buffer: AudioBuffer, encoding: str = "float32") -> None:
    """Write a buffer as mono WAV. encoding: "float32" or "pcm16"."""
    if encoding == "float32":
        wavfile.write(path, buffer.sample_rate, buffer.samples.astype(np.float32))
    elif encoding == "pcm16":
        clipped = np.clip(buffer.samples, -1.0, 1.0)
        wavfile.write(path, buffer.sample_rate, np.round(clipped * 32767.0).astype(np.int16))
    else:
        raise ValueError(f"unknown encoding {encoding!r}")


def rms(buffer: AudioBuffer) -> float:
    """Root mean square of the samples."""
    if len(buffer) == 0:
        raise ValueError("rms of an empty buffer")
    return float(np.sqrt(np.mean(np.square(buffer.samples))))


def normalize_rms(buffer: AudioBuffer, target_rms: float) -> AudioBuffer:
    """Scale the buffer so its RMS equals target_rms (pure scalar gain)."""
    if target_rms <= 0:
        raise ValueError(f"target_rms must be > 0, got {target_rms}")
    current = rms(buffer)
    if current == 0.0:
        raise ValueError("cannot normalize silence")
    return buffer.scaled(target_rms / current)
