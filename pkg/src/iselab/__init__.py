"""Irrelevant-speech-effect laboratory toolkit.

Synthesizes background-sound conditions calibrated to exact speech
transmission index (STI) targets, runs the serial-recall experiment
protocol over HTTP, and analyzes decrease-in-performance results.
"""

__version__ = "0.1.0"

from iselab.audio import AudioBuffer, load_wave, normalize_rms, rms, save_wave
from iselab.sti import StiResult, StiWeights, sti_from_signals, stit

__all__ = [
    "AudioBuffer",
    "StiResult",
    "StiWeights",
    "load_wave",
    "normalize_rms",
    "rms",
    "save_wave",
    "sti_from_signals",
    "stit",
]
