from __future__ import annotations

import numpy as np
import pytest

from iselab.audio import AudioBuffer
from iselab.spectral import SpectrumProfile, apply_ltass
from iselab.stimulus import synth_babble, synthetic_speech_like

SR = 24000

_ACCEPTANCE_RESULTS = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is not None and report.when == "call":
        name = marker.args[0] if marker.args else item.name
        _ACCEPTANCE_RESULTS.append((name, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, outcome in _ACCEPTANCE_RESULTS:
        tag = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{tag}  {name}")


@pytest.fixture(scope="session")
def speech_source():
    """30 s of synthetic speech-paced noise shared across tests."""
    return synthetic_speech_like(30.0, SR, seed=11)


@pytest.fixture(scope="session")
def babble_source(speech_source):
    talker = synthetic_speech_like(25.0, SR, seed=12)
    return synth_babble([talker], 6, seed=13, duration=20.0)


@pytest.fixture(scope="session")
def shaped_speech():
    """12 s speech-shaped noise, the common STI test signal."""
    raw = synthetic_speech_like(12.0, SR, seed=21)
    return apply_ltass(raw, SpectrumProfile.default_ltass())


@pytest.fixture(scope="session")
def white_noise():
    rng = np.random.default_rng(5)
    return AudioBuffer(rng.standard_normal(6 * SR) * 0.1, SR)
