"""Octave filterbank, A-weighting and LTASS shaping tests."""

import math

import numpy as np
import pytest

from iselab.audio import AudioBuffer, rms
from iselab.spectral import (
    BELOW_FLOOR,
    OCTAVE_CENTERS,
    SILENT,
    BandLevels,
    SpectrumProfile,
    a_weight_db,
    a_weighted_level,
    apply_ltass,
    band_edges,
    band_levels,
    band_power_signals,
    minimum_sample_rate,
    octave_filterbank,
    third_octave_levels,
)

SR = 24000


def sine(freq, seconds, sr=SR, amp=0.5):
    t = np.arange(int(seconds * sr)) / sr
    return AudioBuffer(amp * np.sin(2 * np.pi * freq * t), sr)


def steady_rms(buffer, skip_seconds=1.0):
    skip = int(skip_seconds * buffer.sample_rate)
    return float(np.sqrt(np.mean(np.square(buffer.samples[skip:]))))


def test_band_edges_bracket_center():
    for fc in OCTAVE_CENTERS:
        lo, hi = band_edges(fc)
        assert lo < fc < hi
        assert hi / lo == pytest.approx(2.0 ** 0.96)


def test_minimum_sample_rate_covers_top_band():
    assert minimum_sample_rate() == pytest.approx(2 * 8000 * 2 ** 0.48)
    with pytest.raises(ValueError, match="too low"):
        octave_filterbank(sine(1000, 0.5, sr=22050))


def test_filterbank_center_gain_near_unity():
    for fc in OCTAVE_CENTERS:
        bands = octave_filterbank(sine(fc, 3.0, sr=48000))
        k = OCTAVE_CENTERS.index(fc)
        gain_db = 20 * np.log10(steady_rms(bands[k]) / (0.5 / np.sqrt(2)))
        assert abs(gain_db) < 0.2


def test_filterbank_rejection_one_octave_out():
    # A tone one octave beyond a band's edge has to be strongly rejected.
    for k, fc in enumerate(OCTAVE_CENTERS[:-1]):
        probe = fc * 2 ** (0.48 + 1.0)
        bands = octave_filterbank(sine(probe, 3.0, sr=48000))
        atten_db = 20 * np.log10(steady_rms(bands[k]) / (0.5 / np.sqrt(2)))
        assert atten_db < -38.0


def test_filterbank_power_sum_on_white_noise():
    # Noise brickwalled to the bank's overall coverage: the seven band
    # powers must account for nearly all of it without ever exceeding it
    # (crossover overlap must not create power).
    rng = np.random.default_rng(7)
    x = rng.standard_normal(5 * 48000) * 0.1
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(len(x), d=1 / 48000)
    lo, hi = band_edges(OCTAVE_CENTERS[0])[0], band_edges(OCTAVE_CENTERS[-1])[1]
    spec[(freqs < lo) | (freqs > hi)] = 0.0
    x = np.fft.irfft(spec, n=len(x))
    buf = AudioBuffer(x, 48000)
    bands = band_power_signals(buf)
    ratio = np.sum(np.mean(np.square(bands), axis=1)) / np.mean(np.square(buf.samples))
    assert ratio <= 1.0
    assert ratio > 0.95


def test_band_levels_of_single_tone():
    buf = sine(1000, 3.0)
    levels = band_levels(buf)
    expected = 20 * math.log10(rms(buf))
    assert levels.levels[3] == pytest.approx(expected, abs=0.1)
    for k in (0, 1, 5, 6):
        assert levels.levels[k] < expected - 30


def test_band_levels_silence_marker():
    buf = AudioBuffer(np.zeros(SR), SR)
    levels = band_levels(buf)
    assert all(levels.is_silent(k) for k in range(7))


def test_band_levels_shifted():
    levels = BandLevels((0.0, -3.0, SILENT, 1.0, 2.0, 3.0, 4.0))
    up = levels.shifted(6.0)
    assert up.levels[0] == 6.0
    assert up.levels[2] == SILENT


def test_band_levels_validation():
    with pytest.raises(ValueError, match="expected 7"):
        BandLevels((0.0, 1.0))
    with pytest.raises(ValueError, match="finite"):
        BandLevels((0.0,) * 6 + (float("nan"),))
    with pytest.raises(ValueError, match="finite"):
        BandLevels((0.0,) * 6 + (float("inf"),))


def test_a_weight_reference_points():
    # Nominal IEC table values.
    assert a_weight_db(1000.0) == pytest.approx(0.0, abs=1e-6)
    assert a_weight_db(100.0) == pytest.approx(-19.1, abs=0.2)
    assert a_weight_db(125.0) == pytest.approx(-16.1, abs=0.2)
    assert a_weight_db(2000.0) == pytest.approx(1.2, abs=0.2)
    assert a_weight_db(8000.0) == pytest.approx(-1.1, abs=0.2)


def test_a_weight_vector_matches_scalar():
    freqs = np.array([250.0, 500.0, 4000.0])
    vec = a_weight_db(freqs)
    for f, v in zip(freqs, vec):
        assert v == pytest.approx(a_weight_db(float(f)))


def test_a_weighted_level_of_1khz_tone():
    buf = sine(1000, 2.0)
    # At 1 kHz the A-curve is 0 dB, so the weighted level is just the RMS level.
    assert a_weighted_level(buf) == pytest.approx(20 * math.log10(rms(buf)), abs=0.01)
    assert a_weighted_level(buf, calibration_offset=100.0) == pytest.approx(
        20 * math.log10(rms(buf)) + 100.0, abs=0.01
    )


def test_a_weighted_level_discounts_low_frequencies():
    low = sine(100, 2.0)
    mid = sine(1000, 2.0)
    assert a_weighted_level(mid) - a_weighted_level(low) == pytest.approx(19.1, abs=0.3)


def test_a_weighted_level_silence_below_floor():
    assert a_weighted_level(AudioBuffer(np.zeros(SR), SR)) == BELOW_FLOOR


def test_third_octave_levels_flat_for_white_noise(white_noise):
    centers = [fc for fc, _ in SpectrumProfile.flat().bands if fc <= 8000]
    levels = third_octave_levels(white_noise, centers)
    # White noise has constant power per Hz, so third-octave power grows
    # by one dB per band step of the 10^(1/10) series.
    steps = np.diff(levels)
    assert np.all(np.abs(steps - 1.0) < 0.6)


def test_spectrum_profile_validation():
    with pytest.raises(ValueError, match="at least two"):
        SpectrumProfile(((1000.0, 0.0),))
    with pytest.raises(ValueError, match="strictly increasing"):
        SpectrumProfile(((1000.0, 0.0), (500.0, 1.0)))
    with pytest.raises(ValueError, match="finite"):
        SpectrumProfile(((500.0, float("nan")), (1000.0, 0.0)))


def test_spectrum_profile_covers():
    assert SpectrumProfile.default_ltass().covers(125.0, 8000.0)
    assert not SpectrumProfile(((250.0, 0.0), (4000.0, 0.0))).covers(125.0, 8000.0)


def test_spectrum_profile_file_round_trip(tmp_path):
    path = tmp_path / "shape.csv"
    path.write_text("# comment\n100, -2.5\n1000 0.0\n10000, 3.25\n")
    profile = SpectrumProfile.from_file(path)
    assert profile.frequencies.tolist() == [100.0, 1000.0, 10000.0]
    assert profile.levels.tolist() == [-2.5, 0.0, 3.25]
    bad = tmp_path / "bad.csv"
    bad.write_text("100, 1, 2\n")
    with pytest.raises(ValueError, match="bad profile line"):
        SpectrumProfile.from_file(bad)


def test_default_ltass_is_speech_shaped():
    profile = SpectrumProfile.default_ltass()
    levels = dict(profile.bands)
    # Speech energy peaks in the low mids and falls off towards 8 kHz.
    assert levels[500] > levels[8000]
    assert levels[250] > levels[4000]


def test_apply_ltass_matches_target_shape(white_noise):
    rng = np.random.default_rng(40)
    buf = AudioBuffer(rng.standard_normal(12 * SR) * 0.1, SR)
    profile = SpectrumProfile.default_ltass()
    shaped = apply_ltass(buf, profile)

    usable = profile.frequencies <= SR / 2 / 2 ** (1 / 6)
    centers = profile.frequencies[usable]
    target = profile.levels[usable]
    measured = third_octave_levels(shaped, centers)
    diff = (measured - np.mean(measured)) - (target - np.mean(target))
    assert np.max(np.abs(diff)) < 1.5


def test_apply_ltass_preserves_rms(white_noise):
    rng = np.random.default_rng(41)
    buf = AudioBuffer(rng.standard_normal(12 * SR) * 0.05, SR)
    shaped = apply_ltass(buf, SpectrumProfile.default_ltass())
    assert rms(shaped) == pytest.approx(rms(buf), rel=1e-9)
    assert shaped.metadata["ltass_profile"] == "ltass-default"


def test_apply_ltass_rejects_short_input():
    rng = np.random.default_rng(42)
    buf = AudioBuffer(rng.standard_normal(2 * SR) * 0.1, SR)
    with pytest.raises(ValueError, match="too short"):
        apply_ltass(buf, SpectrumProfile.default_ltass())


def test_apply_ltass_rejects_narrow_profile():
    rng = np.random.default_rng(43)
    buf = AudioBuffer(rng.standard_normal(12 * SR) * 0.1, SR)
    narrow = SpectrumProfile(((250.0, 0.0), (2000.0, 0.0)))
    with pytest.raises(ValueError, match="does not cover"):
        apply_ltass(buf, narrow)


def test_apply_ltass_rejects_silence():
    buf = AudioBuffer(np.zeros(12 * SR), SR)
    with pytest.raises(ValueError, match="shape silence"):
        apply_ltass(buf, SpectrumProfile.default_ltass())
