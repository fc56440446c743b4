"""Transmission index math: anchors, band exclusion, sliding-window path."""

import numpy as np
import pytest

from iselab.audio import AudioBuffer
from iselab.spectral import SILENT, BandLevels, band_levels
from iselab.sti import (
    MODULATION_FREQUENCIES,
    ModulationGrid,
    StiResult,
    StiWeights,
    TiMatrix,
    apparent_snr_from_mtf,
    mtf_stationary,
    sti,
    sti_from_band_levels,
    sti_from_signals,
    stit,
    ti_from_apparent_snr,
)

SR = 24000


def test_ti_anchor_points():
    assert ti_from_apparent_snr(-15.0) == 0.0
    assert ti_from_apparent_snr(-7.5) == 0.25
    assert ti_from_apparent_snr(0.0) == 0.5
    assert ti_from_apparent_snr(7.5) == 0.75
    assert ti_from_apparent_snr(15.0) == 1.0


def test_ti_clips_outside_range():
    assert ti_from_apparent_snr(-40.0) == 0.0
    assert ti_from_apparent_snr(40.0) == 1.0
    with pytest.raises(ValueError, match="NaN"):
        ti_from_apparent_snr(float("nan"))


def test_mtf_stationary_values():
    assert mtf_stationary(0.0) == 0.5
    assert mtf_stationary(10.0) == pytest.approx(1 / 1.1)
    assert mtf_stationary(-10.0) == pytest.approx(1 / 11)
    with pytest.raises(ValueError, match="finite"):
        mtf_stationary(float("inf"))


def test_apparent_snr_inverts_mtf():
    for snr in (-12.0, -3.0, 0.0, 4.5, 14.0):
        assert apparent_snr_from_mtf(mtf_stationary(snr)) == pytest.approx(snr)
    assert apparent_snr_from_mtf(0.0) == -15.0
    assert apparent_snr_from_mtf(1.0) == 15.0
    # Clipping at the ends of the usable range.
    assert apparent_snr_from_mtf(0.9999) == 15.0
    with pytest.raises(ValueError):
        apparent_snr_from_mtf(1.5)


def test_modulation_grid():
    grid = ModulationGrid()
    assert len(grid.frequencies) == 14
    assert grid.frequencies[0] == 0.63
    assert grid.frequencies[-1] == 12.5
    with pytest.raises(ValueError):
        ModulationGrid(tuple(range(14)))


def test_weights_uniform_and_file():
    uni = StiWeights.uniform()
    assert sum(uni.w) == pytest.approx(1.0)
    male = StiWeights.default_male()
    assert len(male.w) == 7
    assert sum(male.w) == pytest.approx(1.0, abs=0.01)
    assert male.w != uni.w


def test_weights_validation(tmp_path):
    with pytest.raises(ValueError, match="sum to 1"):
        StiWeights((0.5,) * 7)
    with pytest.raises(ValueError, match="non-negative"):
        StiWeights((-0.1, 0.3, 0.2, 0.2, 0.2, 0.1, 0.1))
    bad = tmp_path / "w.csv"
    bad.write_text("125,0.5\n250,0.5\n")
    with pytest.raises(ValueError, match="octave centers"):
        StiWeights.from_file(bad)


def test_ti_matrix_validation():
    TiMatrix(np.full((7, 14), 0.5))
    with pytest.raises(ValueError, match="7x14"):
        TiMatrix(np.zeros((7, 13)))
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        TiMatrix(np.full((7, 14), 1.5))


def test_sti_collapse_of_matrix():
    result = sti(TiMatrix(np.full((7, 14), 0.5)), StiWeights.uniform())
    assert result.sti == pytest.approx(0.5)
    ti = np.full((7, 14), 0.0)
    ti[3, :] = 1.0
    weighted = sti(TiMatrix(ti), StiWeights((0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0)))
    assert weighted.sti == pytest.approx(1.0)


def test_sti_result_invariants():
    with pytest.raises(ValueError, match="out of"):
        StiResult(sti=1.2, per_band_ti=(1.2,) * 7, method="x",
                  weights=(1 / 7,) * 7)
    with pytest.raises(ValueError, match="weighted per-band"):
        StiResult(sti=0.9, per_band_ti=(0.5,) * 7, method="x",
                  weights=(1 / 7,) * 7)


def test_sti_from_signals_snr_anchors(shaped_speech):
    # A scaled copy of the speech is a stationary masker with a known,
    # exactly uniform band SNR equal to minus the applied gain.
    for gain_db, expected in ((-15.0, 1.0), (-7.5, 0.75), (0.0, 0.5),
                              (7.5, 0.25), (15.0, 0.0)):
        noise = shaped_speech.scaled(10 ** (gain_db / 20))
        result = sti_from_signals(shaped_speech, noise)
        assert result.sti == pytest.approx(expected, abs=1e-9)
        assert result.excluded_bands == ()
        assert result.method == "stationary-snr"


def test_sti_from_signals_validation(shaped_speech):
    with pytest.raises(ValueError, match="non-empty"):
        sti_from_signals(shaped_speech, AudioBuffer(np.zeros(0), SR))
    with pytest.raises(ValueError, match="sample-rate mismatch"):
        sti_from_signals(shaped_speech, AudioBuffer(np.zeros(48000), 48000))


def band_levels_with(levels):
    return BandLevels(tuple(levels))


def test_band_exclusion_rules():
    audible = band_levels_with([-20.0] * 7)
    speech_gap = band_levels_with([SILENT] + [-20.0] * 6)
    noise_gap = band_levels_with([SILENT] + [-20.0] * 6)

    # Speech silent, noise audible: that band transmits nothing.
    r = sti_from_band_levels(speech_gap, audible)
    assert r.per_band_ti[0] == 0.0
    assert r.excluded_bands == ()
    assert r.weights[0] == pytest.approx(1 / 7)

    # Noise silent, speech audible: perfect transmission in that band.
    r = sti_from_band_levels(audible, speech_gap)
    assert r.per_band_ti[0] == 1.0
    assert r.excluded_bands == ()

    # Both silent: band leaves the average and weights renormalize.
    r = sti_from_band_levels(speech_gap, noise_gap)
    assert r.excluded_bands == (0,)
    assert r.weights[0] == 0.0
    assert sum(r.weights) == pytest.approx(1.0)
    assert r.sti == pytest.approx(0.5)

    silent = band_levels_with([SILENT] * 7)
    with pytest.raises(ValueError, match="all octave bands"):
        sti_from_band_levels(silent, silent)


def test_stit_matches_stationary_for_steady_masker(shaped_speech):
    rng = np.random.default_rng(9)
    noise = AudioBuffer(rng.standard_normal(len(shaped_speech)) * 0.1, SR)
    steady = sti_from_signals(shaped_speech, noise)
    windowed = stit(shaped_speech, noise)
    assert abs(windowed.sti - steady.sti) <= 0.02
    assert windowed.method == "sliding-window"
    assert windowed.params["window_seconds"] == 1.0
    assert windowed.params["hop_seconds"] == 0.25
    assert windowed.params["n_windows"] > 0


def test_stit_credits_masker_gaps(shaped_speech):
    # Gated masker: same long-term power as a steady one, but the windows
    # that fall in the silent half see a much better SNR.
    rng = np.random.default_rng(10)
    steady = rng.standard_normal(len(shaped_speech))
    gate = (np.arange(len(steady)) // SR) % 2 == 0
    gated = steady * gate
    gated = gated / np.sqrt(np.mean(np.square(gated))) * np.sqrt(np.mean(np.square(steady)))

    match_speech = np.sqrt(np.mean(np.square(shaped_speech.samples)))
    steady_buf = AudioBuffer(steady / np.sqrt(np.mean(np.square(steady))) * match_speech, SR)
    gated_buf = AudioBuffer(gated / np.sqrt(np.mean(np.square(gated))) * match_speech, SR)

    s_steady = sti_from_signals(shaped_speech, steady_buf).sti
    s_gated = stit(shaped_speech, gated_buf).sti
    assert s_gated > s_steady + 0.03


def test_stit_window_validation(shaped_speech):
    noise = shaped_speech.scaled(0.5)
    with pytest.raises(ValueError, match="window must be > 0"):
        stit(shaped_speech, noise, window=0.0)
    with pytest.raises(ValueError, match="hop must satisfy"):
        stit(shaped_speech, noise, hop=2.0)
    with pytest.raises(ValueError, match="longer than the noise"):
        stit(shaped_speech, noise, window=1000.0)


def test_stit_consistency_between_value_and_bands(shaped_speech):
    noise = shaped_speech.scaled(0.7)
    result = stit(shaped_speech, noise)
    assert result.sti == pytest.approx(
        float(np.dot(result.weights, result.per_band_ti)), abs=1e-12
    )


def test_modulation_frequency_table_is_third_octave():
    ratios = np.array(MODULATION_FREQUENCIES[1:]) / np.array(MODULATION_FREQUENCIES[:-1])
    assert np.all(np.abs(np.log2(ratios) - 1 / 3) < 0.03)
