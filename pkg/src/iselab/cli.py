"""Command line front door: `ise`.

Groups: signal measurement, intelligibility indices, stimulus synthesis,
the dp model, cohort statistics, and the session service.
"""

from __future__ import annotations

import csv
import json
import os
import sys

import click
import numpy as np

import iselab
from iselab.analysis import (
    PerformanceMatrix,
    decrease_in_performance,
    export_report,
    rm_anova,
)
from iselab.audio import AudioBuffer, load_wave, rms, save_wave
from iselab.dp_model import (
    CohortSpec,
    DpObservation,
    SigmoidParams,
    fit_sigmoid,
    predict_dp,
    simulate_cohort,
)
from iselab.spectral import SpectrumProfile, a_weighted_level, apply_ltass
from iselab.sti import StiWeights, sti_from_signals, stit
from iselab.stimulus import (
    StimulusSpec,
    build_condition,
    synth_babble,
    synthetic_speech_like,
)


@click.group()
@click.version_option(iselab.__version__, prog_name="ise")
def main():
    """Irrelevant-sound experiment toolkit."""


def _weights(name: str) -> StiWeights:
    if name == "uniform":
        return StiWeights.uniform()
    if name == "male":
        return StiWeights.default_male()
    return StiWeights.from_file(name)


# ---------------------------------------------------------------------------
# signal


@main.group()
def signal():
    """Level and spectrum measurements."""


@signal.command("rms")
@click.argument("wav", type=click.Path(exists=True))
def signal_rms(wav):
    """Print the RMS of a WAV file."""
    buf = load_wave(wav)
    click.echo(f"{rms(buf)!r}")


@signal.command("level")
@click.argument("wav", type=click.Path(exists=True))
@click.option("--offset", default=100.0, show_default=True,
              help="dB added to map digital full scale onto SPL.")
def signal_level(wav, offset):
    """Print the A-weighted level of a WAV file."""
    buf = load_wave(wav)
    level = a_weighted_level(buf, calibration_offset=offset)
    click.echo(f"{level:.2f} dB(A)" if np.isfinite(level) else "silence")


@signal.command("ltass")
@click.argument("wav_in", type=click.Path(exists=True))
@click.argument("wav_out", type=click.Path())
@click.option("--profile", default=None, type=click.Path(exists=True),
              help="Spectrum profile file; default is the packaged speech shape.")
@click.option("--min-duration", default=10.0, show_default=True)
def signal_ltass(wav_in, wav_out, profile, min_duration):
    """Shape a WAV to a long-term speech spectrum."""
    buf = load_wave(wav_in)
    prof = SpectrumProfile.from_file(profile) if profile else None
    shaped = apply_ltass(buf, prof or SpectrumProfile.default_ltass(),
                         min_duration=min_duration)
    save_wave(wav_out, shaped)
    click.echo(f"wrote {wav_out}")


# ---------------------------------------------------------------------------
# intelligibility


@main.command("sti")
@click.argument("speech", type=click.Path(exists=True))
@click.argument("masker", type=click.Path(exists=True))
@click.option("--weights", default="uniform", show_default=True,
              help="uniform, male, or a weights file.")
@click.option("--as-json", is_flag=True, help="Emit the full result as JSON.")
def sti_cmd(speech, masker, weights, as_json):
    """Speech transmission index of speech against a stationary masker."""
    result = sti_from_signals(load_wave(speech), load_wave(masker),
                              weights=_weights(weights))
    if as_json:
        click.echo(json.dumps({
            "sti": result.sti, "per_band_ti": list(result.per_band_ti),
            "excluded_bands": list(result.excluded_bands),
            "method": result.method}, indent=2))
    else:
        click.echo(f"STI = {result.sti:.4f}")


@main.command("stit")
@click.argument("speech", type=click.Path(exists=True))
@click.argument("masker", type=click.Path(exists=True))
@click.option("--weights", default="uniform", show_default=True)
@click.option("--window", default=1.0, show_default=True, help="window seconds")
@click.option("--hop", default=0.25, show_default=True, help="hop seconds")
def stit_cmd(speech, masker, weights, window, hop):
    """Sliding-window STI for fluctuating maskers."""
    result = stit(load_wave(speech), load_wave(masker), weights=_weights(weights),
                  window=window, hop=hop)
    click.echo(f"STIt = {result.sti:.4f} over {result.params['n_windows']} windows")


# ---------------------------------------------------------------------------
# synthesis


@main.command("babble")
@click.option("--source", "sources", multiple=True, required=True,
              type=click.Path(exists=True), help="Speech WAV (repeatable).")
@click.option("--talkers", default=6, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--duration", default=None, type=float)
@click.option("--out", required=True, type=click.Path())
def babble_cmd(sources, talkers, seed, duration, out):
    """Mix overlapped time-offset copies of speech into babble."""
    bufs = [load_wave(p) for p in sources]
    bab = synth_babble(bufs, talkers, seed, duration)
    save_wave(out, bab)
    click.echo(f"wrote {out} ({bab.duration:.1f} s, {talkers} talkers)")


def _build_one(spec, speech, babble, outdir):
    out, manifest = build_condition(speech, babble, spec)
    os.makedirs(outdir, exist_ok=True)
    wav_path = os.path.join(outdir, f"{spec.label}.wav")
    man_path = os.path.join(outdir, f"{spec.label}.json")
    save_wave(wav_path, out)
    with open(man_path, "w") as fh:
        fh.write(manifest.to_json())
    achieved = manifest.achieved_sti
    note = f"achieved STI {achieved:.4f}" if achieved is not None else "control"
    click.echo(f"wrote {wav_path} ({note})")
    return manifest


@main.command("synth")
@click.option("--target", default=None, type=float,
              help="Target STI; omit with --silence for the control.")
@click.option("--silence", is_flag=True, help="Build the silence control.")
@click.option("--speech", type=click.Path(exists=True))
@click.option("--babble", type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(), help="Output directory.")
@click.option("--duration", default=540.0, show_default=True)
@click.option("--level", default=55.0, show_default=True, help="dB(A) target.")
@click.option("--seed", default=0, show_default=True)
@click.option("--sample-rate", default=24000, show_default=True,
              help="Used for the silence control only.")
def synth_cmd(target, silence, speech, babble, out, duration, level, seed,
              sample_rate):
    """Build one calibrated sound condition (WAV + manifest)."""
    if silence == (target is not None):
        raise click.UsageError("give exactly one of --target or --silence")
    if silence:
        spec = StimulusSpec(None, duration=duration, presentation_level=level,
                            seed=seed, sample_rate=sample_rate)
        _build_one(spec, None, None, out)
        return
    if not speech or not babble:
        raise click.UsageError("--target needs --speech and --babble")
    spec = StimulusSpec(target, duration=duration, presentation_level=level,
                        seed=seed)
    _build_one(spec, load_wave(speech), load_wave(babble), out)


@main.command("synth-set")
@click.option("--speech", type=click.Path(exists=True))
@click.option("--babble", type=click.Path(exists=True))
@click.option("--synthetic", is_flag=True,
              help="Generate stand-in sources instead of reading WAVs.")
@click.option("--out", required=True, type=click.Path())
@click.option("--targets", default="0.25,0.45,0.75,0.9", show_default=True)
@click.option("--duration", default=540.0, show_default=True)
@click.option("--level", default=55.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--sample-rate", default=24000, show_default=True)
def synth_set_cmd(speech, babble, synthetic, out, targets, duration, level,
                  seed, sample_rate):
    """Build the full condition set: silence plus every STI target."""
    if synthetic:
        src_seconds = max(30.0, min(duration, 60.0))
        speech_buf = synthetic_speech_like(src_seconds, sample_rate, [seed, 11])
        talker = synthetic_speech_like(src_seconds, sample_rate, [seed, 12])
        babble_buf = synth_babble([talker], 6, [seed, 13], duration=src_seconds)
    elif speech and babble:
        speech_buf = load_wave(speech)
        babble_buf = load_wave(babble)
        sample_rate = speech_buf.sample_rate
    else:
        raise click.UsageError("give --speech and --babble, or --synthetic")

    spec = StimulusSpec(None, duration=duration, presentation_level=level,
                        seed=seed, sample_rate=sample_rate)
    _build_one(spec, None, None, out)
    for target in sorted(float(t) for t in targets.split(",")):
        spec = StimulusSpec(target, duration=duration, presentation_level=level,
                            seed=seed)
        _build_one(spec, speech_buf, babble_buf, out)


# ---------------------------------------------------------------------------
# model


@main.group()
def model():
    """Decrease-in-performance sigmoid."""


def _params(dp_max, midpoint, slope) -> SigmoidParams:
    return SigmoidParams(dp_max=dp_max, midpoint=midpoint, slope=slope)


@model.command("predict")
@click.option("--sti", required=True, type=float)
@click.option("--dp-max", default=7.0, show_default=True)
@click.option("--midpoint", default=0.45, show_default=True)
@click.option("--slope", default=12.0, show_default=True)
def model_predict(sti, dp_max, midpoint, slope):
    """Predicted dp (percentage points) at an STI."""
    click.echo(f"{predict_dp(sti, _params(dp_max, midpoint, slope)):.4f}")


@model.command("fit")
@click.option("--obs", required=True, type=click.Path(exists=True),
              help="Delimited table with header sti,dp.")
def model_fit(obs):
    """Fit the sigmoid to observed (sti, dp) points."""
    with open(obs, newline="") as fh:
        reader = csv.DictReader(fh)
        observations = [DpObservation(float(r["sti"]), float(r["dp"]))
                        for r in reader]
    fit = fit_sigmoid(observations)
    p = fit.params
    click.echo(f"dp_max   = {p.dp_max:.6g}")
    click.echo(f"midpoint = {p.midpoint:.6g}")
    click.echo(f"slope    = {p.slope:.6g}")
    click.echo(f"rss      = {fit.residual:.6g}")
    if fit.degenerate:
        click.echo("warning: all dp values equal; slope is unidentifiable")


@model.command("simulate")
@click.option("--spec", "spec_path", default=None, type=click.Path(exists=True),
              help="JSON file of cohort fields; defaults otherwise.")
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", default=None, type=int, help="Override the spec seed.")
def model_simulate(spec_path, out, seed):
    """Draw a synthetic cohort and write its performance matrix."""
    fields = {}
    if spec_path:
        with open(spec_path) as fh:
            fields = json.load(fh)
    if seed is not None:
        fields["seed"] = seed
    if "condition_stis" in fields:
        fields["condition_stis"] = tuple(fields["condition_stis"])
    matrix = simulate_cohort(CohortSpec(**fields))
    matrix.to_csv(out)
    click.echo(f"wrote {out} ({matrix.n_subjects} subjects)")


# ---------------------------------------------------------------------------
# statistics


@main.command("anova")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True),
              help="Performance matrix CSV.")
@click.option("--raw", is_flag=True,
              help="Test raw performance over all conditions instead of dp "
                   "over the noise conditions.")
@click.option("--control", default="silence", show_default=True)
def anova_cmd(in_path, raw, control):
    """One-way repeated-measures ANOVA."""
    matrix = PerformanceMatrix.from_csv(in_path)
    data = matrix if raw else decrease_in_performance(matrix, control)
    result = rm_anova(data)
    what = "performance" if raw else "dp"
    click.echo(f"rm-ANOVA on {what}: F({result.df_effect}, {result.df_error}) "
               f"= {result.f:.4g}, p = {result.p:.4g}")
    click.echo(f"SS effect {result.ss_effect:.6g}  subjects "
               f"{result.ss_subjects:.6g}  error {result.ss_error:.6g}")
    if result.zero_error_variance:
        click.echo("warning: zero error variance; F is unbounded")


@main.command("report")
@click.option("--in", "in_path", default=None, type=click.Path(exists=True),
              help="Performance matrix CSV.")
@click.option("--sessions", default=None, type=click.Path(exists=True),
              help="Session store directory; complete sessions are exported.")
@click.option("--out", required=True, type=click.Path())
@click.option("--control", default="silence", show_default=True)
@click.option("--cluster-seed", default=0, show_default=True)
def report_cmd(in_path, sessions, out, control, cluster_seed):
    """Write the analysis bundle (dp table, ANOVA, dp-vs-STI, clusters)."""
    if (in_path is None) == (sessions is None):
        raise click.UsageError("give exactly one of --in or --sessions")
    if in_path:
        matrix = PerformanceMatrix.from_csv(in_path)
    else:
        from iselab.service.flow import matrix_from_bundles
        from iselab.service.store import SessionStore
        store = SessionStore(sessions)
        bundles = []
        for sid in store.list_sessions():
            record = store.get(sid)
            if record.status == "complete":
                bundles.append(record.export_bundle())
        if not bundles:
            raise click.ClickException("no complete sessions found")
        matrix = matrix_from_bundles(bundles)
    paths = export_report(matrix, out, control=control, cluster_seed=cluster_seed)
    for name, path in sorted(paths.items()):
        click.echo(f"{name}: {path}")


# ---------------------------------------------------------------------------
# service


@main.command("serve")
@click.option("--sessions", required=True, type=click.Path())
@click.option("--stimuli", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8350, show_default=True)
def serve_cmd(sessions, stimuli, host, port):
    """Run the session service."""
    import uvicorn

    from iselab.service.app import create_app

    app = create_app(sessions, stimuli)
    click.echo(f"serving sessions from {sessions} with stimuli {stimuli} "
               f"on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main(prog_name="ise")
