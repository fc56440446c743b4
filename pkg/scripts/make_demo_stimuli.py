#!/usr/bin/env python3
"""Build a small synthetic condition set for demos and frontend testing.

Writes silence plus the four calibrated STI conditions into OUTDIR using
generated stand-in sources (no recordings required). Short durations keep
the build fast; pass --duration 540 for full-length signals.
"""

import argparse
import os

from iselab.audio import save_wave
from iselab.stimulus import (
    StimulusSpec,
    build_condition,
    synth_babble,
    synthetic_speech_like,
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("outdir")
    ap.add_argument("--duration", type=float, default=12.0,
                    help="condition length in seconds (default 12)")
    ap.add_argument("--sample-rate", type=int, default=24000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--level", type=float, default=55.0)
    args = ap.parse_args()

    src_seconds = max(30.0, min(args.duration, 60.0))
    speech = synthetic_speech_like(src_seconds, args.sample_rate, [args.seed, 11])
    talker = synthetic_speech_like(src_seconds, args.sample_rate, [args.seed, 12])
    babble = synth_babble([talker], 6, [args.seed, 13], duration=src_seconds)

    os.makedirs(args.outdir, exist_ok=True)
    specs = [StimulusSpec(None, duration=args.duration, seed=args.seed,
                          presentation_level=args.level,
                          sample_rate=args.sample_rate)]
    specs += [StimulusSpec(t, duration=args.duration, seed=args.seed,
                           presentation_level=args.level)
              for t in (0.25, 0.45, 0.75, 0.9)]
    for spec in specs:
        out, manifest = build_condition(speech, babble, spec)
        wav = os.path.join(args.outdir, f"{spec.label}.wav")
        save_wave(wav, out)
        with open(os.path.join(args.outdir, f"{spec.label}.json"), "w") as fh:
            fh.write(manifest.to_json())
        sti = manifest.achieved_sti
        print(f"{wav}  {'control' if sti is None else f'STI {sti:.4f}'}")


if __name__ == "__main__":
    main()
