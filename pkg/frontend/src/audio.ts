/**
 * Condition audio playback.
 *
 * Two invariants, enforced here rather than trusted to rendering code:
 * the condition signal plays continuously across the recall trials of one
 * condition (a new trial never restarts audio that is already playing), and
 * it never crosses a condition boundary (switching conditions stops the old
 * signal before the new one starts).
 *
 * The actual audio output sits behind AudioSink so the logic is testable
 * without a browser; createWebAudioSink adapts a real AudioContext.
 */

import { ByteRange, StimulusChunk } from "./api";
import { StimulusRef } from "./schemas";

export interface AudioSink {
  start(bytes: Uint8Array, offsetSeconds: number): Promise<void> | void;
  stop(): void;
  readonly playing: boolean;
}

export interface StimulusFetcher {
  stimulus(label: string, range?: ByteRange): Promise<StimulusChunk>;
}

export class ConditionPlayer {
  private current: string | null = null;

  constructor(
    private readonly fetcher: StimulusFetcher,
    private readonly sink: AudioSink,
  ) {}

  get currentCondition(): string | null {
    return this.current;
  }

  /**
   * Bring playback in line with a step's stimulus reference. Same condition
   * already playing: no-op, the signal keeps running. Different condition or
   * stopped sink: (re)start at the descriptor's offset. Null: stop.
   */
  async syncTo(ref: StimulusRef | null): Promise<void> {
    if (ref === null) {
      this.stop();
      return;
    }
    if (ref.condition === this.current && this.sink.playing) return;
    if (this.sink.playing) this.sink.stop();
    const chunk = await this.fetcher.stimulus(ref.condition);
    await this.sink.start(chunk.bytes, ref.offset_seconds);
    this.current = ref.condition;
  }

  stop(): void {
    if (this.sink.playing) this.sink.stop();
    this.current = null;
  }
}

/**
 * Reference-signal volume check: play, ask, repeat until confirmed or the
 * attempt budget runs out. The attempt count is reported either way.
 */
export async function runVolumeCheck(
  play: () => Promise<void> | void,
  confirm: () => Promise<boolean> | boolean,
  maxAttempts = 5,
): Promise<{ passed: boolean; attempts: number }> {
  if (maxAttempts < 1) throw new Error("maxAttempts must be >= 1");
  let attempts = 0;
  while (attempts < maxAttempts) {
    attempts += 1;
    await play();
    if (await confirm()) return { passed: true, attempts };
  }
  return { passed: false, attempts };
}

/** Adapt a Web Audio context to the AudioSink interface (browser only). */
export function createWebAudioSink(ctx: AudioContext): AudioSink {
  let source: AudioBufferSourceNode | null = null;
  let playing = false;
  return {
    get playing() {
      return playing;
    },
    async start(bytes: Uint8Array, offsetSeconds: number): Promise<void> {
      const copy = bytes.slice().buffer; // decodeAudioData detaches its input
      const buffer = await ctx.decodeAudioData(copy);
      source = ctx.createBufferSource();
      source.buffer = buffer;
      source.connect(ctx.destination);
      source.onended = () => {
        playing = false;
      };
      source.start(0, offsetSeconds % buffer.duration);
      playing = true;
    },
    stop() {
      if (source !== null) {
        source.onended = null;
        source.stop();
        source.disconnect();
        source = null;
      }
      playing = false;
    },
  };
}
