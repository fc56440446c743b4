/**
 * Local timing marks for one step: stimulus onset, first input, submit.
 *
 * These are advisory client measurements (the service's own timestamps are
 * authoritative). The marks are forced monotone: a mark can never land
 * before an earlier one, so onset <= first input <= submit always holds.
 */

export type Clock = () => number;

export class TimingMarks {
  private onsetMs: number | null = null;
  private firstInputMs: number | null = null;
  private submitMs: number | null = null;

  constructor(private readonly clock: Clock = () => Date.now()) {}

  private now(floor: number | null): number {
    const t = this.clock();
    return floor === null ? t : Math.max(t, floor);
  }

  markOnset(): void {
    if (this.onsetMs === null) this.onsetMs = this.now(null);
  }

  /** Records only the first call; later keystrokes do not move the mark. */
  markFirstInput(): void {
    if (this.firstInputMs === null) this.firstInputMs = this.now(this.onsetMs);
  }

  markSubmit(): void {
    this.submitMs = this.now(this.firstInputMs ?? this.onsetMs);
  }

  get onset(): number | null {
    return this.onsetMs;
  }

  get firstInput(): number | null {
    return this.firstInputMs;
  }

  get submit(): number | null {
    return this.submitMs;
  }

  /** Reaction time in ms (first input relative to onset), when both exist. */
  reactionMs(): number | null {
    if (this.onsetMs === null || this.firstInputMs === null) return null;
    return this.firstInputMs - this.onsetMs;
  }

  toJSON(): Record<string, unknown> {
    return {
      onset_ms: this.onsetMs,
      first_input_ms: this.firstInputMs,
      submit_ms: this.submitMs,
      client_measured: true,
    };
  }
}
