/**
 * Session step loop.
 *
 * The runner owns the flow policy the service expects from a client: fetch
 * the pending step, render it (here: hand the view to an answer provider),
 * submit exactly once, and on a stale-step rejection resynchronize silently
 * via the next-step endpoint instead of surfacing an error. Network-level
 * failures are retried; the service deduplicates resubmitted steps, so a
 * retry after an ambiguous failure cannot double-score.
 */

import { ApiError, SubmitRejected } from "./api";
import { ConditionPlayer } from "./audio";
import { Ack, NextResponse, SessionStatus } from "./schemas";
import { buildStepView, StepAnswer, StepView, wirePayload } from "./steps";

export interface StepTransport {
  next(): Promise<NextResponse>;
  submit(stepId: number, payload: Record<string, unknown>): Promise<Ack>;
}

export type AnswerProvider = (view: StepView) => Promise<StepAnswer> | StepAnswer;

export interface RunnerOptions {
  player?: ConditionPlayer;
  maxSteps?: number;
  retryAttempts?: number;
  retryDelayMs?: number;
  sleep?: (ms: number) => Promise<void>;
  onStep?: (view: StepView) => void;
  onAck?: (ack: Ack) => void;
}

export type SubmitOutcome = { kind: "ack"; ack: Ack } | { kind: "stale" };

export interface RunResult {
  status: SessionStatus;
  stepsAnswered: number;
  acks: Ack[];
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export class SessionRunner {
  private readonly inFlight = new Map<number, Promise<SubmitOutcome>>();

  constructor(
    private readonly transport: StepTransport,
    private readonly opts: RunnerOptions = {},
  ) {}

  /** Drive the session until the service reports no pending step. */
  async run(provider: AnswerProvider): Promise<RunResult> {
    const maxSteps = this.opts.maxSteps ?? 5000;
    const acks: Ack[] = [];
    for (let i = 0; i < maxSteps; i++) {
      const current = await this.withRetry(() => this.transport.next());
      if (current.step === null) {
        this.opts.player?.stop();
        return { status: current.status, stepsAnswered: acks.length, acks };
      }
      const view = buildStepView(current.step);
      this.opts.onStep?.(view);
      if (this.opts.player) {
        const ref =
          current.step.kind === "recall-trial" ? (current.step.stimulus ?? null) : null;
        await this.opts.player.syncTo(ref);
      }
      const answer = await provider(view);
      const outcome = await this.submitAnswer(view, answer);
      if (outcome.kind === "ack") {
        acks.push(outcome.ack);
        this.opts.onAck?.(outcome.ack);
      }
      // a stale outcome just loops back to next() for the real current step
    }
    throw new Error(`session did not finish within ${maxSteps} steps`);
  }

  /**
   * Submit one answered step. Concurrent duplicate submissions of the same
   * step share a single request; a stale-step conflict is reported as an
   * outcome rather than thrown, so the caller can resync.
   */
  submitAnswer(view: StepView, answer: StepAnswer): Promise<SubmitOutcome> {
    const existing = this.inFlight.get(view.stepId);
    if (existing !== undefined) return existing;
    const task = this.doSubmit(view, answer).finally(() => {
      this.inFlight.delete(view.stepId);
    });
    this.inFlight.set(view.stepId, task);
    return task;
  }

  private async doSubmit(view: StepView, answer: StepAnswer): Promise<SubmitOutcome> {
    const payload = wirePayload(view, answer); // throws on incomplete answers
    try {
      const ack = await this.withRetry(() => this.transport.submit(view.stepId, payload));
      return { kind: "ack", ack };
    } catch (err) {
      if (err instanceof SubmitRejected && err.kind === "conflict") {
        return { kind: "stale" };
      }
      throw err;
    }
  }

  /** Retry transport failures; protocol errors (ApiError) pass through. */
  private async withRetry<T>(fn: () => Promise<T>): Promise<T> {
    const attempts = Math.max(1, this.opts.retryAttempts ?? 3);
    const delayMs = this.opts.retryDelayMs ?? 250;
    const sleep = this.opts.sleep ?? defaultSleep;
    let lastErr: unknown;
    for (let attempt = 0; attempt < attempts; attempt++) {
      try {
        return await fn();
      } catch (err) {
        if (err instanceof ApiError) throw err;
        lastErr = err;
        if (attempt < attempts - 1) await sleep(delayMs * (attempt + 1));
      }
    }
    throw lastErr;
  }
}
