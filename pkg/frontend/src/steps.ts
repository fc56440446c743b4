/**
 * View models for the session steps.
 *
 * A view model is everything a rendering layer needs to draw one step and
 * nothing else: presentation schedules for timed word lists, form ranges for
 * questionnaires, the ink/word pair for a color-naming trial. Answers are
 * validated for completeness before they may be turned into wire payloads,
 * which keeps the submit button honest.
 */

import { InstrumentItem, Step, StimulusRef } from "./schemas";

export interface WordPresentation {
  word: string;
  onsetSeconds: number;
  blankAfterSeconds: number;
}

/** Timed one-word-at-a-time schedule: word, blank, word, blank, ... */
export function presentationSchedule(
  words: readonly string[],
  wordSeconds: number,
  blankSeconds: number,
): WordPresentation[] {
  const slot = wordSeconds + blankSeconds;
  return words.map((word, i) => ({
    word,
    onsetSeconds: i * slot,
    blankAfterSeconds: blankSeconds,
  }));
}

// ---------------------------------------------------------------------------
// view models

export interface RestView {
  kind: "rest";
  stepId: number;
  purpose: "setup" | "break";
  volumeCheck: boolean;
  instructions: string;
  nextCondition: string | null;
}

export interface SpanView {
  kind: "span-trial";
  stepId: number;
  index: number;
  length: number;
  words: string[];
  schedule: WordPresentation[];
  entrySlots: number;
}

export interface StroopView {
  kind: "stroop-trial";
  stepId: number;
  index: number;
  nTrials: number;
  word: string;
  ink: string;
  choices: string[];
}

export interface InstrumentView {
  kind: "instrument";
  stepId: number;
  instrumentId: string;
  title: string;
  context: string;
  items: InstrumentItem[];
}

export interface RecallView {
  kind: "recall-trial";
  stepId: number;
  condition: string;
  index: number;
  nTrials: number;
  words: string[];
  schedule: WordPresentation[];
  entrySlots: number;
  recallWindowSeconds: number;
  stimulus: StimulusRef | null;
}

export type StepView = RestView | SpanView | StroopView | InstrumentView | RecallView;

export function buildStepView(step: Step): StepView {
  switch (step.kind) {
    case "rest":
      return {
        kind: "rest",
        stepId: step.step_id,
        purpose: step.payload.purpose,
        volumeCheck: step.payload.volume_check ?? false,
        instructions: step.payload.instructions,
        nextCondition: step.payload.next_condition ?? null,
      };
    case "span-trial":
      return {
        kind: "span-trial",
        stepId: step.step_id,
        index: step.payload.index,
        length: step.payload.length,
        words: [...step.payload.words],
        schedule: presentationSchedule(
          step.payload.words,
          step.payload.word_seconds,
          step.payload.blank_seconds,
        ),
        entrySlots: step.payload.length,
      };
    case "stroop-trial":
      return {
        kind: "stroop-trial",
        stepId: step.step_id,
        index: step.payload.index,
        nTrials: step.payload.n_trials,
        word: step.payload.word,
        ink: step.payload.ink,
        choices: [...step.payload.choices],
      };
    case "instrument":
      return {
        kind: "instrument",
        stepId: step.step_id,
        instrumentId: step.payload.instrument.id,
        title: step.payload.instrument.title,
        context: step.payload.context,
        items: step.payload.instrument.items.map((i) => ({ ...i })),
      };
    case "recall-trial":
      return {
        kind: "recall-trial",
        stepId: step.step_id,
        condition: step.payload.condition,
        index: step.payload.index,
        nTrials: step.payload.n_trials,
        words: [...step.payload.words],
        schedule: presentationSchedule(
          step.payload.words,
          step.payload.word_seconds,
          step.payload.blank_seconds,
        ),
        entrySlots: step.payload.words.length,
        recallWindowSeconds: step.payload.recall_window_seconds,
        stimulus: step.stimulus ?? null,
      };
  }
}

// ---------------------------------------------------------------------------
// answers

export type StepAnswer =
  | { kind: "rest"; volumeCheckPassed?: boolean; attempts?: number }
  | { kind: "span-trial"; recalled: string[] }
  | { kind: "stroop-trial"; response: string; rtMs: number }
  | { kind: "instrument"; values: Record<string, number> }
  | { kind: "recall-trial"; recalled: string[] };

/**
 * Completeness check gating the submit action. Returns a list of problems;
 * an empty list means the answer may be submitted. Entry order in recalled
 * lists is preserved exactly as given; an empty recalled list is a valid
 * "gave up" answer, not an incomplete one.
 */
export function answerProblems(view: StepView, answer: StepAnswer): string[] {
  if (view.kind !== answer.kind) {
    return [`answer kind ${answer.kind} does not match step kind ${view.kind}`];
  }
  const problems: string[] = [];
  switch (answer.kind) {
    case "rest": {
      const v = view as RestView;
      if (v.volumeCheck && answer.volumeCheckPassed !== true) {
        problems.push("volume check not confirmed");
      }
      break;
    }
    case "span-trial":
    case "recall-trial": {
      if (answer.recalled.some((w) => w.trim() === "")) {
        problems.push("recalled entries must not be blank");
      }
      break;
    }
    case "stroop-trial": {
      const v = view as StroopView;
      if (!v.choices.includes(answer.response)) {
        problems.push(`response ${JSON.stringify(answer.response)} is not a choice`);
      }
      if (!(answer.rtMs > 0)) problems.push("reaction time missing");
      break;
    }
    case "instrument": {
      const v = view as InstrumentView;
      for (const item of v.items) {
        const value = answer.values[item.key];
        if (value === undefined) {
          problems.push(`item ${item.key} unanswered`);
        } else if (!(value >= item.min && value <= item.max)) {
          problems.push(`item ${item.key} out of range [${item.min}, ${item.max}]`);
        }
      }
      break;
    }
  }
  return problems;
}

/** Translate a complete answer into the service's wire payload. */
export function wirePayload(view: StepView, answer: StepAnswer): Record<string, unknown> {
  const problems = answerProblems(view, answer);
  if (problems.length > 0) {
    throw new Error(`incomplete answer: ${problems.join("; ")}`);
  }
  switch (answer.kind) {
    case "rest": {
      const v = view as RestView;
      if (!v.volumeCheck) return {};
      return {
        volume_check_passed: answer.volumeCheckPassed === true,
        attempts: answer.attempts ?? 1,
      };
    }
    case "span-trial":
    case "recall-trial":
      return { recalled: [...answer.recalled] };
    case "stroop-trial":
      return { response: answer.response, rt_ms: answer.rtMs };
    case "instrument":
      return { values: { ...answer.values } };
  }
}
