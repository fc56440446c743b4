/**
 * Wire schemas for the session service.
 *
 * Every payload the service can send is parsed through zod before any other
 * code touches it, so a contract drift fails loudly at the boundary instead
 * of surfacing as an undefined somewhere in a view. Field names stay in the
 * service's snake_case; view models translate where it helps.
 */

import { z } from "zod";

/** Protocol revision this client speaks. */
export const CLIENT_SCHEMA_VERSION = 1;

export const healthSchema = z.object({
  ok: z.boolean(),
  conditions: z.array(z.string()),
  schema_version: z.number().int(),
});
export type Health = z.infer<typeof healthSchema>;

export const sessionCreatedSchema = z.object({
  session_id: z.string().min(1),
  token: z.string().min(1),
  status: z.string(),
  schema_version: z.number().int(),
});
export type SessionCreated = z.infer<typeof sessionCreatedSchema>;

export const sessionStatusSchema = z.enum([
  "created",
  "preliminary",
  "main",
  "complete",
  "aborted",
]);
export type SessionStatus = z.infer<typeof sessionStatusSchema>;

// ---------------------------------------------------------------------------
// step descriptors

const restPayloadSchema = z.object({
  purpose: z.enum(["setup", "break"]),
  volume_check: z.boolean().optional(),
  instructions: z.string(),
  next_condition: z.string().optional(),
});

const spanPayloadSchema = z.object({
  index: z.number().int().nonnegative(),
  length: z.number().int().min(2),
  words: z.array(z.string().min(1)).min(2),
  word_seconds: z.number().positive(),
  blank_seconds: z.number().nonnegative(),
});

const stroopPayloadSchema = z.object({
  index: z.number().int().nonnegative(),
  n_trials: z.number().int().positive(),
  word: z.string().min(1),
  ink: z.string().min(1),
  choices: z.array(z.string().min(1)).min(2),
});

export const instrumentItemSchema = z.object({
  key: z.string().min(1),
  prompt: z.string().min(1),
  min: z.number(),
  max: z.number(),
});
export type InstrumentItem = z.infer<typeof instrumentItemSchema>;

export const instrumentDefinitionSchema = z.object({
  id: z.string().min(1),
  title: z.string(),
  items: z.array(instrumentItemSchema).min(1),
  subscales: z.array(
    z.object({
      name: z.string().min(1),
      items: z.array(z.string()),
      aggregation: z.enum(["sum", "mean"]),
      reverse: z.array(z.string()),
    }),
  ),
});
export type InstrumentDefinition = z.infer<typeof instrumentDefinitionSchema>;

const instrumentPayloadSchema = z.object({
  instrument: instrumentDefinitionSchema,
  context: z.string().min(1),
});

const recallPayloadSchema = z.object({
  condition: z.string().min(1),
  index: z.number().int().nonnegative(),
  n_trials: z.number().int().positive(),
  words: z.array(z.string().min(1)).min(1),
  word_seconds: z.number().positive(),
  blank_seconds: z.number().nonnegative(),
  recall_window_seconds: z.number().positive(),
});

export const stimulusRefSchema = z.object({
  condition: z.string().min(1),
  offset_seconds: z.number().nonnegative(),
});
export type StimulusRef = z.infer<typeof stimulusRefSchema>;

const stepBase = {
  step_id: z.number().int().nonnegative(),
  schema_version: z.number().int(),
  stimulus: stimulusRefSchema.optional(),
};

export const stepSchema = z.discriminatedUnion("kind", [
  z.object({ ...stepBase, kind: z.literal("rest"), payload: restPayloadSchema }),
  z.object({ ...stepBase, kind: z.literal("span-trial"), payload: spanPayloadSchema }),
  z.object({ ...stepBase, kind: z.literal("stroop-trial"), payload: stroopPayloadSchema }),
  z.object({ ...stepBase, kind: z.literal("instrument"), payload: instrumentPayloadSchema }),
  z.object({ ...stepBase, kind: z.literal("recall-trial"), payload: recallPayloadSchema }),
]);
export type Step = z.infer<typeof stepSchema>;
export type StepKind = Step["kind"];

export const nextResponseSchema = z.object({
  status: sessionStatusSchema,
  step: stepSchema.nullable(),
  schema_version: z.number().int(),
});
export type NextResponse = z.infer<typeof nextResponseSchema>;

/**
 * Acknowledgments are parsed strictly: the service promises acks carry no
 * scoring information, so an unexpected extra field is a contract violation
 * and must fail parsing rather than ride along silently.
 */
export const ackSchema = z
  .object({
    step_id: z.number().int().nonnegative(),
    accepted: z.literal(true),
    status: sessionStatusSchema,
    schema_version: z.number().int(),
  })
  .strict();
export type Ack = z.infer<typeof ackSchema>;

// ---------------------------------------------------------------------------
// export bundle

export const exportBundleSchema = z.object({
  schema_version: z.number().int(),
  session_id: z.string().min(1),
  participant: z.record(z.unknown()),
  seed: z.number().int(),
  status: z.enum(["complete", "aborted"]),
  partial: z.boolean(),
  abort_reason: z.string().nullable(),
  volume_check: z.record(z.unknown()).nullable(),
  span: z.object({
    span: z.number().int().nullable(),
    outcomes: z.array(z.tuple([z.number().int(), z.boolean()])),
  }),
  stroop: z.object({
    trials: z.array(z.record(z.unknown())),
    interference_ms: z.number().nullable(),
    n_correct: z.number().int(),
  }),
  instruments: z.array(z.record(z.unknown())),
  recall: z.array(z.record(z.unknown())),
  performance: z.object({
    by_condition: z.record(z.number()),
    by_condition_load: z.record(z.record(z.number())),
  }),
  condition_order: z.array(z.string()).nullable(),
  stimuli: z.record(z.unknown()),
  audit: z.array(z.tuple([z.number(), z.number()])),
});
export type ExportBundle = z.infer<typeof exportBundleSchema>;

// ---------------------------------------------------------------------------
// leak scanning

/**
 * Keys that would indicate scoring material reaching the client. Applied to
 * step descriptors and acks (never to the post-session export, which by
 * design contains the participant's own results).
 */
export const FORBIDDEN_PAYLOAD_KEYS = [
  "score",
  "correct",
  "n_correct",
  "per_position",
  "expected",
  "answer_key",
  "interference_ms",
] as const;

/** Walk a decoded JSON value and report paths whose key suggests scoring. */
export function scoringLeaks(value: unknown, path = "$"): string[] {
  if (Array.isArray(value)) {
    return value.flatMap((v, i) => scoringLeaks(v, `${path}[${i}]`));
  }
  if (value !== null && typeof value === "object") {
    const hits: string[] = [];
    for (const [key, v] of Object.entries(value as Record<string, unknown>)) {
      const where = `${path}.${key}`;
      if (FORBIDDEN_PAYLOAD_KEYS.some((bad) => key === bad || key.includes(bad))) {
        hits.push(where);
      }
      hits.push(...scoringLeaks(v, where));
    }
    return hits;
  }
  return [];
}
