import { describe, expect, it } from "vitest";

import {
  ackSchema,
  exportBundleSchema,
  healthSchema,
  nextResponseSchema,
  scoringLeaks,
  stepSchema,
} from "../src/schemas";
import {
  ackFixture,
  exportBundleFixture,
  instrumentStep,
  recallStep,
  restBreakStep,
  restSetupStep,
  spanStep,
  stroopStep,
} from "./fixtures";

describe("step schema", () => {
  const steps = [restSetupStep, restBreakStep, spanStep, stroopStep, instrumentStep, recallStep];

  it.each(steps.map((s) => [s.kind, s] as const))("parses a %s descriptor", (_kind, raw) => {
    const step = stepSchema.parse(raw);
    expect(step.step_id).toBe(raw.step_id);
    expect(step.schema_version).toBe(1);
  });

  it("keeps the stimulus reference on recall steps", () => {
    const step = stepSchema.parse(recallStep);
    if (step.kind !== "recall-trial") throw new Error("wrong kind");
    expect(step.stimulus).toEqual({ condition: "sti-0.45", offset_seconds: 33.0 });
  });

  it("rejects an unknown kind", () => {
    expect(() => stepSchema.parse({ ...spanStep, kind: "quiz" })).toThrow();
  });

  it("rejects a span payload with a malformed word list", () => {
    const bad = {
      ...spanStep,
      payload: { ...spanStep.payload, words: ["anchor", 7] },
    };
    expect(() => stepSchema.parse(bad)).toThrow();
  });
});

describe("next response schema", () => {
  it("parses a pending step", () => {
    const resp = nextResponseSchema.parse({
      status: "preliminary",
      step: spanStep,
      schema_version: 1,
    });
    expect(resp.step?.kind).toBe("span-trial");
  });

  it("parses a finished session (step null)", () => {
    const resp = nextResponseSchema.parse({
      status: "complete",
      step: null,
      schema_version: 1,
    });
    expect(resp.step).toBeNull();
  });

  it("rejects an unknown status", () => {
    expect(() =>
      nextResponseSchema.parse({ status: "paused", step: null, schema_version: 1 }),
    ).toThrow();
  });
});

describe("ack schema", () => {
  it("parses the documented four fields", () => {
    expect(ackSchema.parse(ackFixture)).toEqual(ackFixture);
  });

  it("rejects any extra field, which could be smuggled scoring data", () => {
    expect(() => ackSchema.parse({ ...ackFixture, score: 1.0 })).toThrow();
    expect(() => ackSchema.parse({ ...ackFixture, correct: true })).toThrow();
    expect(() => ackSchema.parse({ ...ackFixture, hint: "x" })).toThrow();
  });

  it("rejects a refused ack (accepted must be true)", () => {
    expect(() => ackSchema.parse({ ...ackFixture, accepted: false })).toThrow();
  });
});

describe("health and export schemas", () => {
  it("parses a health body", () => {
    const h = healthSchema.parse({ ok: true, conditions: ["silence"], schema_version: 1 });
    expect(h.ok).toBe(true);
  });

  it("parses an export bundle", () => {
    const bundle = exportBundleSchema.parse(exportBundleFixture);
    expect(bundle.status).toBe("complete");
    expect(Object.keys(bundle.performance.by_condition)).toHaveLength(5);
  });
});

describe("scoring leak scan", () => {
  it("is quiet on every step descriptor the service defines", () => {
    for (const step of [restSetupStep, spanStep, stroopStep, instrumentStep, recallStep]) {
      expect(scoringLeaks(step)).toEqual([]);
    }
    expect(scoringLeaks(ackFixture)).toEqual([]);
  });

  it("flags planted scoring keys anywhere in the tree", () => {
    const planted = {
      ...spanStep,
      payload: { ...spanStep.payload, extra: { per_position: [1, 0] } },
    };
    const hits = scoringLeaks(planted);
    expect(hits).toHaveLength(1);
    expect(hits[0]).toContain("per_position");

    expect(scoringLeaks({ nested: [{ score: 3 }] })).toEqual(["$.nested[0].score"]);
  });
});
