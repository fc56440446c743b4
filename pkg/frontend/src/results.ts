/**
 * Result-summary helpers for the post-session screen.
 *
 * These only rearrange numbers the service computed; the client never
 * scores anything itself.
 */

import { ExportBundle } from "./schemas";

export interface PerformanceTable {
  conditions: string[];
  proportionCorrect: number[];
}

/** Per-condition proportion correct, in the order the session ran them. */
export function performanceTable(bundle: ExportBundle): PerformanceTable {
  const order = bundle.condition_order ?? Object.keys(bundle.performance.by_condition).sort();
  const conditions = order.filter((c) => c in bundle.performance.by_condition);
  return {
    conditions,
    proportionCorrect: conditions.map((c) => bundle.performance.by_condition[c]),
  };
}

export interface DpTable {
  control: string;
  conditions: string[];
  dpPercent: number[];
}

/**
 * Decrease in performance relative to the control condition, in percentage
 * points: positive values mean the sound condition hurt recall.
 */
export function dpTable(bundle: ExportBundle, control = "silence"): DpTable {
  const perf = bundle.performance.by_condition;
  if (!(control in perf)) {
    throw new Error(`control condition ${JSON.stringify(control)} not in results`);
  }
  const base = perf[control];
  const conditions = (bundle.condition_order ?? Object.keys(perf).sort()).filter(
    (c) => c !== control && c in perf,
  );
  return {
    control,
    conditions,
    dpPercent: conditions.map((c) => (base - perf[c]) * 100.0),
  };
}
