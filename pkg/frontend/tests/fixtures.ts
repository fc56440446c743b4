/** Golden payloads mirroring what the service sends over the wire. */

export const restSetupStep = {
  step_id: 0,
  kind: "rest",
  schema_version: 1,
  payload: {
    purpose: "setup",
    volume_check: true,
    instructions:
      "Adjust your playback volume with the reference sound until it is " +
      "clearly audible and comfortable, then confirm.",
  },
};

export const restBreakStep = {
  step_id: 14,
  kind: "rest",
  schema_version: 1,
  payload: {
    purpose: "break",
    next_condition: "sti-0.45",
    instructions: "Take a short break. Continue when ready.",
  },
};

export const spanStep = {
  step_id: 1,
  kind: "span-trial",
  schema_version: 1,
  payload: {
    index: 0,
    length: 2,
    words: ["anchor", "marble"],
    word_seconds: 1.0,
    blank_seconds: 0.5,
  },
};

export const stroopStep = {
  step_id: 7,
  kind: "stroop-trial",
  schema_version: 1,
  payload: {
    index: 0,
    n_trials: 8,
    word: "red",
    ink: "blue",
    choices: ["red", "blue", "green", "yellow"],
  },
};

export const instrumentStep = {
  step_id: 12,
  kind: "instrument",
  schema_version: 1,
  payload: {
    context: "preliminary",
    instrument: {
      id: "rtlx",
      title: "Raw Task Load Index",
      items: [
        { key: "mental_demand", prompt: "How mentally demanding was the task?", min: 0, max: 100 },
        { key: "effort", prompt: "How hard did you have to work?", min: 0, max: 100 },
      ],
      subscales: [
        {
          name: "workload",
          items: ["mental_demand", "effort"],
          aggregation: "mean",
          reverse: [],
        },
      ],
    },
  },
};

export const recallStep = {
  step_id: 15,
  kind: "recall-trial",
  schema_version: 1,
  payload: {
    condition: "sti-0.45",
    index: 2,
    n_trials: 4,
    words: ["anchor", "marble", "casket", "velvet"],
    word_seconds: 1.0,
    blank_seconds: 0.5,
    recall_window_seconds: 20.0,
  },
  stimulus: { condition: "sti-0.45", offset_seconds: 33.0 },
};

export const ackFixture = {
  step_id: 15,
  accepted: true,
  status: "main",
  schema_version: 1,
};

export const exportBundleFixture = {
  schema_version: 1,
  session_id: "abc123def456",
  participant: { id: "p1", consent: true, age: 30 },
  seed: 5,
  status: "complete",
  partial: false,
  abort_reason: null,
  volume_check: { passed: true, attempts: 1 },
  span: { span: 3, outcomes: [[2, true], [2, true], [3, true], [3, true], [4, false], [4, false]] },
  stroop: { trials: [], interference_ms: 80.0, n_correct: 8 },
  instruments: [],
  recall: [],
  performance: {
    by_condition: {
      silence: 0.9,
      "sti-0.25": 0.85,
      "sti-0.45": 0.8,
      "sti-0.75": 0.78,
      "sti-0.9": 0.79,
    },
    by_condition_load: {
      silence: { high: 0.85, low: 0.95 },
    },
  },
  condition_order: ["sti-0.45", "silence", "sti-0.9", "sti-0.25", "sti-0.75"],
  stimuli: { silence: { wav: "silence.wav" } },
  audit: [[0, 1.0], [1, 2.0]],
};
