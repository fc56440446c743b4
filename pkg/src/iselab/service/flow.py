"""Session state as a pure fold over an append-only event list.

A session's entire lifecycle is: one "created" event, a sequence of
"step_submitted" events, optionally one "aborted" event. Every derived
quantity (span, plan, scores, status) is recomputed from the events, so
replaying a persisted log reconstructs the exact record; server-assigned
timestamps ride inside the events and are never regenerated.

Step sequence: a setup rest step with the volume check, span trials until
the stop rule fires, a Stroop block, the locus-of-control questionnaire, an
activation checklist at the start of the main phase, then per condition an
optional rest, the recall trials, and the three post-condition
questionnaires. Step ids are consecutive integers; exactly one submission
advances the cursor by one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from iselab.analysis import PerformanceMatrix, Subject
from iselab.protocol import (
    DEFAULT_CONDITION_STIS,
    MIN_SPAN,
    InstrumentDefinition,
    SessionPlan,
    SpanState,
    advance_span,
    build_session_plan,
    make_stroop_block,
    score_instrument,
    score_trial,
    stroop_interference,
)

SCHEMA_VERSION = 1

DEFAULT_CONFIG = {
    "condition_stis": list(DEFAULT_CONDITION_STIS),
    "trials_per_condition": 16,
    "stroop_trials": 24,
    "word_seconds": 1.0,
    "blank_seconds": 0.5,
    "recall_window_seconds": 20.0,
    "rest_between_conditions": True,
    "latin_square": False,
    "latin_row": None,
    "preliminary_instrument": "levenson_loc",
    "instrument_at_start": "thayer_adacl",
    "instruments_after_condition": ["rtlx", "annoyance", "thayer_adacl"],
}


class StepRejected(Exception):
    """Submission refused without any state change."""

    def __init__(self, reason: str, kind: str = "invalid"):
        super().__init__(reason)
        self.kind = kind  # "out-of-order" | "invalid" | "finished"


@dataclass
class SessionRecord:
    """Mutable accumulator produced by folding a session's events."""

    session_id: str
    token: str
    participant: dict
    seed: int
    config: dict
    stimuli: dict                    # label -> {"wav": name, "sha256": ...}
    created_at: float
    status: str = "created"
    cursor: int = 0
    span_state: SpanState = field(default_factory=SpanState)
    plan: SessionPlan | None = None
    volume_check: dict | None = None
    stroop_results: list = field(default_factory=list)
    instrument_results: list = field(default_factory=list)
    recall_results: list = field(default_factory=list)
    audit: list = field(default_factory=list)
    last_ack: dict | None = None
    abort_reason: str | None = None
    n_events: int = 0

    # ---- deterministic derived material ------------------------------------

    def word_pool(self) -> tuple:
        return tuple(self.config["word_pool"])

    def span_words(self, index: int, length: int) -> tuple:
        rng = np.random.default_rng([self.seed, 101, index])
        pool = self.word_pool()
        picks = rng.choice(len(pool), size=length, replace=False)
        return tuple(pool[i] for i in picks)

    def stroop_block(self) -> tuple:
        return make_stroop_block(self.config["stroop_trials"], [self.seed, 202])

    # ---- step layout --------------------------------------------------------

    def _span_n(self) -> int:
        return len(self.span_state.outcomes)

    def _layout(self) -> dict:
        """Step-index bases; valid once the span phase has finished."""
        stroop_base = 1 + self._span_n()
        preliminary_at = stroop_base + self.config["stroop_trials"]
        start_instrument_at = preliminary_at + 1
        main_base = start_instrument_at + 1
        rest = 1 if self.config["rest_between_conditions"] else 0
        block = (rest + self.config["trials_per_condition"]
                 + len(self.config["instruments_after_condition"]))
        return {
            "stroop_base": stroop_base,
            "preliminary_at": preliminary_at,
            "start_instrument_at": start_instrument_at,
            "main_base": main_base,
            "rest": rest,
            "block": block,
        }

    def trial_offset_seconds(self, condition_index: int, trial_index: int) -> float:
        """Playback position of a recall trial inside its condition signal."""
        per_word = self.config["word_seconds"] + self.config["blank_seconds"]
        window = self.config["recall_window_seconds"]
        trials = self.plan.conditions[condition_index].trials
        return float(sum(len(trials[u].words) * per_word + window
                         for u in range(trial_index)))

    def current_condition_label(self) -> str | None:
        """Condition whose audio the client may stream right now."""
        if self.status != "main" or self.plan is None:
            return None
        lay = self._layout()
        b = (self.cursor - lay["main_base"]) // lay["block"]
        if 0 <= b < len(self.plan.conditions):
            return self.plan.conditions[b].label
        return None

    # ---- descriptor ----------------------------------------------------------

    def current_step(self) -> dict | None:
        """Descriptor of the step awaiting submission; None when finished.

        Pure and idempotent: repeated calls return equal dicts. Acks and
        descriptors never carry scores or correctness flags.
        """
        if self.status in ("complete", "aborted"):
            return None
        i = self.cursor
        if i == 0:
            return self._descriptor(i, "rest", {
                "purpose": "setup",
                "volume_check": True,
                "instructions": ("Adjust your playback volume with the reference "
                                 "sound until it is clearly audible and "
                                 "comfortable, then confirm."),
            })
        if not self.span_state.finished:
            index = self._span_n()
            length = self.span_state.current_length
            return self._descriptor(i, "span-trial", {
                "index": index,
                "length": length,
                "words": list(self.span_words(index, length)),
                "word_seconds": self.config["word_seconds"],
                "blank_seconds": self.config["blank_seconds"],
            })
        lay = self._layout()
        if i < lay["preliminary_at"]:
            t = i - lay["stroop_base"]
            trial = self.stroop_block()[t]
            return self._descriptor(i, "stroop-trial", {
                "index": t,
                "n_trials": self.config["stroop_trials"],
                "word": trial.word,
                "ink": trial.ink,
                "choices": list(dict.fromkeys(
                    tr.ink for tr in self.stroop_block())),
            })
        if i == lay["preliminary_at"]:
            return self._instrument_descriptor(
                i, self.config["preliminary_instrument"], "preliminary")
        if i == lay["start_instrument_at"]:
            return self._instrument_descriptor(
                i, self.config["instrument_at_start"], "start")
        b, o = divmod(i - lay["main_base"], lay["block"])
        cond = self.plan.conditions[b]
        if lay["rest"] and o == 0:
            return self._descriptor(i, "rest", {
                "purpose": "break",
                "next_condition": cond.label,
                "instructions": "Take a short break. Continue when ready.",
            })
        t = o - lay["rest"]
        n_trials = self.config["trials_per_condition"]
        if t < n_trials:
            trial = cond.trials[t]
            d = self._descriptor(i, "recall-trial", {
                "condition": cond.label,
                "index": t,
                "n_trials": n_trials,
                "words": list(trial.words),
                "word_seconds": self.config["word_seconds"],
                "blank_seconds": self.config["blank_seconds"],
                "recall_window_seconds": self.config["recall_window_seconds"],
            })
            d["stimulus"] = {
                "condition": cond.label,
                "offset_seconds": self.trial_offset_seconds(b, t),
            }
            return d
        name = self.config["instruments_after_condition"][t - n_trials]
        return self._instrument_descriptor(i, name, cond.label)

    def _descriptor(self, step_id: int, kind: str, payload: dict) -> dict:
        return {"step_id": step_id, "kind": kind, "payload": payload,
                "schema_version": SCHEMA_VERSION}

    def _instrument_descriptor(self, step_id: int, instrument_id: str,
                               context: str) -> dict:
        definition = InstrumentDefinition.load(instrument_id)
        return self._descriptor(step_id, "instrument", {
            "instrument": definition.to_dict(),
            "context": context,
        })

    # ---- submission ----------------------------------------------------------

    def submit(self, step_id: int, payload, at: float) -> dict:
        """Validate and apply one submission; raises StepRejected on refusal.

        Resubmitting the most recently acknowledged step returns the stored
        acknowledgment unchanged (exactly-once scoring).
        """
        if not isinstance(payload, dict):
            raise StepRejected("payload must be an object")
        if self.last_ack is not None and step_id == self.last_ack["step_id"]:
            return dict(self.last_ack)
        if self.status in ("complete", "aborted"):
            raise StepRejected("session is finished", kind="finished")
        if step_id != self.cursor:
            raise StepRejected(
                f"out-of-order step: expected {self.cursor}, got {step_id}",
                kind="out-of-order")

        step = self.current_step()
        handler = {
            "rest": self._apply_rest,
            "span-trial": self._apply_span,
            "stroop-trial": self._apply_stroop,
            "instrument": self._apply_instrument,
            "recall-trial": self._apply_recall,
        }[step["kind"]]
        handler(step, payload)

        self.cursor += 1
        self.audit.append([step_id, at])
        self._advance_status()
        ack = {"step_id": step_id, "accepted": True, "status": self.status,
               "schema_version": SCHEMA_VERSION}
        self.last_ack = ack
        return dict(ack)

    def _advance_status(self) -> None:
        if self.status == "aborted":
            return
        if self.cursor >= 1 and self.status == "created":
            self.status = "preliminary"
        if self.span_state.finished and self.plan is not None:
            lay = self._layout()
            if self.cursor > lay["start_instrument_at"]:
                self.status = "main"
            if self.cursor >= lay["main_base"] + lay["block"] * len(
                    self.plan.conditions):
                self.status = "complete"

    def _apply_rest(self, step: dict, payload: dict) -> None:
        if step["payload"].get("purpose") == "setup":
            passed = payload.get("volume_check_passed")
            if passed is not True:
                raise StepRejected("volume check must pass before continuing")
            attempts = payload.get("attempts", 1)
            if not isinstance(attempts, int) or attempts < 1:
                raise StepRejected("attempts must be a positive integer")
            self.volume_check = {"passed": True, "attempts": attempts,
                                 "device": payload.get("device")}

    def _apply_span(self, step: dict, payload: dict) -> None:
        recalled = _word_list(payload, "recalled")
        presented = step["payload"]["words"]
        result = score_trial(presented, recalled)
        self.span_state = advance_span(self.span_state, result.all_correct)
        if self.span_state.finished:
            if self.span_state.span == MIN_SPAN:
                self.status = "aborted"
                self.abort_reason = "no measurable span; main phase requires span >= 2"
            else:
                self.plan = build_session_plan(
                    self.participant["id"], self.span_state.span,
                    self.word_pool(), self.seed,
                    condition_stis=tuple(self.config["condition_stis"]),
                    trials_per_condition=self.config["trials_per_condition"],
                    latin_square=self.config["latin_square"],
                    latin_row=self.config["latin_row"])

    def _apply_stroop(self, step: dict, payload: dict) -> None:
        response = payload.get("response")
        rt = payload.get("rt_ms")
        if not isinstance(response, str):
            raise StepRejected("stroop response must be a color name")
        if not isinstance(rt, (int, float)) or not math.isfinite(rt) or rt <= 0:
            raise StepRejected("rt_ms must be a positive number")
        self.stroop_results.append({
            "index": step["payload"]["index"],
            "word": step["payload"]["word"],
            "ink": step["payload"]["ink"],
            "response": response,
            "rt_ms": float(rt),
            "correct": response == step["payload"]["ink"],
            "rt_source": "client",
        })

    def _apply_instrument(self, step: dict, payload: dict) -> None:
        values = payload.get("values")
        if not isinstance(values, dict):
            raise StepRejected("instrument payload needs a values object")
        definition = InstrumentDefinition.from_dict(step["payload"]["instrument"])
        try:
            scores = score_instrument(definition, values)
        except ValueError as exc:
            raise StepRejected(str(exc))
        self.instrument_results.append({
            "instrument": definition.id,
            "context": step["payload"]["context"],
            "values": {k: float(v) for k, v in values.items()},
            "scores": scores,
        })

    def _apply_recall(self, step: dict, payload: dict) -> None:
        recalled = _word_list(payload, "recalled")
        presented = step["payload"]["words"]
        result = score_trial(presented, recalled)
        self.recall_results.append({
            "condition": step["payload"]["condition"],
            "index": step["payload"]["index"],
            "load": self._trial_load(step["payload"]["condition"],
                                     step["payload"]["index"]),
            "presented": list(presented),
            "recalled": list(recalled),
            "per_position_correct": list(result.per_position_correct),
            "score": result.score,
        })

    def _trial_load(self, label: str, index: int) -> str:
        for cond in self.plan.conditions:
            if cond.label == label:
                return cond.trials[index].load
        raise KeyError(label)

    # ---- export ---------------------------------------------------------------

    def performance_by_condition(self) -> dict:
        by = {}
        for row in self.recall_results:
            by.setdefault(row["condition"], []).append(row["score"])
        return {label: sum(v) / len(v) for label, v in sorted(by.items())}

    def export_bundle(self) -> dict:
        """Analysis-ready view of a finished session."""
        if self.status not in ("complete", "aborted"):
            raise StepRejected("session still in progress", kind="finished")
        by_cond = self.performance_by_condition()
        by_load = {}
        for row in self.recall_results:
            by_load.setdefault(row["condition"], {}).setdefault(
                row["load"], []).append(row["score"])
        interference = None
        correct_rts = [r for r in self.stroop_results if r["correct"]]
        try:
            interference = stroop_interference(
                [r["rt_ms"] for r in correct_rts
                 if r["word"] == r["ink"]],
                [r["rt_ms"] for r in correct_rts
                 if r["word"] != r["ink"]])
        except ValueError:
            pass
        return {
            "schema_version": SCHEMA_VERSION,
            "session_id": self.session_id,
            "participant": dict(self.participant),
            "seed": self.seed,
            "status": self.status,
            "partial": self.status == "aborted",
            "abort_reason": self.abort_reason,
            "volume_check": self.volume_check,
            "span": {
                "span": self.span_state.span,
                "outcomes": [[l, bool(ok)] for l, ok in self.span_state.outcomes],
            },
            "stroop": {
                "trials": list(self.stroop_results),
                "interference_ms": interference,
                "n_correct": sum(r["correct"] for r in self.stroop_results),
            },
            "instruments": list(self.instrument_results),
            "recall": list(self.recall_results),
            "performance": {
                "by_condition": by_cond,
                "by_condition_load": {
                    label: {load: sum(v) / len(v) for load, v in sorted(d.items())}
                    for label, d in sorted(by_load.items())},
            },
            "condition_order": ([c.label for c in self.plan.conditions]
                                if self.plan else None),
            "stimuli": dict(self.stimuli),
            "audit": [list(a) for a in self.audit],
        }


def _word_list(payload: dict, key: str) -> list:
    value = payload.get(key)
    if not isinstance(value, list) or not all(isinstance(w, str) for w in value):
        raise StepRejected(f"{key} must be a list of strings")
    return value


# ---------------------------------------------------------------------------
# events


def created_event_payload(session_id: str, token: str, participant: dict,
                          seed: int, stimuli: dict, config: dict) -> dict:
    if not isinstance(participant.get("id"), str) or not participant["id"]:
        raise ValueError("participant needs a non-empty id")
    if participant.get("consent") is not True:
        raise ValueError("participant consent is required")
    labels = set(stimuli)
    sti_labels = {l for l in labels if l.startswith("sti-")}
    if "silence" not in labels or len(sti_labels) != 4 or len(labels) != 5:
        raise ValueError(
            f"expected 5 conditions (silence + 4 STI targets), got {sorted(labels)}")
    return {
        "session_id": session_id,
        "token": token,
        "participant": dict(participant),
        "seed": int(seed),
        "stimuli": dict(stimuli),
        "config": dict(config),
    }


def apply_event(record: SessionRecord | None, event: dict) -> SessionRecord:
    etype = event["type"]
    if etype == "created":
        if record is not None:
            raise ValueError("duplicate created event")
        p = event["payload"]
        rec = SessionRecord(
            session_id=p["session_id"], token=p["token"],
            participant=p["participant"], seed=p["seed"],
            config=p["config"], stimuli=p["stimuli"], created_at=event["at"])
        rec.n_events = 1
        return rec
    if record is None:
        raise ValueError("event log does not start with a created event")
    if etype == "step_submitted":
        record.submit(event["payload"]["step_id"], event["payload"]["payload"],
                      event["at"])
    elif etype == "aborted":
        record.status = "aborted"
        record.abort_reason = event["payload"].get("reason", "aborted")
    else:
        raise ValueError(f"unknown event type {etype!r}")
    record.n_events += 1
    return record


def fold_events(events: Sequence[dict]) -> SessionRecord:
    record = None
    for event in events:
        record = apply_event(record, event)
    if record is None:
        raise ValueError("empty event log")
    return record


def snapshot_dict(record: SessionRecord) -> dict:
    """JSON-safe snapshot; byte-identical serialization is the store's job."""
    return {
        "schema_version": SCHEMA_VERSION,
        "session_id": record.session_id,
        "token": record.token,
        "participant": dict(record.participant),
        "seed": record.seed,
        "created_at": record.created_at,
        "status": record.status,
        "cursor": record.cursor,
        "n_events": record.n_events,
        "config": dict(record.config),
        "stimuli": dict(record.stimuli),
        "volume_check": record.volume_check,
        "span": {
            "current_length": record.span_state.current_length,
            "lists_at_length": record.span_state.lists_at_length,
            "outcomes": [[l, bool(ok)] for l, ok in record.span_state.outcomes],
            "finished": record.span_state.finished,
            "span": record.span_state.span,
        },
        "plan": record.plan.to_dict() if record.plan else None,
        "stroop": list(record.stroop_results),
        "instruments": list(record.instrument_results),
        "recall": list(record.recall_results),
        "audit": [list(a) for a in record.audit],
        "last_ack": dict(record.last_ack) if record.last_ack else None,
        "abort_reason": record.abort_reason,
    }


def matrix_from_bundles(bundles: Sequence[dict]) -> PerformanceMatrix:
    """Stack complete-session export bundles into a performance matrix."""
    complete = [b for b in bundles if b["status"] == "complete"]
    if not complete:
        raise ValueError("no complete sessions to assemble")
    conditions = tuple(sorted(complete[0]["performance"]["by_condition"]))
    subjects, rows = [], []
    for b in complete:
        perf = b["performance"]["by_condition"]
        if tuple(sorted(perf)) != conditions:
            raise ValueError(
                f"session {b['session_id']} has a different condition set")
        subjects.append(Subject(b["participant"]["id"],
                                b["participant"].get("age")))
        rows.append([perf[c] for c in conditions])
    return PerformanceMatrix(tuple(subjects), conditions,
                             np.array(rows, dtype=float))
