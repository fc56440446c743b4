"""Deterministic experiment protocol: span measurement, session planning,
trial and questionnaire scoring.

Everything here is a pure function or an immutable state value; the service
layer owns persistence and sequencing. Word lists, instrument definitions,
and plans are plain data so they can be audited and round-tripped.
"""

from __future__ import annotations

import json
import math
import unicodedata
from dataclasses import dataclass, field
from importlib import resources
from statistics import median
from typing import Mapping, Sequence

import numpy as np

from iselab.analysis import sti_label

MIN_SPAN = 0   # marker: the participant never reproduced a single list
DEFAULT_CONDITION_STIS = (0.25, 0.45, 0.75, 0.9)
STROOP_COLORS = ("red", "green", "blue", "yellow")


def normalize_word(word: str) -> str:
    """Case- and diacritic-insensitive canonical form for recall comparison."""
    decomposed = unicodedata.normalize("NFKD", word.strip())
    stripped = "".join(c for c in decomposed if not unicodedata.combining(c))
    return stripped.casefold()


@dataclass(frozen=True)
class TrialScore:
    per_position_correct: tuple
    score: float

    @property
    def all_correct(self) -> bool:
        return all(self.per_position_correct)


def score_trial(presented: Sequence[str], recalled: Sequence[str]) -> TrialScore:
    """Strict serial-position scoring.

    Position i is correct iff the i-th recalled word exists and equals the
    i-th presented word after case/diacritic normalization. Missing positions
    are wrong; extra recalled words beyond the presented length are ignored.
    """
    if not presented:
        raise ValueError("cannot score an empty presented list")
    keys = [normalize_word(w) for w in presented]
    answers = [normalize_word(w) for w in recalled]
    flags = tuple(i < len(answers) and answers[i] == keys[i]
                  for i in range(len(keys)))
    return TrialScore(flags, sum(flags) / len(flags))


# ---------------------------------------------------------------------------
# mnemonic span state machine


@dataclass(frozen=True)
class SpanState:
    """Progress through the span task: lists of growing length, two per length.

    The task stops as soon as the two most recently presented lists were both
    incorrect, even when they straddle a length boundary. The span is then
    the length of the last correctly reproduced list, or MIN_SPAN if none was.
    """

    current_length: int = 2
    lists_at_length: int = 0     # 0 or 1: position within the pair
    outcomes: tuple = ()          # ((length, correct), ...)
    finished: bool = False
    span: int | None = None

    def __post_init__(self):
        if self.current_length < 2:
            raise ValueError("list length starts at 2")
        if self.lists_at_length not in (0, 1):
            raise ValueError("lists_at_length must be 0 or 1")

    @classmethod
    def replay(cls, outcomes: Sequence[bool]) -> "SpanState":
        state = cls()
        for correct in outcomes:
            state = advance_span(state, correct)
        return state


def advance_span(state: SpanState, correct: bool) -> SpanState:
    if state.finished:
        raise ValueError("span task already finished")
    correct = bool(correct)
    outcomes = state.outcomes + ((state.current_length, correct),)

    if len(outcomes) >= 2 and not outcomes[-1][1] and not outcomes[-2][1]:
        correct_lengths = [length for length, ok in outcomes if ok]
        span = correct_lengths[-1] if correct_lengths else MIN_SPAN
        return SpanState(state.current_length, state.lists_at_length,
                         outcomes, True, span)

    if state.lists_at_length == 1:
        return SpanState(state.current_length + 1, 0, outcomes, False, None)
    return SpanState(state.current_length, 1, outcomes, False, None)


# ---------------------------------------------------------------------------
# session planning


@dataclass(frozen=True)
class TrialPlan:
    index: int          # position within the condition, 0-based
    load: str           # "high" | "low"
    words: tuple

    def to_dict(self) -> dict:
        return {"index": self.index, "load": self.load, "words": list(self.words)}


@dataclass(frozen=True)
class ConditionPlan:
    label: str
    sti: float | None
    trials: tuple

    def to_dict(self) -> dict:
        return {"label": self.label, "sti": self.sti,
                "trials": [t.to_dict() for t in self.trials]}


@dataclass(frozen=True)
class SessionPlan:
    """Materialized main-phase plan for one participant."""

    participant_id: str
    span: int
    seed: int
    conditions: tuple                     # presentation order
    instrument_at_start: str = "thayer_adacl"
    instruments_after_condition: tuple = ("rtlx", "annoyance", "thayer_adacl")
    rest_between_conditions: bool = True
    order_mode: str = "shuffled"          # "shuffled" | "latin"

    @property
    def high_length(self) -> int:
        return self.span + 2

    @property
    def low_length(self) -> int:
        return self.span - 1

    def to_dict(self) -> dict:
        return {
            "participant_id": self.participant_id,
            "span": self.span,
            "seed": self.seed,
            "conditions": [c.to_dict() for c in self.conditions],
            "instrument_at_start": self.instrument_at_start,
            "instruments_after_condition": list(self.instruments_after_condition),
            "rest_between_conditions": self.rest_between_conditions,
            "order_mode": self.order_mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionPlan":
        conditions = tuple(
            ConditionPlan(c["label"], c["sti"],
                          tuple(TrialPlan(t["index"], t["load"], tuple(t["words"]))
                                for t in c["trials"]))
            for c in d["conditions"])
        return cls(d["participant_id"], d["span"], d["seed"], conditions,
                   d["instrument_at_start"],
                   tuple(d["instruments_after_condition"]),
                   d["rest_between_conditions"], d["order_mode"])


def williams_rows(k: int) -> list:
    """Row set of a Williams design: every condition precedes every other
    equally often. Even k needs k rows; odd k uses the 2k row/reverse set."""
    if k < 2:
        raise ValueError("need at least 2 conditions")
    first = [0]
    lo, hi = 1, k - 1
    take_lo = True
    while len(first) < k:
        if take_lo:
            first.append(lo)
            lo += 1
        else:
            first.append(hi)
            hi -= 1
        take_lo = not take_lo
    rows = [[(v + i) % k for v in first] for i in range(k)]
    if k % 2 == 1:
        rows.extend([list(reversed(r)) for r in rows])
    return rows


def load_word_pool(path=None) -> tuple:
    """Word pool for recall lists; defaults to the packaged English noun pool."""
    if path is None:
        text = resources.files("iselab.data").joinpath("wordpool_en.txt").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    words = []
    seen = set()
    for line in text.splitlines():
        word = line.split("#", 1)[0].strip()
        if not word:
            continue
        key = normalize_word(word)
        if key in seen:
            raise ValueError(f"duplicate word in pool: {word!r}")
        seen.add(key)
        words.append(word)
    if not words:
        raise ValueError("empty word pool")
    return tuple(words)


def build_session_plan(participant_id: str, span: int, word_pool: Sequence[str],
                       seed: int, condition_stis=DEFAULT_CONDITION_STIS,
                       trials_per_condition: int = 16,
                       latin_square: bool = False,
                       latin_row: int | None = None) -> SessionPlan:
    """Deterministic per-seed session plan.

    Five conditions (silence control plus one per STI target), each with
    trials_per_condition recall lists split equally between the high load
    (span + 2 words) and the low load (span - 1 words), load order shuffled
    within each condition, word lists sampled without replacement per list.
    Condition order is a seeded permutation, or a Williams-design row when
    latin_square is set.
    """
    if span < 2:
        raise ValueError(f"span must be >= 2 (low load is span - 1), got {span}")
    if trials_per_condition < 2 or trials_per_condition % 2:
        raise ValueError("trials_per_condition must be even and >= 2")
    pool = tuple(word_pool)
    if len(set(normalize_word(w) for w in pool)) != len(pool):
        raise ValueError("word pool contains duplicates")
    high, low = span + 2, span - 1
    if len(pool) < high:
        raise ValueError(
            f"word pool too small: need >= {high} distinct words, have {len(pool)}")

    labels = [sti_label(None)] + [sti_label(s) for s in condition_stis]
    rng = np.random.default_rng(seed)
    if latin_square:
        rows = williams_rows(len(labels))
        row = rows[(seed if latin_row is None else latin_row) % len(rows)]
        order = row
        mode = "latin"
    else:
        order = rng.permutation(len(labels)).tolist()
        mode = "shuffled"

    half = trials_per_condition // 2
    conditions = []
    for pos in order:
        label = labels[pos]
        loads = ["high"] * half + ["low"] * half
        rng.shuffle(loads)
        trials = []
        for idx, load in enumerate(loads):
            length = high if load == "high" else low
            picks = rng.choice(len(pool), size=length, replace=False)
            trials.append(TrialPlan(idx, load, tuple(pool[i] for i in picks)))
        sti = None if label == sti_label(None) else float(label[4:])
        conditions.append(ConditionPlan(label, sti, tuple(trials)))

    return SessionPlan(participant_id, span, seed, tuple(conditions),
                       order_mode=mode)


# ---------------------------------------------------------------------------
# questionnaires


@dataclass(frozen=True)
class InstrumentItem:
    key: str
    prompt: str
    min: float
    max: float

    def __post_init__(self):
        if self.min >= self.max:
            raise ValueError(f"item {self.key!r}: empty scale")


@dataclass(frozen=True)
class Subscale:
    name: str
    items: tuple
    aggregation: str     # "mean" | "sum"
    reverse: tuple = ()

    def __post_init__(self):
        if self.aggregation not in ("mean", "sum"):
            raise ValueError(f"unknown aggregation {self.aggregation!r}")
        if not self.items:
            raise ValueError(f"subscale {self.name!r} has no items")


@dataclass(frozen=True)
class InstrumentDefinition:
    id: str
    title: str
    items: tuple
    subscales: tuple

    def __post_init__(self):
        keys = {i.key for i in self.items}
        if len(keys) != len(self.items):
            raise ValueError("duplicate item keys")
        for sub in self.subscales:
            unknown = set(sub.items) - keys
            if unknown:
                raise ValueError(
                    f"subscale {sub.name!r} references unknown items {sorted(unknown)}")
            if set(sub.reverse) - set(sub.items):
                raise ValueError(f"subscale {sub.name!r} reverses non-member items")

    def item(self, key: str) -> InstrumentItem:
        for i in self.items:
            if i.key == key:
                return i
        raise KeyError(key)

    @classmethod
    def from_dict(cls, d: dict) -> "InstrumentDefinition":
        items = tuple(InstrumentItem(i["key"], i["prompt"],
                                     float(i["min"]), float(i["max"]))
                      for i in d["items"])
        subscales = tuple(Subscale(s["name"], tuple(s["items"]),
                                   s["aggregation"], tuple(s.get("reverse", ())))
                          for s in d["subscales"])
        return cls(d["id"], d.get("title", d["id"]), items, subscales)

    @classmethod
    def from_file(cls, path) -> "InstrumentDefinition":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def load(cls, instrument_id: str) -> "InstrumentDefinition":
        """Load a packaged instrument definition by id."""
        ref = resources.files("iselab.data.instruments").joinpath(
            f"{instrument_id}.json")
        try:
            text = ref.read_text()
        except FileNotFoundError:
            raise KeyError(f"no packaged instrument {instrument_id!r}")
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "items": [{"key": i.key, "prompt": i.prompt, "min": i.min,
                       "max": i.max} for i in self.items],
            "subscales": [{"name": s.name, "items": list(s.items),
                           "aggregation": s.aggregation,
                           "reverse": list(s.reverse)} for s in self.subscales],
        }


def score_instrument(definition: InstrumentDefinition,
                     values: Mapping[str, float]) -> dict:
    """Per-subscale scores from a complete response.

    Reversed items contribute scale_min + scale_max - value. Unknown keys are
    rejected so mistyped item keys cannot silently vanish.
    """
    known = {i.key for i in definition.items}
    extra = set(values) - known
    if extra:
        raise ValueError(f"response has unknown items {sorted(extra)}")
    for item in definition.items:
        if item.key not in values:
            raise ValueError(f"missing response for item {item.key!r}")
        v = values[item.key]
        if not (isinstance(v, (int, float)) and math.isfinite(v)):
            raise ValueError(f"item {item.key!r}: response must be a finite number")
        if not item.min <= v <= item.max:
            raise ValueError(
                f"item {item.key!r}: {v} outside scale [{item.min}, {item.max}]")

    scores = {}
    for sub in definition.subscales:
        contributions = []
        for key in sub.items:
            item = definition.item(key)
            v = float(values[key])
            if key in sub.reverse:
                v = item.min + item.max - v
            contributions.append(v)
        total = sum(contributions)
        scores[sub.name] = total / len(contributions) if sub.aggregation == "mean" else total
    return scores


def score_rtlx(values: Sequence[float]) -> float:
    """Raw Task Load Index: unweighted mean of the five 0-100 workload items."""
    vals = list(values)
    if len(vals) != 5:
        raise ValueError(f"RTLX takes exactly 5 items, got {len(vals)}")
    for v in vals:
        if not (isinstance(v, (int, float)) and math.isfinite(v)):
            raise ValueError("RTLX items must be finite numbers")
        if not 0 <= v <= 100:
            raise ValueError(f"RTLX item {v} outside [0, 100]")
    return sum(float(v) for v in vals) / 5.0


# ---------------------------------------------------------------------------
# Stroop


@dataclass(frozen=True)
class StroopTrial:
    word: str
    ink: str

    @property
    def congruent(self) -> bool:
        return self.word == self.ink


def make_stroop_block(n_trials: int = 24, seed: int = 0) -> tuple:
    """Seeded half-congruent, half-incongruent color-word block."""
    if n_trials < 2 or n_trials % 2:
        raise ValueError("n_trials must be even and >= 2")
    rng = np.random.default_rng(seed)
    colors = STROOP_COLORS
    trials = []
    for i in range(n_trials // 2):
        ink = colors[int(rng.integers(len(colors)))]
        trials.append(StroopTrial(ink, ink))
    for i in range(n_trials // 2):
        word = colors[int(rng.integers(len(colors)))]
        others = [c for c in colors if c != word]
        ink = others[int(rng.integers(len(others)))]
        trials.append(StroopTrial(word, ink))
    order = rng.permutation(n_trials)
    return tuple(trials[i] for i in order)


def stroop_interference(congruent_rts: Sequence[float],
                        incongruent_rts: Sequence[float],
                        min_rt: float = 200.0, max_rt: float = 3000.0) -> float:
    """median(incongruent) - median(congruent), after dropping implausible RTs."""
    def keep(rts, name):
        kept = [float(r) for r in rts if min_rt <= float(r) <= max_rt]
        if not kept:
            raise ValueError(f"no {name} trials remain after outlier filtering")
        return kept

    return median(keep(incongruent_rts, "incongruent")) - median(
        keep(congruent_rts, "congruent"))
