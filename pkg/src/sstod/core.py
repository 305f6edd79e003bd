"""Shared domain types and the annotated dialog record.

Symbols are single Unicode code points, so a symbol sequence is a plain ``str``.
Everything here is an immutable value except :class:`SlotState`, whose
``finalized`` flag is flipped by :func:`sstod.tracker.finalize`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional

DOMAINS = ("phone", "id", "name", "plate")

SYSTEM_ACTS = (
    "greet",
    "implicit_confirm",
    "explicit_confirm",
    "request_next",
    "clarify",
    "compare",
    "request_knowledge",
    "ask_repeat",
    "request_correction",
    "finish",
)
USER_ACTS = (
    "inform",
    "inform_overlap",
    "inform_repeat",
    "affirm",
    "deny",
    "wait",
    "update_refer",
    "update_delete",
    "update_add",
    "update_part",
    "select",
    "bye",
)
ACTION_INVENTORY = SYSTEM_ACTS + USER_ACTS

# acts whose payload must carry at least one value
VALUE_ACTS = frozenset(
    {
        "inform",
        "inform_overlap",
        "inform_repeat",
        "update_refer",
        "update_delete",
        "update_add",
        "update_part",
        "implicit_confirm",
        "explicit_confirm",
    }
)

POSITION_KINDS = ("suffix_k", "prefix_k", "after_anchor", "nth_occurrence", "whole_fragment")
_REQUIRED = {
    "suffix_k": {"k"},
    "prefix_k": {"k"},
    "after_anchor": {"anchor"},
    "nth_occurrence": {"anchor", "n"},
    "whole_fragment": {"anchor"},
}


@dataclass(frozen=True)
class PositionRef:
    kind: str
    k: Optional[int] = None
    anchor: Optional[str] = None
    n: Optional[int] = None

    def __post_init__(self):
        if self.kind not in _REQUIRED:
            raise ValueError(f"unknown position kind {self.kind!r}")
        present = {f for f in ("k", "anchor", "n") if getattr(self, f) is not None}
        if present != _REQUIRED[self.kind]:
            raise ValueError(
                f"{self.kind} needs exactly {sorted(_REQUIRED[self.kind])}, got {sorted(present)}"
            )
        if self.k is not None and self.k < 1:
            raise ValueError("k must be positive")
        if self.n is not None and self.n < 1:
            raise ValueError("n is 1-based")
        if self.anchor is not None and not self.anchor:
            raise ValueError("empty anchor")

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in ("kind", "k", "anchor", "n") if getattr(self, f) is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "PositionRef":
        return cls(kind=d["kind"], k=d.get("k"), anchor=d.get("anchor"), n=d.get("n"))


@dataclass(frozen=True)
class Payload:
    values: tuple[str, ...] = ()
    position_ref: Optional[PositionRef] = None
    knowledge_snippets: tuple[str, ...] = ()
    compared_pair: Optional[tuple[str, str]] = None

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"values": list(self.values)}
        if self.position_ref is not None:
            d["position_ref"] = self.position_ref.to_dict()
        if self.knowledge_snippets:
            d["knowledge_snippets"] = list(self.knowledge_snippets)
        if self.compared_pair is not None:
            d["compared_pair"] = list(self.compared_pair)
        return d

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "Payload":
        if not d:
            return cls()
        ref = d.get("position_ref")
        pair = d.get("compared_pair")
        return cls(
            values=tuple(d.get("values", ())),
            position_ref=PositionRef.from_dict(ref) if ref else None,
            knowledge_snippets=tuple(d.get("knowledge_snippets", ())),
            compared_pair=tuple(pair) if pair else None,
        )


@dataclass(frozen=True)
class DialogAct:
    speaker: str
    label: str
    payload: Payload = Payload()

    @property
    def value(self) -> str:
        return self.payload.values[0] if self.payload.values else ""

    def to_dict(self) -> dict:
        return {"speaker": self.speaker, "label": self.label, "payload": self.payload.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "DialogAct":
        return cls(d["speaker"], d["label"], Payload.from_dict(d.get("payload")))


def act(speaker: str, label: str, *values: str, **payload) -> DialogAct:
    """Shorthand constructor: ``act("user", "inform", "181")``."""
    return DialogAct(speaker, label, Payload(values=tuple(values), **payload))


@dataclass(frozen=True)
class SubSlotSegment:
    symbols: str
    confirmed: bool = False
    origin_turn: int = 0

    def __post_init__(self):
        if not self.symbols:
            raise ValueError("empty sub-slot segment")


@dataclass
class SlotState:
    """The agent's belief: ordered sub-slot segments.

    ``pending`` holds the agent's open question (clarification, comparison,
    ...); the tracker never reads it.
    """

    segments: tuple[SubSlotSegment, ...] = ()
    finalized: bool = False
    pending: Any = None

    @classmethod
    def of(cls, *parts: str, confirmed: bool = False) -> "SlotState":
        return cls(tuple(SubSlotSegment(p, confirmed) for p in parts))

    @property
    def value(self) -> str:
        return "".join(s.symbols for s in self.segments)

    @property
    def parts(self) -> tuple[str, ...]:
        return tuple(s.symbols for s in self.segments)

    def copy(self, **changes) -> "SlotState":
        return replace(self, **changes)


@dataclass(frozen=True)
class Goal:
    full_value: str
    segments: tuple[str, ...]
    # symbol position -> row index of the knowledge item the user will cite
    per_symbol_knowledge: Optional[dict[int, int]] = None

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"full_value": self.full_value, "segments": list(self.segments)}
        if self.per_symbol_knowledge is not None:
            d["per_symbol_knowledge"] = {str(k): v for k, v in sorted(self.per_symbol_knowledge.items())}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Goal":
        psk = d.get("per_symbol_knowledge")
        return cls(
            full_value=d["full_value"],
            segments=tuple(d["segments"]),
            per_symbol_knowledge={int(k): v for k, v in psk.items()} if psk is not None else None,
        )


@dataclass(frozen=True)
class Turn:
    turn_index: int
    speaker: str
    utterance: str
    act: DialogAct
    state_after: Optional[tuple[str, ...]] = None

    def to_dict(self) -> dict:
        d = {
            "turn_index": self.turn_index,
            "speaker": self.speaker,
            "utterance": self.utterance,
            "act": self.act.to_dict(),
        }
        if self.state_after is not None:
            d["state_after"] = list(self.state_after)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Turn":
        sa = d.get("state_after")
        return cls(
            turn_index=d["turn_index"],
            speaker=d["speaker"],
            utterance=d["utterance"],
            act=DialogAct.from_dict(d["act"]),
            state_after=tuple(sa) if sa is not None else None,
        )


@dataclass(frozen=True)
class DialogRecord:
    dialog_id: str
    domain_id: str
    goal: Goal
    turns: tuple[Turn, ...]
    success: bool
    seed: int

    @property
    def final_state(self) -> tuple[str, ...]:
        for t in reversed(self.turns):
            if t.state_after is not None:
                return t.state_after
        return ()

    @property
    def path(self) -> tuple[tuple[str, str], ...]:
        return tuple((t.speaker, t.act.label) for t in self.turns)

    def to_dict(self) -> dict:
        return {
            "dialog_id": self.dialog_id,
            "domain_id": self.domain_id,
            "goal": self.goal.to_dict(),
            "turns": [t.to_dict() for t in self.turns],
            "success": self.success,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DialogRecord":
        return cls(
            dialog_id=d["dialog_id"],
            domain_id=d["domain_id"],
            goal=Goal.from_dict(d["goal"]),
            turns=tuple(Turn.from_dict(t) for t in d["turns"]),
            success=bool(d["success"]),
            seed=int(d["seed"]),
        )


def dumps_record(record: DialogRecord) -> str:
    return json.dumps(record.to_dict(), ensure_ascii=False)


def loads_record(line: str) -> DialogRecord:
    return DialogRecord.from_dict(json.loads(line))


def write_jsonl(path, records: Iterable[DialogRecord]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(dumps_record(r) + "\n")
            n += 1
    return n


def read_jsonl(path) -> Iterator[DialogRecord]:
    with open(Path(path), encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield loads_record(line)


# ---------------------------------------------------------------- validation


@dataclass(frozen=True)
class Violation:
    turn: Optional[int]
    rule: str
    detail: str = ""

    def __str__(self):
        where = f"turn {self.turn}" if self.turn is not None else "record"
        return f"{self.rule} violation at {where}" + (f": {self.detail}" if self.detail else "")


def validate_record(record: DialogRecord, spec) -> list[Violation]:
    """Check a record against the data-model invariants; returns [] when clean."""
    out: list[Violation] = []
    goal = record.goal
    if record.domain_id != spec.domain_id:
        out.append(Violation(None, "domain", f"{record.domain_id} != {spec.domain_id}"))
    if "".join(goal.segments) != goal.full_value:
        out.append(Violation(None, "goal-partition", "segments do not concatenate to full_value"))
    if any(not s for s in goal.segments):
        out.append(Violation(None, "goal-partition", "empty goal segment"))
    if not spec.length_ok(goal.full_value):
        out.append(Violation(None, "goal-length", f"{len(goal.full_value)} symbols"))
    bad = sorted({c for c in goal.full_value if c not in spec.alphabet})
    if bad:
        out.append(Violation(None, "alphabet", f"goal symbols {''.join(bad)!r}"))

    if not record.turns:
        out.append(Violation(None, "empty", "no turns"))
        return out
    first = record.turns[0]
    if first.speaker != "system" or first.act.label != "greet":
        out.append(Violation(0, "opening", "dialog must open with a system greet"))
    inventory = set(spec.action_inventory)
    for i, t in enumerate(record.turns):
        if t.turn_index != i:
            out.append(Violation(i, "indexing", f"turn_index {t.turn_index}"))
        expected = "system" if i % 2 == 0 else "user"
        if t.speaker != expected:
            out.append(Violation(i, "alternation", f"expected {expected}, got {t.speaker}"))
        if t.act.speaker != t.speaker:
            out.append(Violation(i, "act-speaker", f"act speaker {t.act.speaker}"))
        if t.act.label not in inventory:
            out.append(Violation(i, "inventory", f"unknown act {t.act.label!r}"))
        if t.act.label in VALUE_ACTS and not t.act.payload.values:
            out.append(Violation(i, "payload", f"{t.act.label} carries no value"))
        if t.speaker == "system":
            if t.state_after is None:
                out.append(Violation(i, "state", "system turn without state_after"))
            else:
                stray = sorted({c for c in "".join(t.state_after) if c not in spec.alphabet})
                if stray:
                    out.append(Violation(i, "alphabet", f"state symbols {''.join(stray)!r}"))
                if any(not s for s in t.state_after):
                    out.append(Violation(i, "state", "empty segment in state"))
        elif t.state_after is not None:
            out.append(Violation(i, "state", "user turn carries state_after"))

    reached = "".join(record.final_state) == goal.full_value
    if record.success != reached:
        last = len(record.turns) - 1
        out.append(
            Violation(last, "success-flag", f"success={record.success} but final state "
                      f"{'equals' if reached else 'differs from'} goal")
        )
    return out


@dataclass(frozen=True)
class DomainSpec:
    """Everything needed to run one domain; built by :func:`sstod.config.load_domain`."""

    domain_id: str
    alphabet: frozenset
    length_min: int
    length_max: int
    segmentation: dict[int, float]
    action_inventory: tuple[str, ...]
    transition_table: dict[str, dict[str, float]]
    max_turns: int
    length_weights: Optional[dict[int, float]] = None
    sampling_pools: dict = field(default_factory=dict)
    noise: Any = None
    agent: Any = None
    user: Any = None
    patterns: Any = None
    resources: dict = field(default_factory=dict)
    source: str = "<memory>"

    def __post_init__(self):
        if not self.alphabet:
            raise ValueError("empty alphabet")
        if self.length_min > self.length_max:
            raise ValueError("length min > max")
        for sys_label, row in self.transition_table.items():
            total = sum(row.values())
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"transition row {sys_label} sums to {total}")

    def length_ok(self, value: str) -> bool:
        return self.length_min <= len(value) <= self.length_max

    @property
    def is_digit_domain(self) -> bool:
        return self.domain_id in ("phone", "id")
