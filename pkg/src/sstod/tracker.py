"""Sub-slot belief tracker.

Every operation takes a :class:`SlotState` and returns a fresh
:class:`TrackerOutcome`; the input state is never touched.  Segment cut
offsets are carried through edits (shifted when they sit after the edited
span) and segments overlapping an edited span are merged.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .core import PositionRef, SlotState, SubSlotSegment


class TrackerError(ValueError):
    pass


@dataclass(frozen=True)
class AmbiguityReport:
    kind: str  # overlap_ambiguous | anchor_ambiguous | fragment_ambiguous
    candidates: tuple
    resolutions: tuple[SlotState, ...] = ()

    def __post_init__(self):
        if len(self.candidates) < 2:
            raise ValueError("an ambiguity needs at least two candidates")


@dataclass(frozen=True)
class TrackerOutcome:
    new_state: SlotState
    applied: bool
    ambiguity: Optional[AmbiguityReport] = None


def _unchanged(state, ambiguity=None):
    return TrackerOutcome(state, False, ambiguity)


def _check_open(state: SlotState):
    if state.finalized:
        raise TrackerError("state sealed")


# --------------------------------------------------------------- primitives


def detect_overlap(collected: str, incoming: str) -> int:
    """Longest k with collected[-k:] == incoming[:k] (KMP border of incoming#collected)."""
    m = min(len(collected), len(incoming))
    if m == 0:
        return 0
    # border array over incoming, then run collected's tail through the automaton
    pat = incoming[:m]
    fail = [0] * len(pat)
    j = 0
    for i in range(1, len(pat)):
        while j and pat[i] != pat[j]:
            j = fail[j - 1]
        if pat[i] == pat[j]:
            j += 1
        fail[i] = j
    j = 0
    for ch in collected[-m:]:
        while j and (j == len(pat) or ch != pat[j]):
            j = fail[j - 1]
        if j < len(pat) and ch == pat[j]:
            j += 1
    return j


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def _cuts(state: SlotState) -> list[int]:
    out, pos = [], 0
    for seg in state.segments[:-1]:
        pos += len(seg.symbols)
        out.append(pos)
    return out


def _splice(state: SlotState, start: int, end: int, replacement: str, turn: int = 0) -> SlotState:
    """Replace value[start:end] and rebuild segments.

    Cuts before the span stay, cuts after it shift by the length delta, cuts
    strictly inside it vanish.  Segments that overlap the span lose their
    confirmation.
    """
    value = state.value
    new_value = value[:start] + replacement + value[end:]
    delta = len(replacement) - (end - start)
    old_bounds = []
    pos = 0
    for seg in state.segments:
        old_bounds.append((pos, pos + len(seg.symbols), seg))
        pos += len(seg.symbols)

    cuts = []
    for c in _cuts(state):
        if c <= start:
            cuts.append(c)
        elif c >= end and (c > start or end == start):
            cuts.append(c + delta)
    cuts = sorted({c for c in cuts if 0 < c < len(new_value)})

    segments = []
    bounds = [0] + cuts + [len(new_value)]
    for lo, hi in zip(bounds, bounds[1:]):
        if hi <= lo:
            continue
        # map back to an old segment when this piece is untouched
        old = None
        if hi <= start:
            old = next((s for a, b, s in old_bounds if a == lo and b == hi), None)
        elif lo >= start + len(replacement) and (lo > start or end > start or not replacement):
            old = next((s for a, b, s in old_bounds if a == lo - delta and b == hi - delta), None)
        if old is not None and old.symbols == new_value[lo:hi]:
            segments.append(old)
        else:
            segments.append(SubSlotSegment(new_value[lo:hi], False, turn))
    return SlotState(tuple(segments))


def _positions(value: str, sym: str) -> list[int]:
    out, i = [], value.find(sym)
    while i >= 0:
        out.append(i)
        i = value.find(sym, i + 1)
    return out


# --------------------------------------------------------------- operations


def apply_inform(
    state: SlotState,
    value: str,
    overlap_hint: str = "auto",
    *,
    length_max: Optional[int] = None,
    turn: int = 0,
) -> TrackerOutcome:
    _check_open(state)
    if not value:
        raise TrackerError("empty value")
    segs = state.segments

    def append():
        return SlotState(segs + (SubSlotSegment(value, False, turn),))

    def merge(k):
        last = segs[-1]
        merged = SubSlotSegment(last.symbols + value[k:], False, turn)
        return SlotState(segs[:-1] + (merged,))

    if overlap_hint == "none" or not segs:
        return TrackerOutcome(append(), True)

    last = segs[-1].symbols
    if overlap_hint == "repeat":
        if value == last:
            confirmed = SubSlotSegment(last, True, segs[-1].origin_turn)
            return TrackerOutcome(SlotState(segs[:-1] + (confirmed,)), True)
        # a differing repeat supersedes the last segment
        return TrackerOutcome(SlotState(segs[:-1] + (SubSlotSegment(value, False, turn),)), True)

    k = detect_overlap(last, value)
    if overlap_hint == "overlap":
        return TrackerOutcome(merge(k), True)
    if overlap_hint != "auto":
        raise ValueError(f"unknown overlap hint {overlap_hint!r}")
    if k == 0:
        return TrackerOutcome(append(), True)

    merged, appended = merge(k), append()
    fits = lambda s: length_max is None or len(s.value) <= length_max  # noqa: E731
    if fits(merged) and fits(appended):
        report = AmbiguityReport(
            "overlap_ambiguous", (merged.value, appended.value), (merged, appended)
        )
        return _unchanged(state, report)
    if fits(merged):
        return TrackerOutcome(merged, True)
    return TrackerOutcome(appended, True)


def apply_replace_positional(
    state: SlotState, ref: PositionRef, value: str, *, turn: int = 0
) -> TrackerOutcome:
    _check_open(state)
    full = state.value
    if ref.kind in ("suffix_k", "prefix_k"):
        if ref.k > len(full):
            raise TrackerError("span out of range")
        if len(value) != ref.k:
            raise TrackerError("span/value length mismatch")
        start = len(full) - ref.k if ref.kind == "suffix_k" else 0
        return TrackerOutcome(_splice(state, start, start + ref.k, value, turn), True)

    if ref.kind == "after_anchor":
        hits = _positions(full, ref.anchor)
        if not hits:
            raise TrackerError("symbol not found")
        spans = [(p + len(ref.anchor), p + len(ref.anchor) + len(value)) for p in hits]
        spans = [s for s in spans if s[1] <= len(full)]
        if not spans:
            raise TrackerError("span out of range")
    elif ref.kind == "nth_occurrence":
        hits = _positions(full, ref.anchor)
        if ref.n > len(hits):
            raise TrackerError("span out of range")
        p = hits[ref.n - 1]
        spans = [(p, p + len(ref.anchor))]
    else:  # whole_fragment
        hits = _positions(full, ref.anchor)
        if not hits:
            raise TrackerError("symbol not found")
        spans = [(p, p + len(ref.anchor)) for p in hits]

    results = [_splice(state, a, b, value, turn) for a, b in spans]
    if len(results) == 1:
        return TrackerOutcome(results[0], True)
    return _unchanged(state, AmbiguityReport("anchor_ambiguous", tuple(a for a, _ in spans), tuple(results)))


def apply_delete(state: SlotState, target: str, *, turn: int = 0) -> TrackerOutcome:
    _check_open(state)
    hits = _positions(state.value, target)
    if not hits:
        raise TrackerError("symbol not found")
    results = [_splice(state, p, p + len(target), "", turn) for p in hits]
    if len(hits) == 1:
        return TrackerOutcome(results[0], True)
    return _unchanged(state, AmbiguityReport("anchor_ambiguous", tuple(hits), tuple(results)))


def apply_insert_after(state: SlotState, anchor: str, value: str, *, turn: int = 0) -> TrackerOutcome:
    _check_open(state)
    if not value:
        raise TrackerError("empty value")
    hits = _positions(state.value, anchor)
    if not hits:
        raise TrackerError("symbol not found")
    results = [_insert(state, p + len(anchor), value, turn) for p in hits]
    if len(hits) == 1:
        return TrackerOutcome(results[0], True)
    return _unchanged(state, AmbiguityReport("anchor_ambiguous", tuple(hits), tuple(results)))


def _insert(state: SlotState, at: int, value: str, turn: int) -> SlotState:
    # the inserted symbols join the segment that ends at (or spans) `at`
    if at == 0:
        return _splice(state, 0, 0, value, turn)
    full = state.value
    return _splice(state, at - 1, at, full[at - 1] + value, turn)


def fuzzy_windows(value: str, correction: str) -> list[tuple[int, int, int]]:
    """All (distance, start, end) windows of length |c|-1..|c|+1."""
    c = len(correction)
    out = []
    for length in (c - 1, c, c + 1):
        if length < 1 or length > len(value):
            continue
        for s in range(len(value) - length + 1):
            out.append((levenshtein(value[s : s + length], correction), s, s + length))
    return out


def _window_key(c: int):
    # smaller distance, then exact length, then rightmost end, then rightmost start
    return lambda w: (w[0], (w[2] - w[1]) != c, -w[2], -w[1])


def apply_fuzzy_replace(state: SlotState, correction: str, *, turn: int = 0) -> TrackerOutcome:
    _check_open(state)
    full = state.value
    if not full or not correction:
        raise TrackerError("fuzzy replace needs a non-empty state and correction")
    windows = sorted(fuzzy_windows(full, correction), key=_window_key(len(correction)))
    if not windows:
        raise TrackerError("span out of range")
    best = windows[0]
    if best[0] >= len(correction):
        tied = [w for w in windows if w[0] == best[0]]
        if len(tied) < 2:
            tied = windows[:2]
        if len(tied) < 2:
            # a single window exists at all; nothing to choose between
            tied = [best, best]
        report = AmbiguityReport(
            "fragment_ambiguous",
            tuple((s, e) for _, s, e in tied),
            tuple(_splice(state, s, e, correction, turn) for _, s, e in tied),
        )
        return _unchanged(state, report)
    _, s, e = best
    return TrackerOutcome(_splice(state, s, e, correction, turn), True)


def confirm_all(state: SlotState) -> SlotState:
    segs = tuple(SubSlotSegment(s.symbols, True, s.origin_turn) for s in state.segments)
    return SlotState(segs, state.finalized, state.pending)


def finalize(state: SlotState, spec) -> str:
    """Seal ``state`` and return the collected value."""
    _check_open(state)
    value = state.value
    if not spec.length_ok(value):
        raise TrackerError("incomplete or overlong value")
    if not all(s.confirmed for s in state.segments):
        raise TrackerError("unconfirmed segments remain")
    state.finalized = True
    return value


def state_from_parts(parts: Sequence[str], confirmed: bool = True) -> SlotState:
    return SlotState(tuple(SubSlotSegment(p, confirmed) for p in parts if p))
