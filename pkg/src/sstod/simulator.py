"""User side of the dialog: goal sampler, FSA user and ASR noise.

The user samples its next act from the configured transition row for the
system's last act, restricted to the acts that make sense right now.  What
makes sense depends on comparing the system's slot value ``S`` with what the
user has sent so far ``T`` (a prefix of the goal):

* ``S == T``: carry on (next segment, overlap, repeat, wait, affirm at the end);
* ``S`` a proper prefix of ``T``: resend the missing tail;
* otherwise: deny or correct.

Every candidate act is checked by running the tracker on a copy of the
system state, so a sampled act always leads (possibly via a clarification)
to the intended value.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

from . import tracker as tk
from .config import NoiseConfig
from .core import DialogAct, Goal, Payload, PositionRef, act
from .knowledge import cached_kb, cached_pinyin, homophone_groups
from .language import payload_features

__all__ = ["NoiseConfig", "UserState", "sample_goal", "user_step", "corrupt", "corrupt_act", "valid_moves"]

PROTECTED = frozenset("的一个字是")
FALLBACK_ORDER = (
    "select", "affirm", "inform", "update_refer", "inform_repeat", "update_part",
    "update_delete", "update_add", "deny", "inform_overlap", "wait",
)
KNOWLEDGE_ACTS = ("inform", "inform_repeat", "update_refer", "update_add")
CORRECTIONS = ("update_refer", "update_part", "update_delete", "update_add", "inform_repeat")


# -------------------------------------------------------------------- goals


def _weighted(rng, dist: dict):
    keys = sorted(dist)
    return rng.choices(keys, weights=[dist[k] for k in keys])[0]


def sample_goal(spec, rng: random.Random) -> Goal:
    if spec.length_weights:
        length = _weighted(rng, spec.length_weights)
    else:
        length = rng.randint(spec.length_min, spec.length_max)
    pools = spec.sampling_pools
    psk = None
    if spec.domain_id == "name":
        surnames, given = spec.user.surnames, spec.user.given
        if not surnames or not given:
            raise ValueError("name domain needs surname and given-name pools")
        value = rng.choice(surnames) + "".join(rng.choice(given) for _ in range(length - 1))
        items = cached_kb(spec.resources["kb"])
        by_char: dict[str, list[int]] = {}
        for i, it in enumerate(items):
            by_char.setdefault(it.character, []).append(i)
        psk = {}
        for pos, ch in enumerate(value):
            if ch not in by_char:
                raise ValueError(f"no knowledge item for name character {ch}")
            psk[pos] = rng.choice(by_char[ch])
    else:
        chars = []
        for pos in range(length):
            pool = pools.get(f"pos{pos}") or (pools.get("last") if pos == length - 1 else None) or pools.get("pool")
            if not pool:
                pool = "".join(sorted(spec.alphabet))
            chars.append(rng.choice(pool))
        value = "".join(chars)

    feasible = {k: p for k, p in spec.segmentation.items() if k <= length and p > 0}
    if not feasible:
        raise ValueError(f"segmentation {spec.segmentation} cannot split a value of length {length}")
    k = _weighted(rng, feasible)
    cuts = sorted(rng.sample(range(1, length), k - 1))
    bounds = [0] + cuts + [length]
    segments = tuple(value[a:b] for a, b in zip(bounds, bounds[1:]))
    return Goal(value, segments, psk)


# -------------------------------------------------------------------- noise


@lru_cache(maxsize=8)
def _homophones(pinyin_path: str) -> dict:
    table = cached_pinyin(pinyin_path)
    groups = homophone_groups(table)
    return {ch: tuple(c for c in groups[py] if c != ch) for ch, py in table.items()}


def _confusions(noise: NoiseConfig) -> dict:
    out: dict[str, list[str]] = {}
    for group in noise.confusion_sets:
        for s in group:
            out.setdefault(s, [])
            out[s].extend(o for o in group if o != s and o not in out[s])
    return out


def corrupt(payload: Payload, noise: NoiseConfig, rng: random.Random, memo: Optional[dict] = None,
            pinyin_path: Optional[str] = None):
    """ASR noise on an act payload.  Returns (payload, log of (field, item, pos, orig, repl))."""
    log = []
    if noise is None or noise.silent:
        return payload, log
    conf = _confusions(noise)
    homo = _homophones(pinyin_path) if pinyin_path and noise.knowledge_corruption_prob > 0 else {}

    def hear(ch, p):
        alts = homo.get(ch, ())
        if not alts or ch in PROTECTED:
            return ch
        if noise.sticky_homophones and memo is not None:
            if ch not in memo:
                memo[ch] = rng.choice(alts) if rng.random() < p else ch
            return memo[ch]
        return rng.choice(alts) if rng.random() < p else ch

    values = []
    for i, v in enumerate(payload.values):
        out = []
        for j, ch in enumerate(v):
            new = ch
            if ch in conf and noise.substitution_prob > 0 and rng.random() < noise.substitution_prob:
                new = rng.choice(conf[ch])
            elif noise.homophone_values and homo:
                new = hear(ch, noise.knowledge_corruption_prob)
            if new != ch:
                log.append(("values", i, j, ch, new))
            out.append(new)
        values.append("".join(out))
    snippets = []
    for i, s in enumerate(payload.knowledge_snippets):
        out = []
        for j, ch in enumerate(s):
            new = hear(ch, noise.knowledge_corruption_prob) if homo else ch
            if new != ch:
                log.append(("knowledge_snippets", i, j, ch, new))
            out.append(new)
        snippets.append("".join(out))
    return Payload(tuple(values), payload.position_ref, tuple(snippets), payload.compared_pair), log


def corrupt_act(a: DialogAct, noise: NoiseConfig, rng, memo=None, pinyin_path=None):
    p, log = corrupt(a.payload, noise, rng, memo, pinyin_path)
    return DialogAct(a.speaker, a.label, p), log


# --------------------------------------------------------------------- user


@dataclass
class UserState:
    goal: Goal
    cursor: int = 0
    pending_correction: Optional[DialogAct] = None
    last_system_act: str = ""
    turns_elapsed: int = 0
    system_view: tuple = ()  # the system's current segments
    last_act: Optional[DialogAct] = None

    @property
    def sent(self) -> str:
        return "".join(self.goal.segments[: self.cursor])


@dataclass(frozen=True)
class Move:
    act: DialogAct
    cursor: int
    queued: Optional[DialogAct] = None


def _sim_ok(outcome_fn, target: str) -> bool:
    try:
        out = outcome_fn()
    except tk.TrackerError:
        return False
    if out.applied:
        return out.new_state.value == target
    if out.ambiguity is not None:
        return any(r.value == target for r in out.ambiguity.resolutions)
    return False


def simulate(a: DialogAct, parts: tuple, spec):
    """The tracker outcome the agent will reach on ``a`` (knowledge aside)."""
    st = tk.state_from_parts(parts, confirmed=False)
    p = a.payload
    lbl = a.label
    if lbl == "inform":
        return tk.apply_inform(st, p.values[0], "auto", length_max=spec.length_max)
    if lbl == "inform_overlap":
        return tk.apply_inform(st, p.values[0], "overlap", length_max=spec.length_max)
    if lbl == "inform_repeat":
        return tk.apply_inform(st, p.values[0], "repeat", length_max=spec.length_max)
    if lbl == "update_refer":
        return tk.apply_replace_positional(st, p.position_ref, p.values[0])
    if lbl == "update_delete":
        return tk.apply_delete(st, p.values[0])
    if lbl == "update_add":
        return tk.apply_insert_after(st, p.position_ref.anchor, p.values[0])
    if lbl == "update_part":
        return tk.apply_fuzzy_replace(st, p.values[0])
    raise ValueError(f"{lbl} does not touch the state")


class _Ctx:
    def __init__(self, state: UserState, spec, rng):
        self.st, self.spec, self.rng = state, spec, rng
        self.parts = tuple(state.system_view)
        self.S = "".join(self.parts)
        self.T = state.sent
        self.G = state.goal.full_value
        self.n = len(state.goal.segments)
        self.ps = spec.patterns

    def ok(self, a: DialogAct, target: str) -> bool:
        return _sim_ok(lambda: simulate(a, self.parts, self.spec), target)

    def knowledge(self, a: DialogAct, start: int) -> DialogAct:
        """Attach per-character knowledge for a value that sits at goal offset ``start``."""
        g = self.st.goal
        if g.per_symbol_knowledge is None or a.label not in KNOWLEDGE_ACTS or not a.payload.values:
            return a
        if self.rng.random() < self.spec.user.knowledge_free_prob:
            return a
        v = a.payload.values[0]
        items = cached_kb(self.spec.resources["kb"])
        snippets = []
        for i, ch in enumerate(v):
            idx = g.per_symbol_knowledge.get(start + i)
            if idx is None or items[idx].character != ch:
                return a
            snippets.append(items[idx].text)
        p = Payload(a.payload.values, a.payload.position_ref, tuple(snippets), a.payload.compared_pair)
        feats = payload_features(p)
        if not any(t.features == feats for t in self.ps.for_act(a.label)):
            return a
        return DialogAct(a.speaker, a.label, p)


def _slip(value: str, rng) -> str:
    i = rng.randrange(len(value))
    if rng.random() < 0.5 and len(value) > 1:
        return value[:i] + value[i + 1 :]
    return value[: i + 1] + value[i] + value[i + 1 :]


def _forward_moves(c: _Ctx) -> dict:
    """Options when the system holds exactly what was sent."""
    out: dict[str, list[Move]] = {}
    st = c.st
    if c.st.cursor < c.n:
        seg = st.goal.segments[st.cursor]
        target = c.T + seg
        a = act("user", "inform", seg)
        if c.ok(a, target):
            sent = a
            if c.spec.is_digit_domain and c.spec.user.slip_prob > 0 and len(seg) > 1 \
                    and c.rng.random() < c.spec.user.slip_prob:
                sent = act("user", "inform", _slip(seg, c.rng))
            out["inform"] = [Move(c.knowledge(sent, len(c.T)), st.cursor + 1)]
        if c.T:
            ovs = []
            for j in range(1, min(3, len(c.T)) + 1):
                a = act("user", "inform_overlap", c.T[-j:] + seg)
                if c.ok(a, target):
                    ovs.append(Move(a, st.cursor + 1))
            if ovs:
                out["inform_overlap"] = ovs
        out["wait"] = [Move(act("user", "wait"), st.cursor)]
    else:
        out["affirm"] = [Move(act("user", "affirm"), st.cursor)]
    if st.cursor > 0 and c.parts:
        last = st.goal.segments[st.cursor - 1]
        a = act("user", "inform_repeat", last)
        if c.ok(a, c.T):
            out["inform_repeat"] = [Move(c.knowledge(a, len(c.T) - len(last)), st.cursor)]
    return out


def _common_affixes(a: str, b: str) -> tuple[int, int]:
    p = 0
    while p < min(len(a), len(b)) and a[p] == b[p]:
        p += 1
    q = 0
    while q < min(len(a), len(b)) - p and a[-1 - q] == b[-1 - q]:
        q += 1
    return p, q


def corrections(c: _Ctx) -> dict:
    """Every correction act that turns the system value ``S`` into ``T``."""
    S, T = c.S, c.T
    out: dict[str, list[Move]] = {}
    cur = c.st.cursor

    def add(label, a, start):
        if c.ok(a, T):
            out.setdefault(label, []).append(Move(c.knowledge(a, start) if start is not None else a, cur))

    if not S or S == T:
        return out
    p, q = _common_affixes(S, T)
    if len(S) == len(T):
        k = len(S) - p
        add("update_refer", DialogAct("user", "update_refer",
                                      Payload((T[p:],), PositionRef("suffix_k", k=k))), p)
        k2 = len(S) - q
        if k2 < len(S) or p == 0:
            add("update_refer", DialogAct("user", "update_refer",
                                          Payload((T[:k2],), PositionRef("prefix_k", k=k2))), 0)
    # fragment replacement of the differing region
    a_s, a_t = S[p : len(S) - q], T[p : len(T) - q]
    lo, hi_s, hi_t = p, len(S) - q, len(T) - q
    if not a_s or not a_t:
        if lo > 0:
            lo -= 1
        elif q > 0:
            hi_s, hi_t = hi_s + 1, hi_t + 1
    anchor, value = S[lo:hi_s], T[lo:hi_t]
    if anchor and value:
        add("update_refer", DialogAct("user", "update_refer",
                                      Payload((value,), PositionRef("whole_fragment", anchor=anchor))), lo)
    # fuzzy part: the differing region padded to a speakable chunk
    if T:
        for pad in (1, 0, 2):
            a0, b0 = max(0, p - pad), min(len(T), len(T) - q + pad)
            if b0 - a0 >= 2 or (b0 - a0 >= 1 and len(T) == 1):
                if a0 < b0:
                    add("update_part", act("user", "update_part", T[a0:b0]), a0)
                    if "update_part" in out:
                        break
    if len(S) == len(T) + 1:
        i = p
        add("update_delete", act("user", "update_delete", S[i]), None)
    if len(T) == len(S) + 1 and p > 0:
        a = DialogAct("user", "update_add", Payload((T[p],), PositionRef("after_anchor", anchor=S[p - 1])))
        add("update_add", a, p)
    if T == "":
        add("update_delete", act("user", "update_delete", S), None)
    # a differing last segment can simply be said again
    if c.parts:
        last = c.parts[-1]
        head = S[: len(S) - len(last)]
        if T.startswith(head) and len(T) > len(head):
            add("inform_repeat", act("user", "inform_repeat", T[len(head):]), len(head))
    return out


def valid_moves(state: UserState, system_act: DialogAct, spec, rng) -> dict:
    """label -> candidate moves for the current situation."""
    c = _Ctx(state, spec, rng)
    lbl = system_act.label
    if lbl == "finish":
        return {"bye": [Move(act("user", "bye"), state.cursor)]}
    if lbl == "clarify":
        return _answer_clarify(c, system_act)
    if lbl == "compare":
        return _answer_compare(c, system_act)
    if lbl == "request_knowledge":
        return _answer_knowledge(c, system_act)
    if c.S == c.T:
        moves = _forward_moves(c)
        if lbl == "request_correction" and "inform" not in moves and "affirm" not in moves:
            moves.setdefault("affirm", [Move(act("user", "affirm"), state.cursor)])
        return moves
    if c.T.startswith(c.S):
        a = act("user", "inform", c.T[len(c.S):])
        if c.ok(a, c.T):
            return {"inform": [Move(c.knowledge(a, len(c.S)), state.cursor)]}
    fixes = corrections(c)
    if lbl == "request_correction":
        q = state.pending_correction
        if q is not None and c.ok(q, c.T):
            return {q.label: [Move(q, state.cursor)]}
        return fixes
    if fixes:
        fixes["deny"] = [Move(act("user", "deny"), state.cursor)]
    return fixes


def _answer_clarify(c: _Ctx, sys_act: DialogAct) -> dict:
    p = sys_act.payload
    cur = c.st.cursor
    if p.position_ref is not None and c.st.last_act is not None:
        try:
            out = simulate(c.st.last_act, c.parts, c.spec)
        except (tk.TrackerError, ValueError, IndexError):
            out = None
        if out is not None and out.ambiguity is not None and len(out.ambiguity.resolutions) == len(p.values):
            for i, r in enumerate(out.ambiguity.resolutions):
                if r.value == c.T:
                    ref = PositionRef("nth_occurrence", anchor=p.position_ref.anchor, n=int(p.values[i]))
                    return {"select": [Move(DialogAct("user", "select", Payload(position_ref=ref)), cur)]}
    else:
        for cand in p.values:
            if cand == c.T:
                return {"select": [Move(act("user", "select", cand), cur)]}
    return {"deny": [Move(act("user", "deny"), cur)]}


def _answer_compare(c: _Ctx, sys_act: DialogAct) -> dict:
    a, b = sys_act.payload.compared_pair
    S, T = c.S, c.T
    choice, pos = a, None
    for i in range(min(len(S), len(T))):
        if S[i] == a and T[i] == b:
            choice, pos = b, i
            break
    if pos is None:
        pos = next((i for i in range(min(len(S), len(T))) if S[i] == a), None)
    moves = {"select": [Move(act("user", "select", choice), c.st.cursor)]}
    if pos is not None and c.st.goal.per_symbol_knowledge is not None:
        k = c.knowledge(act("user", "inform", choice), pos)
        if k.payload.knowledge_snippets:
            moves["inform"] = [Move(k, c.st.cursor)]
    return moves


def _answer_knowledge(c: _Ctx, sys_act: DialogAct) -> dict:
    heard = sys_act.value
    pinyin = cached_pinyin(c.spec.resources["pinyin"])
    py = pinyin.get(heard)
    # the question is about the latest sent character that sounds like the heard one
    pos = next(
        (i for i in reversed(range(len(c.T))) if c.T[i] == heard or (py and pinyin.get(c.T[i]) == py)),
        len(c.T) - 1 if c.T else 0,
    )
    ch = c.G[min(pos, len(c.G) - 1)]
    idx = (c.st.goal.per_symbol_knowledge or {}).get(pos)
    items = cached_kb(c.spec.resources["kb"])
    if idx is not None and items[idx].character == ch:
        a = DialogAct("user", "inform", Payload((ch,), knowledge_snippets=(items[idx].text,)))
    else:
        a = act("user", "inform", ch)
    return {"inform": [Move(a, c.st.cursor)]}


def user_step(state: UserState, system_act: DialogAct, spec, rng: random.Random,
              system_view: Optional[tuple] = None) -> DialogAct:
    """Sample the user's reply and advance ``state`` in place."""
    if system_view is not None:
        state.system_view = tuple(system_view)
    state.last_system_act = system_act.label
    state.turns_elapsed += 1
    if system_act.label == "ask_repeat" and state.last_act is not None:
        return state.last_act
    moves = valid_moves(state, system_act, spec, rng)
    if not moves:
        chosen = Move(act("user", "bye"), state.cursor)
    else:
        row = spec.transition_table.get(system_act.label, {})
        labels = sorted(moves, key=lambda l: FALLBACK_ORDER.index(l) if l in FALLBACK_ORDER else 99)
        weights = [row.get(l, 0.0) for l in labels]
        if sum(weights) > 0:
            label = rng.choices(labels, weights=weights)[0]
        else:
            label = labels[0]
        options = moves[label]
        chosen = options[rng.randrange(len(options))] if len(options) > 1 else options[0]
        if label == "deny":
            fixes = corrections(_Ctx(state, spec, rng))
            crow = spec.transition_table.get("request_correction", {})
            fl = sorted(fixes, key=lambda l: FALLBACK_ORDER.index(l))
            fw = [crow.get(l, 0.0) for l in fl]
            if fl:
                pick = rng.choices(fl, weights=fw)[0] if sum(fw) > 0 else fl[0]
                opts = fixes[pick]
                chosen = Move(chosen.act, chosen.cursor, opts[rng.randrange(len(opts))].act)
    state.cursor = chosen.cursor
    if chosen.queued is not None or chosen.act.label != "deny":
        state.pending_correction = chosen.queued
    state.last_act = chosen.act
    return chosen.act
