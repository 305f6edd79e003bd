"""Rule-based system agent and the closed-loop session driver.

The policy is deterministic: the same (state, user act, config) always gives
the same reply.  Open questions to the user (clarifications, comparisons,
knowledge requests, confirmations) are kept on ``SlotState.pending`` so the
next user act can be read in context.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

from . import tracker as tk
from .config import AgentConfig
from .core import DialogAct, DialogRecord, Payload, PositionRef, SlotState, Turn
from .knowledge import DEFAULT_ALPHA, build_index, cached_kb, cached_pinyin, disambiguate
from .language import parse, realize
from .simulator import UserState, corrupt_act, sample_goal, user_step

__all__ = ["AgentConfig", "agent_step", "run_session", "default_index"]

VALUE_OPS = ("inform", "inform_overlap", "inform_repeat", "update_refer", "update_delete", "update_add", "update_part")


@lru_cache(maxsize=8)
def default_index(kb_path: str, pinyin_path: str, alpha: float = DEFAULT_ALPHA):
    return build_index(cached_kb(kb_path), alpha, cached_pinyin(pinyin_path))


# pending questions ---------------------------------------------------------


@dataclass(frozen=True)
class Clarify:
    positional: bool
    candidates: tuple  # what the user was offered
    resolutions: tuple  # SlotState per candidate
    old: SlotState
    anchor: str = ""


@dataclass(frozen=True)
class Compare:
    queue: tuple  # (position, heard symbol, alternative)


@dataclass(frozen=True)
class NeedKnowledge:
    user_act: DialogAct
    index: int  # symbol of user_act.value still unresolved
    resolved: tuple  # positions already settled by knowledge


@dataclass(frozen=True)
class Confirm:
    explicit: bool


@dataclass(frozen=True)
class Correction:
    pass


def _sys(label, *values, **kw) -> DialogAct:
    return DialogAct("system", label, Payload(values=tuple(values), **kw))


def _with(state: SlotState, pending) -> SlotState:
    return SlotState(state.segments, state.finalized, pending)


def _span(old: str, new: str) -> str:
    p = 0
    while p < min(len(old), len(new)) and old[p] == new[p]:
        p += 1
    q = 0
    while q < min(len(old), len(new)) - p and old[-1 - q] == new[-1 - q]:
        q += 1
    # a pure deletion has no new symbols to point at, so read back everything
    return new[p : len(new) - q] or new


# policy ----------------------------------------------------------------------


class _Policy:
    def __init__(self, cfg: AgentConfig, index, spec, turn: int):
        self.cfg, self.index, self.spec, self.turn = cfg, index, spec, turn
        self.pinyin = index.pinyin if index is not None else {}
        self.kb_chars = index.characters if index is not None else frozenset()

    @property
    def knows(self) -> bool:
        return self.cfg.knowledge_enabled and self.index is not None and self.spec.domain_id == "name"

    # responses after the value changed
    def confirm(self, old: SlotState, new: SlotState, span: Optional[str] = None, trusted=frozenset()):
        queue = self.compare_queue(old.value, new.value, trusted)
        if queue:
            pos, a, b = queue[0]
            return _sys("compare", compared_pair=(a, b)), _with(new, Compare(tuple(queue)))
        return self.readback(new, span if span is not None else _span(old.value, new.value))

    def readback(self, new: SlotState, span: str):
        value = new.value
        strategy = self.cfg.confirm_strategy
        if self.spec.length_ok(value):
            if strategy == "implicit_every_turn":
                return _sys("implicit_confirm", span or value), _with(new, Confirm(False))
            return _sys("explicit_confirm", value), _with(new, Confirm(True))
        if strategy == "explicit_at_end":
            return _sys("request_next"), _with(new, None)
        if not value:
            return _sys("request_next"), _with(new, None)
        return _sys("implicit_confirm", span or value), _with(new, Confirm(False))

    def compare_queue(self, old: str, new: str, trusted=frozenset()):
        """Changed symbols worth double-checking; ``trusted`` ones were settled by knowledge."""
        p = 0
        while p < min(len(old), len(new)) and old[p] == new[p]:
            p += 1
        q = 0
        while q < min(len(old), len(new)) - p and old[-1 - q] == new[-1 - q]:
            q += 1
        out = []
        groups = self.cfg.compare_groups
        for i in range(p, len(new) - q):
            ch = new[i]
            if ch in trusted:
                continue
            alt = None
            for g in groups:
                if ch in g:
                    alt = next(s for s in g if s != ch)
                    break
            if alt is None and self.knows and ch in self.kb_chars:
                py = self.pinyin.get(ch)
                alt = next((it.character for it in self.index.items
                            if it.character != ch and self.pinyin.get(it.character) == py), None)
            if alt is not None:
                out.append((i, ch, alt))
        return out

    # knowledge
    def resolve(self, a: DialogAct, already=()):
        """Rewrite a's value with knowledge.  Returns (act, settled positions) or a question."""
        if not self.knows or not a.payload.values:
            return a, ()
        v = list(a.payload.values[0])
        snippets = a.payload.knowledge_snippets
        settled = list(already)
        if snippets:
            slots = list(range(len(v)))[: len(snippets)]
            for j, snip in zip(slots, snippets):
                if j in settled:
                    continue
                ranked = disambiguate(self.index, snip)
                ch, score = ranked[0]
                if score < self.cfg.knowledge_threshold:
                    return None, NeedKnowledge(a, j, tuple(settled))
                v[j] = ch
                settled.append(j)
        for j, ch in enumerate(v):
            if j in settled or ch in self.kb_chars:
                continue
            py = self.pinyin.get(ch)
            if py and any(self.pinyin.get(c) == py for c in self.kb_chars):
                return None, NeedKnowledge(a, j, tuple(settled))
        new = DialogAct(a.speaker, a.label, Payload(("".join(v),), a.payload.position_ref, (), a.payload.compared_pair))
        return new, tuple(settled)

    # tracker dispatch
    def apply(self, state: SlotState, a: DialogAct):
        p = a.payload
        v = p.values[0] if p.values else ""
        lbl = a.label
        kw = {"turn": self.turn}
        if lbl == "inform":
            return tk.apply_inform(state, v, "auto", length_max=self.spec.length_max, **kw), ""
        if lbl == "inform_overlap":
            return tk.apply_inform(state, v, "overlap", length_max=self.spec.length_max, **kw), ""
        if lbl == "inform_repeat":
            return tk.apply_inform(state, v, "repeat", length_max=self.spec.length_max, **kw), ""
        if lbl == "update_refer":
            if p.position_ref is None:
                raise tk.TrackerError("update without a position")
            return tk.apply_replace_positional(state, p.position_ref, v, **kw), p.position_ref.anchor or ""
        if lbl == "update_delete":
            return tk.apply_delete(state, v, **kw), v
        if lbl == "update_add":
            if p.position_ref is None or p.position_ref.anchor is None:
                raise tk.TrackerError("insertion without an anchor")
            return tk.apply_insert_after(state, p.position_ref.anchor, v, **kw), p.position_ref.anchor
        if lbl == "update_part":
            return tk.apply_fuzzy_replace(state, v, **kw), ""
        raise tk.TrackerError(f"{lbl} is not a state update")

    def update(self, state: SlotState, a: DialogAct, settled=()):
        if not a.payload.values:
            return _sys("ask_repeat"), state
        base = state
        if a.label in ("inform", "inform_overlap"):
            # moving on accepts everything read back so far
            base = tk.confirm_all(_with(state, None))
            base = _with(base, None)
        else:
            base = _with(state, None)
        out, anchor = self.apply(base, a)
        trusted = frozenset(a.payload.values[0][j] for j in settled)
        if out.ambiguity is not None:
            amb = out.ambiguity
            if not self.cfg.clarify_on_ambiguity:
                new = amb.resolutions[0]
                return self.confirm(base, new, trusted=trusted)
            if amb.kind == "anchor_ambiguous":
                cands = tuple(str(i + 1) for i in range(len(amb.resolutions)))
                ref = PositionRef("whole_fragment", anchor=anchor)
                pend = Clarify(True, cands, amb.resolutions, base, anchor)
                return _sys("clarify", *cands, position_ref=ref), _with(base, pend)
            uniq = {}
            for r in amb.resolutions:
                uniq.setdefault(r.value, r)
            if len(uniq) == 1:
                return self.confirm(base, next(iter(uniq.values())), trusted=trusted)
            pend = Clarify(False, tuple(uniq), tuple(uniq.values()), base)
            return _sys("clarify", *uniq), _with(base, pend)
        new = out.new_state
        span = None
        if a.label == "inform_repeat" and new.value == base.value:
            span = new.segments[-1].symbols if new.segments else ""
        return self.confirm(base, new, span, trusted)

    # the step
    def step(self, state: SlotState, ua: DialogAct):
        pend = state.pending
        lbl = ua.label

        if isinstance(pend, NeedKnowledge) and lbl == "inform" and ua.payload.knowledge_snippets:
            ch, score = disambiguate(self.index, ua.payload.knowledge_snippets[0])[0]
            if score < self.cfg.knowledge_threshold:
                return _sys("request_knowledge", pend.user_act.value[pend.index]), state
            orig = pend.user_act
            v = list(orig.value)
            v[pend.index] = ch
            fixed = DialogAct(orig.speaker, orig.label,
                              Payload(("".join(v),), orig.payload.position_ref, orig.payload.knowledge_snippets,
                                      orig.payload.compared_pair))
            return self.value_act(_with(state, None), fixed, pend.resolved + (pend.index,))

        if isinstance(pend, Compare) and lbl in ("select", "inform") and ua.payload.values:
            pos, heard, alt = pend.queue[0]
            choice = ua.payload.values[0]
            if lbl == "inform" and ua.payload.knowledge_snippets and self.knows:
                ch, score = disambiguate(self.index, ua.payload.knowledge_snippets[0])[0]
                if score >= self.cfg.knowledge_threshold:
                    choice = ch
            if choice not in (heard, alt):
                return _sys("compare", compared_pair=(heard, alt)), state
            new = _with(state, None)
            if choice != new.value[pos]:
                ref = PositionRef("suffix_k", k=len(new.value) - pos)
                new = tk.apply_replace_positional(new, ref, choice + new.value[pos + 1 :], turn=self.turn).new_state
            rest = pend.queue[1:]
            if rest:
                _, a, b = rest[0]
                return _sys("compare", compared_pair=(a, b)), _with(new, Compare(rest))
            return self.readback(new, new.value[pos])

        if isinstance(pend, Clarify) and lbl == "select":
            res = None
            if pend.positional and ua.payload.position_ref is not None and ua.payload.position_ref.n is not None:
                n = ua.payload.position_ref.n
                if 1 <= n <= len(pend.resolutions):
                    res = pend.resolutions[n - 1]
            elif not pend.positional and ua.payload.values:
                i = self.pick(pend.candidates, ua.payload.values[0])
                res = pend.resolutions[i] if i is not None else None
            if res is None:
                return self.reask(state)
            return self.confirm(pend.old, SlotState(res.segments))

        if lbl in VALUE_OPS:
            return self.value_act(state, ua)
        if lbl == "affirm":
            value = state.value
            if self.spec.length_ok(value):
                sealed = tk.confirm_all(_with(state, None))
                if isinstance(pend, Confirm) and (pend.explicit or self.cfg.confirm_strategy == "implicit_every_turn"):
                    tk.finalize(sealed, self.spec)
                    return _sys("finish", value), sealed
                return _sys("explicit_confirm", value), _with(sealed, Confirm(True))
            return _sys("request_next"), _with(tk.confirm_all(state), None)
        if lbl == "deny":
            return _sys("request_correction"), _with(state, Correction())
        if lbl == "wait":
            return _sys("request_next"), _with(state, None)
        if lbl == "bye":
            return _sys("finish", state.value) if state.value else _sys("ask_repeat"), state
        if isinstance(pend, (Clarify, Compare)):
            return self.reask(state)
        return _sys("ask_repeat"), state

    def pick(self, candidates, said: str):
        """Index of the candidate the user named; homophones count when they single one out."""
        if said in candidates:
            return candidates.index(said)
        if not self.knows:
            return None
        sounds = lambda s: tuple(self.pinyin.get(c, c) for c in s)  # noqa: E731
        hits = [i for i, c in enumerate(candidates) if sounds(c) == sounds(said)]
        return hits[0] if len(hits) == 1 else None

    def reask(self, state):
        pend = state.pending
        if isinstance(pend, Clarify):
            ref = PositionRef("whole_fragment", anchor=pend.anchor) if pend.positional else None
            return _sys("clarify", *pend.candidates, position_ref=ref), state
        if isinstance(pend, Compare):
            _, a, b = pend.queue[0]
            return _sys("compare", compared_pair=(a, b)), state
        return _sys("ask_repeat"), state

    def value_act(self, state: SlotState, ua: DialogAct, already=()):
        fixed, info = self.resolve(ua, already)
        if fixed is None:
            q = info
            heard = q.user_act.value[q.index]
            return _sys("request_knowledge", heard), _with(state, q)
        return self.update(state, fixed, info)


def agent_step(state: SlotState, user_act: DialogAct, cfg: AgentConfig, index, spec, turn: int = 0):
    """One system move.  Returns (system act, new state); never raises on bad input."""
    if state.finalized:
        return _sys("finish", state.value), state
    policy = _Policy(cfg, index, spec, turn)
    try:
        return policy.step(state, user_act)
    except (tk.TrackerError, IndexError, ValueError):
        return _sys("ask_repeat"), state


# session --------------------------------------------------------------------


def _rngs(seed: int):
    return {k: random.Random(f"{seed}:{k}") for k in ("goal", "user", "noise", "render")}


def run_session(cfg: Optional[AgentConfig], spec, seed: int, max_turns: Optional[int] = None,
                noise=None, index=None, dialog_id: Optional[str] = None) -> DialogRecord:
    cfg = cfg or spec.agent
    max_turns = spec.max_turns if max_turns is None else max_turns
    noise = spec.noise if noise is None else noise
    if index is None and spec.domain_id == "name":
        index = default_index(spec.resources["kb"], spec.resources["pinyin"])
    ps = spec.patterns
    r = _rngs(seed)
    goal = sample_goal(spec, r["goal"])
    user = UserState(goal)
    state = SlotState()
    memo: dict = {}
    sys_act = _sys("greet")
    turns = [Turn(0, "system", realize(sys_act, ps, r["render"]), sys_act, ())]
    while len(turns) + 2 <= max_turns:
        ua = user_step(user, sys_act, spec, r["user"], state.parts)
        heard, _ = corrupt_act(ua, noise, r["noise"], memo, spec.resources.get("pinyin"))
        utt = realize(heard, ps, r["render"])
        turns.append(Turn(len(turns), "user", utt, ua))
        if ua.label == "bye":
            break
        parsed = parse(utt, ps, "user")
        sys_act, state = agent_step(state, parsed, cfg, index, spec, turn=len(turns))
        turns.append(Turn(len(turns), "system", realize(sys_act, ps, r["render"]), sys_act, state.parts))
        if sys_act.label == "finish":
            break
    final = next((t.state_after for t in reversed(turns) if t.state_after is not None), ())
    return DialogRecord(
        dialog_id=dialog_id or f"{spec.domain_id}-{seed}",
        domain_id=spec.domain_id,
        goal=goal,
        turns=tuple(turns),
        success="".join(final) == goal.full_value,
        seed=seed,
    )
