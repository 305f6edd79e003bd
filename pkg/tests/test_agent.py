import dataclasses

import pytest
from hypothesis import given, settings, strategies as st

from sstod.agent import Clarify, agent_step, default_index, run_session
from sstod.config import ZERO_NOISE
from sstod.core import DialogAct, Payload, PositionRef, SlotState, act, validate_record


@pytest.fixture(scope="module")
def index(name):
    return default_index(name.resources["kb"], name.resources["pinyin"])


def step(spec, state, ua, index=None, cfg=None):
    return agent_step(state, ua, cfg or spec.agent, index, spec, turn=1)


def test_knowledge_overrides_homophone(name, index):
    ua = DialogAct("user", "inform", Payload(("武",), knowledge_snippets=("口天吴",)))
    sys_act, state = step(name, SlotState(), ua, index)
    assert state.parts == ("吴",)
    assert sys_act.label == "implicit_confirm" and sys_act.value == "吴"


def test_low_score_asks_for_knowledge(name, index):
    ua = DialogAct("user", "inform", Payload(("武",), knowledge_snippets=("哈哈哈",)))
    sys_act, state = step(name, SlotState(), ua, index)
    assert sys_act.label == "request_knowledge" and state.parts == ()
    sys_act, state = step(name, state, DialogAct("user", "inform", Payload(("武",), knowledge_snippets=("口天吴",))),
                          index)
    assert state.parts == ("吴",)


def test_knowledge_off_keeps_heard_char(name, index):
    cfg = dataclasses.replace(name.agent, knowledge_enabled=False)
    ua = DialogAct("user", "inform", Payload(("武",), knowledge_snippets=("口天吴",)))
    _, state = step(name, SlotState(), ua, index, cfg)
    assert state.parts == ("武",)


def test_ambiguous_delete_asks_which(phone):
    sys_act, state = step(phone, SlotState.of("1776"), act("user", "update_delete", "7"))
    assert sys_act.label == "clarify" and sys_act.payload.values == ("1", "2")
    assert isinstance(state.pending, Clarify) and state.value == "1776"
    pick = DialogAct("user", "select", Payload(position_ref=PositionRef("nth_occurrence", anchor="7", n=2)))
    _, state = step(phone, state, pick)
    assert state.value == "176"


def test_overlap_ambiguity_offers_both_values(phone):
    sys_act, state = step(phone, SlotState.of("136"), act("user", "inform", "361555"))
    assert sys_act.label == "clarify" and set(sys_act.payload.values) == {"1361555", "136361555"}
    _, state = step(phone, state, act("user", "select", "1361555"))
    assert state.value == "1361555"


def test_homophone_select_resolves_clarify(name, index):
    pend = Clarify(False, ("王俊", "王俊俊"), (SlotState.of("王", "俊"), SlotState.of("王", "俊", "俊")),
                   SlotState.of("王", "俊"))
    state = SlotState(SlotState.of("王", "俊").segments, False, pend)
    _, state = step(name, state, act("user", "select", "汪俊俊"), index)
    assert state.value == "王俊俊"


def test_full_number_read_back_then_finish(phone):
    state = SlotState.of("138", "1234")
    sys_act, state = step(phone, state, act("user", "inform", "5678"))
    assert sys_act.label == "explicit_confirm" and sys_act.value == "13812345678"
    sys_act, state = step(phone, state, act("user", "affirm"))
    assert sys_act.label == "finish" and state.finalized


def test_unknown_input_asks_repeat(phone):
    sys_act, state = step(phone, SlotState.of("138"), act("user", "unknown"))
    assert sys_act.label == "ask_repeat" and state.parts == ("138",)


def test_compare_ignores_unrelated_answer(plate):
    sys_act, state = step(plate, SlotState.of("京A"), act("user", "inform", "1"))
    assert sys_act.label == "compare" and set(sys_act.payload.compared_pair) == {"1", "E"}
    again, state2 = step(plate, state, act("user", "select", "7"))
    assert again.label == "compare" and state2.value == state.value
    _, state3 = step(plate, state, act("user", "select", "E"))
    assert state3.value == "京AE"


@pytest.fixture(scope="module")
def plate(specs):
    return specs["plate"]


user_acts = st.one_of(
    st.builds(lambda l, v: act("user", l, v), st.sampled_from(["inform", "inform_repeat", "update_part", "update_delete",
                                                                 "inform_overlap", "select"]),
              st.text("0123456789", min_size=1, max_size=5)),
    st.sampled_from([act("user", "affirm"), act("user", "deny"), act("user", "wait"), act("user", "unknown")]),
    st.builds(lambda k, v: act("user", "update_refer", v, position_ref=PositionRef("suffix_k", k=k)),
              st.integers(1, 4), st.text("0123456789", min_size=1, max_size=4)),
)


@settings(max_examples=150, deadline=None)
@given(st.lists(user_acts, min_size=1, max_size=25))
def test_policy_is_deterministic_and_never_seals_bad_values(acts):
    from sstod.config import load_domain
    spec = load_domain("phone")

    def run():
        state, out = SlotState(), []
        for ua in acts:
            sys_act, state = step(spec, state, ua)
            out.append((sys_act, state.parts))
            if sys_act.label == "finish":
                assert state.finalized and spec.length_ok(state.value)
                break
        return out

    assert run() == run()


@pytest.mark.parametrize("domain", ["phone", "id", "name", "plate"])
def test_zero_noise_sessions_succeed(specs, domain):
    for seed in range(60):
        rec = run_session(None, specs[domain], seed, noise=ZERO_NOISE)
        assert rec.success, seed
        assert validate_record(rec, specs[domain]) == []


def test_turn_limit(phone):
    three = next(s for s in range(100) if len(run_session(None, phone, s).goal.segments) == 3)
    rec = run_session(None, phone, three, max_turns=2)
    assert not rec.success and len(rec.turns) <= 2
    assert not run_session(None, phone, three, max_turns=1).success


def test_sessions_are_reproducible(name):
    assert run_session(None, name, 17) == run_session(None, name, 17)


def test_knowledge_never_hurts_on_pinyin_noise(name):
    noise = name.noise.with_overrides(knowledge_corruption_prob=0.3)
    off = dataclasses.replace(name.agent, knowledge_enabled=False)
    on_ok = sum(run_session(None, name, s, noise=noise).success for s in range(150))
    off_ok = sum(run_session(off, name, s, noise=noise).success for s in range(150))
    assert on_ok >= off_ok
