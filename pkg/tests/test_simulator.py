import random
from collections import Counter
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from sstod.config import ZERO_NOISE
from sstod.core import Goal, Payload, act
from sstod.knowledge import cached_pinyin
from sstod.simulator import PROTECTED, UserState, corrupt, sample_goal, user_step, valid_moves

GOAL = Goal("13948071234", ("139", "4807", "1234"))


def _freqs(spec, make_state, sys_act, n):
    c = Counter()
    rng = random.Random(2024)
    for _ in range(n):
        c[user_step(make_state(), sys_act, spec, rng).label] += 1
    return c


def _check_row(spec, make_state, sys_act, n=10_000):
    labels = sorted(valid_moves(make_state(), sys_act, spec, random.Random(0)))
    row = spec.transition_table[sys_act.label]
    mass = {l: row.get(l, 0.0) for l in labels if row.get(l, 0.0) > 0}
    total = sum(mass.values())
    got = _freqs(spec, make_state, sys_act, n)
    assert set(got) <= set(mass)
    keys = sorted(mass)
    _, p = chisquare([got[k] for k in keys], [n * mass[k] / total for k in keys])
    assert p > 0.01, (got, mass)


def test_mid_dialog_row_matches_config(phone):
    _check_row(phone, lambda: UserState(GOAL, 1, system_view=("139",)), act("system", "implicit_confirm", "139"))


def test_full_readback_affirm_share(phone):
    spec = replace(phone, transition_table={**phone.transition_table,
                                            "explicit_confirm": {"affirm": 0.7, "inform_repeat": 0.2, "deny": 0.1}})
    _check_row(spec, lambda: UserState(GOAL, 3, system_view=GOAL.segments),
               act("system", "explicit_confirm", GOAL.full_value))


def test_readback_mismatch_yields_correction_carrying_fix(phone):
    st_ = UserState(GOAL, 2, system_view=("139", "4307"))
    moves = valid_moves(st_, act("system", "implicit_confirm", "4307"), phone, random.Random(0))
    assert "inform" not in moves and "affirm" not in moves
    carried = {m.act.value for ms in moves.values() for m in ms}
    assert "807" in carried


def test_finish_leads_to_bye(phone):
    st_ = UserState(GOAL, 3, system_view=GOAL.segments)
    assert user_step(st_, act("system", "finish", GOAL.full_value), phone, random.Random(0)).label == "bye"


def test_empty_valid_set_forces_bye(phone):
    spec = replace(phone, transition_table={**phone.transition_table, "request_next": {"inform": 1.0}})
    # nothing was sent and nothing is held, but the goal is already fully sent: no move fits
    st_ = UserState(Goal("1", ("1",)), 1, system_view=("1",))
    out = user_step(st_, act("system", "clarify", "2", "3"), spec, random.Random(0))
    assert out.label in ("deny", "bye")


def test_one_segment_partition(phone):
    spec = replace(phone, segmentation={1: 1.0})
    g = sample_goal(spec, random.Random(0))
    assert g.segments == (g.full_value,) and len(g.full_value) == 11


def test_incompatible_segmentation_raises(phone):
    with pytest.raises(ValueError):
        sample_goal(replace(phone, segmentation={12: 1.0}), random.Random(0))


@pytest.mark.parametrize("domain,target", [("phone", 2.90), ("id", 4.15), ("name", 2.84), ("plate", 2.03)])
def test_segment_means(specs, domain, target):
    rng = random.Random(7)
    mean = sum(len(sample_goal(specs[domain], rng).segments) for _ in range(10_000)) / 10_000
    assert abs(mean - target) <= 0.15 * target


@pytest.mark.parametrize("domain", ["phone", "id", "name", "plate"])
def test_goals_respect_domain(specs, domain):
    spec = specs[domain]
    rng = random.Random(1)
    for _ in range(500):
        g = sample_goal(spec, rng)
        assert spec.length_ok(g.full_value) and "".join(g.segments) == g.full_value
        assert set(g.full_value) <= spec.alphabet


def test_name_goals_carry_knowledge(name):
    from sstod.knowledge import cached_kb
    items = cached_kb(name.resources["kb"])
    g = sample_goal(name, random.Random(3))
    assert all(items[g.per_symbol_knowledge[i]].character == ch for i, ch in enumerate(g.full_value))


# ------------------------------------------------------------------ noise


def test_zero_noise_is_identity():
    p = Payload(("13333",), knowledge_snippets=("口天吴",))
    assert corrupt(p, ZERO_NOISE, random.Random(0)) == (p, [])


def test_forced_substitution(plate):
    noise = ZERO_NOISE.with_overrides(substitution_prob=1.0, confusion_sets=(("1", "E"),))
    out, log = corrupt(Payload(("京A1121",)), noise, random.Random(0))
    assert out.values == ("京AEE2E",)
    assert [(j, a, b) for _, _, j, a, b in log] == [(2, "1", "E"), (3, "1", "E"), (5, "1", "E")]


@pytest.fixture(scope="module")
def plate(specs):
    return specs["plate"]


def test_snippet_corruption_keeps_pinyin(name):
    py = cached_pinyin(name.resources["pinyin"])
    noise = ZERO_NOISE.with_overrides(knowledge_corruption_prob=1.0)
    out, log = corrupt(Payload(("艳",), knowledge_snippets=("艳丽的艳",)), noise, random.Random(4),
                       pinyin_path=name.resources["pinyin"])
    s = out.knowledge_snippets[0]
    assert s != "艳丽的艳" and s[2] == "的" and log
    assert [py[c] for c in s] == [py[c] for c in "艳丽的艳"]
    assert out.values == ("艳",)  # values only drift when homophone_values is set


def test_sticky_memo_repeats_mishearing(name):
    noise = ZERO_NOISE.with_overrides(knowledge_corruption_prob=0.5, homophone_values=True, sticky_homophones=True)
    memo = {}
    rng = random.Random(9)
    heard = {corrupt(Payload(("俊",)), noise, rng, memo, name.resources["pinyin"])[0].values[0] for _ in range(50)}
    assert len(heard) == 1


@settings(max_examples=100, deadline=None)
@given(st.text("的一个字是张吴", min_size=1, max_size=8), st.integers(0, 2**16))
def test_protected_chars_survive(s, seed):
    from sstod.knowledge import DEFAULT_PINYIN
    path = str(DEFAULT_PINYIN)
    noise = ZERO_NOISE.with_overrides(knowledge_corruption_prob=1.0, homophone_values=True)
    out, _ = corrupt(Payload((s,), knowledge_snippets=(s,)), noise, random.Random(seed), pinyin_path=path)
    for i, ch in enumerate(s):
        if ch in PROTECTED:
            assert out.values[0][i] == ch and out.knowledge_snippets[0][i] == ch


# ------------------------------------------------------------ whole users


def test_user_is_deterministic(phone):
    def run(seed):
        rng = random.Random(seed)
        st_ = UserState(GOAL)
        seq = [user_step(st_, act("system", "greet"), phone, rng)]
        seq.append(user_step(st_, act("system", "implicit_confirm", "139"), phone, rng, ("139",)))
        return seq
    assert run(5) == run(5)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_sampled_act_is_always_valid(seed):
    """Drive user and agent directly and check every sampled act against the masked set."""
    from copy import deepcopy

    from sstod.agent import agent_step
    from sstod.config import load_domain
    from sstod.core import SlotState

    spec = load_domain(["phone", "plate", "id"][seed % 3])
    rng = random.Random(seed)
    user = UserState(sample_goal(spec, rng))
    state, sys_act = SlotState(), act("system", "greet")
    for turn in range(30):
        before = deepcopy(user)
        before.system_view = state.parts
        labels = set(valid_moves(before, sys_act, spec, random.Random(0)))
        ua = user_step(user, sys_act, spec, rng, state.parts)
        if sys_act.label != "ask_repeat":
            assert ua.label in labels or (not labels and ua.label == "bye")
        assert 0 <= user.cursor <= len(user.goal.segments)
        if ua.label == "bye":
            break
        sys_act, state = agent_step(state, ua, spec.agent, None, spec, turn)
