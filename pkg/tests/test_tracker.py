import random

import pytest
from hypothesis import given, settings, strategies as st

from oracles import fuzzy_oracle, lev_oracle, overlap_oracle
from sstod import tracker as tk
from sstod.core import PositionRef, SlotState


# --------------------------------------------------------------- overlap


@pytest.mark.parametrize("a,b,k", [("181", "1814104", 3), ("136", "361555", 2), ("123", "456", 0), ("", "1", 0)])
def test_overlap_examples(a, b, k):
    assert tk.detect_overlap(a, b) == k


def test_overlap_matches_brute_force():
    rng = random.Random(11)
    for _ in range(10_000):
        a = "".join(rng.choice("012") for _ in range(rng.randint(0, 12)))
        b = "".join(rng.choice("012") for _ in range(rng.randint(0, 12)))
        assert tk.detect_overlap(a, b) == overlap_oracle(a, b), (a, b)


@given(st.text("ab", max_size=15), st.text("ab", max_size=15))
def test_overlap_is_maximal(a, b):
    k = tk.detect_overlap(a, b)
    assert a[len(a) - k:] == b[:k]
    assert all(a[len(a) - j:] != b[:j] for j in range(k + 1, min(len(a), len(b)) + 1))


# ---------------------------------------------------------------- inform


def test_inform_overlap_merges():
    out = tk.apply_inform(SlotState.of("181"), "1814104", "overlap", length_max=11)
    assert out.applied and out.new_state.parts == ("1814104",)


def test_inform_repeat_confirms():
    out = tk.apply_inform(SlotState.of("7127"), "7127", "repeat", length_max=11)
    assert out.new_state.parts == ("7127",) and out.new_state.segments[0].confirmed


def test_inform_auto_both_feasible_is_ambiguous():
    out = tk.apply_inform(SlotState.of("136"), "361555", "auto", length_max=11)
    assert not out.applied and out.ambiguity.kind == "overlap_ambiguous"
    assert {r.value for r in out.ambiguity.resolutions} == {"1361555", "136361555"}
    assert out.new_state.parts == ("136",)


def test_inform_auto_one_feasible_applies():
    out = tk.apply_inform(SlotState.of("13612"), "12345678", "auto", length_max=11)
    # appending would overshoot 11 digits, so only the merge is possible
    assert out.applied and out.new_state.value == "13612345678"


def test_inform_none_appends():
    out = tk.apply_inform(SlotState.of("181"), "1814104", "none", length_max=11)
    assert out.new_state.parts == ("181", "1814104")


def test_sealed_state_rejects_updates(phone):
    s = SlotState.of("138", "1234", "5678", confirmed=True)
    assert tk.finalize(s, phone) == "13812345678"
    with pytest.raises(tk.TrackerError, match="state sealed"):
        tk.apply_inform(s, "1", "none", length_max=11)
    with pytest.raises(tk.TrackerError):
        tk.finalize(s, phone)


# ------------------------------------------------------------ positional


@pytest.mark.parametrize("value,ref,new,expect", [
    ("13347773029", PositionRef("suffix_k", k=4), "5664", "13347775664"),
    ("1820", PositionRef("suffix_k", k=2), "60", "1860"),
    ("1820", PositionRef("prefix_k", k=1), "7", "7820"),
])
def test_replace_positional(value, ref, new, expect):
    assert tk.apply_replace_positional(SlotState.of(value), ref, new).new_state.value == expect


def test_replace_positional_errors():
    with pytest.raises(tk.TrackerError, match="span out of range"):
        tk.apply_replace_positional(SlotState.of("123"), PositionRef("suffix_k", k=5), "55555")
    with pytest.raises(tk.TrackerError, match="span/value length mismatch"):
        tk.apply_replace_positional(SlotState.of("123"), PositionRef("suffix_k", k=2), "555")


def test_replace_keeps_cut_offsets():
    out = tk.apply_replace_positional(SlotState.of("133", "4777", "3029"), PositionRef("suffix_k", k=4), "5664")
    assert out.new_state.parts == ("133", "4777", "5664")


def test_whole_fragment_ambiguous_anchor():
    out = tk.apply_replace_positional(SlotState.of("1771"), PositionRef("whole_fragment", anchor="7"), "8")
    assert out.ambiguity.kind == "anchor_ambiguous"
    assert {r.value for r in out.ambiguity.resolutions} == {"1871", "1781"}


# ------------------------------------------------------- delete / insert


def test_delete_examples():
    assert tk.apply_delete(SlotState.of("1726"), "7").new_state.value == "126"
    amb = tk.apply_delete(SlotState.of("1776"), "7").ambiguity
    assert amb.kind == "anchor_ambiguous" and tuple(amb.candidates) == (1, 2)
    with pytest.raises(tk.TrackerError, match="symbol not found"):
        tk.apply_delete(SlotState.of("126"), "9")


def test_insert_examples():
    assert tk.apply_insert_after(SlotState.of("1920"), "9", "4").new_state.value == "19420"
    amb = tk.apply_insert_after(SlotState.of("1992"), "9", "4").ambiguity
    assert amb.kind == "anchor_ambiguous" and tuple(amb.candidates) == (1, 2)
    with pytest.raises(tk.TrackerError, match="symbol not found"):
        tk.apply_insert_after(SlotState.of("120"), "9", "4")


@given(st.text("0123", min_size=1, max_size=10), st.data())
def test_insert_then_delete_restores(value, data):
    anchors = [c for c in set(value) if value.count(c) == 1]
    fresh = "5"
    if not anchors:
        return
    a = data.draw(st.sampled_from(sorted(anchors)))
    mid = tk.apply_insert_after(SlotState.of(value), a, fresh).new_state
    assert tk.apply_delete(mid, fresh).new_state.value == value


# ----------------------------------------------------------------- fuzzy


@pytest.mark.parametrize("value,c,expect", [
    ("13347773029", "529", "13347773529"),
    ("1394307", "807", "1394807"),
])
def test_fuzzy_examples(value, c, expect):
    out = tk.apply_fuzzy_replace(SlotState.of(value), c)
    assert out.applied and out.new_state.value == expect


def test_fuzzy_no_similar_fragment():
    out = tk.apply_fuzzy_replace(SlotState.of("111"), "999")
    assert not out.applied and out.ambiguity.kind == "fragment_ambiguous"
    assert len(out.ambiguity.candidates) >= 2


def test_fuzzy_matches_brute_force():
    rng = random.Random(5)
    for _ in range(10_000):
        value = "".join(rng.choice("0123") for _ in range(rng.randint(1, 20)))
        c = "".join(rng.choice("0123") for _ in range(rng.randint(1, 5)))
        want, amb = fuzzy_oracle(value, c)
        if want is None:
            with pytest.raises(tk.TrackerError):
                tk.apply_fuzzy_replace(SlotState.of(value), c)
            continue
        out = tk.apply_fuzzy_replace(SlotState.of(value), c)
        assert (out.ambiguity is not None) == amb, (value, c)
        assert out.new_state.value == want, (value, c)


@given(st.text("abc", max_size=8), st.text("abc", max_size=8))
def test_levenshtein_matches_recursion(a, b):
    assert tk.levenshtein(a, b) == lev_oracle(a, b)


# ------------------------------------------------------ general invariants


ops = st.sampled_from(["inform", "delete", "fuzzy", "suffix"])


@settings(max_examples=300)
@given(st.lists(st.text("0123", min_size=1, max_size=4), min_size=1, max_size=4), ops, st.text("0123", min_size=1, max_size=3))
def test_unapplied_outcomes_leave_state_alone(parts, op, v):
    s = SlotState.of(*parts)
    before = (s.parts, tuple(x.confirmed for x in s.segments))
    try:
        if op == "inform":
            out = tk.apply_inform(s, v, "auto", length_max=11)
        elif op == "delete":
            out = tk.apply_delete(s, v[0])
        elif op == "fuzzy":
            out = tk.apply_fuzzy_replace(s, v)
        else:
            out = tk.apply_replace_positional(s, PositionRef("suffix_k", k=len(v)), v)
    except tk.TrackerError:
        return
    assert (s.parts, tuple(x.confirmed for x in s.segments)) == before
    if out.ambiguity is not None:
        assert not out.applied and out.new_state.parts == s.parts
        assert len(out.ambiguity.candidates) >= 2


def test_finalize_errors(phone):
    with pytest.raises(tk.TrackerError, match="incomplete or overlong value"):
        tk.finalize(SlotState.of("123456789", confirmed=True), phone)
    s = SlotState.of("1381234", confirmed=True)
    s = SlotState(s.segments + SlotState.of("5678").segments)
    with pytest.raises(tk.TrackerError, match="unconfirmed segments remain"):
        tk.finalize(s, phone)
