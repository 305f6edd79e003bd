import io
import json
import subprocess
import sys

import pytest

from sstod.cli import main, parse_noise
from sstod.config import NoiseConfig
from sstod.core import read_jsonl


def run(*argv, stdin=""):
    out = io.StringIO()
    code = main(list(argv), out=out, inp=io.StringIO(stdin))
    return code, out.getvalue()


def test_gen_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    c1, o1 = run("gen", "--domain", "phone", "--n", "10", "--seed", "7", "--out", str(a))
    c2, o2 = run("gen", "--domain", "phone", "--n", "10", "--seed", "7", "--out", str(b), "--workers", "2")
    assert c1 == c2 == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text(encoding="utf-8").splitlines()) == 10
    assert o1.replace(str(a), "") == o2.replace(str(b), "")
    for key in ("avg_turns", "avg_subslots", "distinct_paths", "vocab_size"):
        assert key in o1


def test_gen_name_subslots(tmp_path):
    rep = tmp_path / "r.json"
    code, _ = run("gen", "--domain", "name", "--n", "1000", "--out", str(tmp_path / "n.jsonl"), "--report", str(rep))
    assert code == 0
    assert abs(json.loads(rep.read_text())["avg_subslots"] - 2.84) <= 0.15 * 2.84


@pytest.mark.parametrize("argv", [
    ["gen", "--domain", "bogus", "--out", "x"],
    ["gen", "--domain", "phone"],
    ["gen", "--domain", "phone", "--out", "x", "--frobnicate"],
    ["gen", "--domain", "phone", "--out", "x", "--noise", "volume=3"],
    ["gen", "--domain", "phone", "--out", "x", "--n", "0"],
    [],
])
def test_usage_errors_exit_2(argv, capsys):
    assert run(*argv)[0] == 2


def test_kb_query(tmp_path):
    code, out = run("kb", "query", "--snippet", "口天吴")
    lines = out.strip().splitlines()
    assert code == 0 and len(lines) == 5
    assert lines[0] == "1\t吴\t1.0000"
    assert run("kb", "query", "--snippet", "严厉的艳")[1].splitlines()[0].split("\t")[1] == "艳"


def test_kb_errors_exit_1(tmp_path, capsys):
    empty = tmp_path / "empty.tsv"
    empty.write_text("# nothing here\n", encoding="utf-8")
    assert run("kb", "query", "--kb", str(empty), "--snippet", "口天吴")[0] == 1
    missing = tmp_path / "nope.tsv"
    assert run("kb", "query", "--kb", str(missing), "--snippet", "口天吴")[0] == 1
    assert str(missing) in capsys.readouterr().err


def test_eval_commands_are_deterministic(tmp_path):
    corpus = tmp_path / "c.jsonl"
    run("gen", "--domain", "plate", "--n", "20", "--seed", "1", "--out", str(corpus))
    pred, r1, r2 = tmp_path / "p.jsonl", tmp_path / "r1.json", tmp_path / "r2.json"
    assert run("eval-offline", "--gold", str(corpus), "--save-pred", str(pred), "--report", str(r1))[0] == 0
    assert run("eval-offline", "--gold", str(corpus), "--pred", str(pred), "--report", str(r2))[0] == 0
    assert r1.read_bytes() == r2.read_bytes()
    assert json.loads(r1.read_text())["joint_acc"] == 1.0
    o1, o2 = tmp_path / "o1.json", tmp_path / "o2.json"
    for o in (o1, o2):
        assert run("eval-online", "--domain", "name", "--n", "30", "--seed", "4", "--noise", "0.3",
                   "--report", str(o))[0] == 0
    assert o1.read_bytes() == o2.read_bytes()


def test_eval_offline_missing_gold_exit_1(tmp_path):
    assert run("eval-offline", "--gold", str(tmp_path / "none.jsonl"))[0] == 1


def test_chat_collects_a_phone_number(tmp_path):
    t = tmp_path / "t.jsonl"
    code, out = run("chat", "--domain", "phone", "--out", str(t),
                    stdin="/goal 13812345678\n幺三八\n1234\n5678\n对\n")
    assert code == 0 and "138 1234 5678" in out
    rec = next(read_jsonl(t))
    assert rec.success and rec.turns[-1].act.label == "finish"


def test_chat_clarifies_and_quits(tmp_path):
    t = tmp_path / "t.jsonl"
    code, out = run("chat", "--domain", "phone", "--out", str(t), stdin="1776\n去掉7\n/quit\n")
    assert code == 0 and "parsed update_delete" in out
    rec = next(read_jsonl(t))
    assert rec.turns[-1].act.label == "clarify" and rec.turns[-1].act.payload.values == ("1", "2")
    assert not rec.success


def test_noise_flag_forms():
    base = NoiseConfig(confusion_sets=(("1", "7"),))
    assert parse_noise("0.2", base).substitution_prob == 0.2
    n = parse_noise("substitution_prob=0.1, sticky_homophones=true", base)
    assert n.substitution_prob == 0.1 and n.sticky_homophones and n.confusion_sets == base.confusion_sets


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sstod", "kb", "query", "--snippet", "口天吴"],
                          capture_output=True, text=True, encoding="utf-8")
    assert proc.returncode == 0 and proc.stdout.startswith("1\t吴")
