"""Corpus generation and the evaluation harness.

Offline evaluation scores per-turn predicted states against the gold
``state_after`` of every system turn.  Online evaluation runs the agent
against the user simulator.  Both are deterministic given their seeds and do
not depend on the number of worker processes.
"""
from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterable, Iterator, Optional, Sequence

from .agent import agent_step, default_index, run_session
from .config import AgentConfig, NoiseConfig
from .core import DialogRecord, SlotState, validate_record
from .language import parse


class EvalError(ValueError):
    pass


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class OfflineReport:
    joint_acc: float
    slot_acc: float
    dialog_succ: float
    n_turns: int
    n_dialogs: int

    def __post_init__(self):
        if self.joint_acc > self.slot_acc + 1e-12:
            raise EvalError(f"joint_acc {self.joint_acc} exceeds slot_acc {self.slot_acc}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class OnlineReport:
    dialog_succ: float
    avg_turn: Optional[float]  # over successful dialogs; None when there are none
    n_dialogs: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CorpusStats:
    n_dialogs: int
    avg_turns: float
    avg_subslots: float
    distinct_paths: int
    vocab_size: int
    success_rate: float

    def to_dict(self) -> dict:
        return asdict(self)


# ------------------------------------------------------------------ sessions

_worker_ctx: dict = {}


def _init_worker(spec, cfg, noise, max_turns):
    _worker_ctx.update(spec=spec, cfg=cfg, noise=noise, max_turns=max_turns)


def _one(seed: int) -> DialogRecord:
    c = _worker_ctx
    return run_session(c["cfg"], c["spec"], seed, max_turns=c["max_turns"], noise=c["noise"])


def _sessions(spec, cfg, seeds: Sequence[int], noise, max_turns, workers: int) -> Iterator[DialogRecord]:
    if spec.domain_id == "name":
        default_index(spec.resources["kb"], spec.resources["pinyin"])  # warm the cache before forking
    if workers <= 1:
        _init_worker(spec, cfg, noise, max_turns)
        for s in seeds:
            yield _one(s)
        return
    chunk = max(1, len(seeds) // (workers * 8))
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(spec, cfg, noise, max_turns)) as ex:
        yield from ex.map(_one, seeds, chunksize=chunk)


def generate_corpus(spec, cfg: Optional[AgentConfig] = None, n: int = 1, seed: int = 0,
                    noise: Optional[NoiseConfig] = None, max_turns: Optional[int] = None,
                    workers: int = 1) -> Iterator[DialogRecord]:
    """Yield n validated records with seeds seed, seed+1, ..."""
    if n < 1:
        raise CorpusError(f"n must be at least 1, got {n}")
    cfg = cfg or spec.agent
    for rec in _sessions(spec, cfg, range(seed, seed + n), noise, max_turns, workers):
        bad = validate_record(rec, spec)
        if bad:
            raise CorpusError(f"{rec.dialog_id}: " + "; ".join(map(str, bad)))
        yield rec


def corpus_stats(records: Iterable[DialogRecord]) -> CorpusStats:
    n = turns = segs = ok = 0
    paths, vocab = set(), set()
    for r in records:
        n += 1
        turns += len(r.turns)
        segs += len(r.goal.segments)
        ok += r.success
        paths.add(r.path)
        for t in r.turns:
            vocab.update(c for c in t.utterance if not c.isspace())
    if n == 0:
        raise CorpusError("empty corpus")
    return CorpusStats(n, turns / n, segs / n, len(paths), len(vocab), ok / n)


def split_of(dialog_id: str) -> str:
    """Deterministic 7:1:2 train/dev/test assignment from a hash of the id."""
    b = int(hashlib.sha256(dialog_id.encode("utf-8")).hexdigest(), 16) % 10
    return "train" if b < 7 else ("dev" if b == 7 else "test")


# ---------------------------------------------------------- offline scoring


def _align(pred, gold: tuple[str, ...]) -> tuple[str, ...]:
    """A bare predicted string is cut at the gold boundaries; any overflow is one extra segment."""
    if not isinstance(pred, str):
        return tuple(pred)
    out, i = [], 0
    for g in gold:
        if i >= len(pred):
            break
        out.append(pred[i : i + len(g)])
        i += len(g)
    if i < len(pred):
        out.append(pred[i:])
    return tuple(out)


def turn_scores(pred, gold: tuple[str, ...]) -> tuple[int, float]:
    """(joint hit, fraction of index-aligned sub-slots right) for one turn."""
    p = _align(pred, gold)
    joint = int(p == gold)
    width = max(len(p), len(gold))
    if width == 0:
        return joint, 1.0
    right = sum(1 for a, b in zip(p, gold) if a == b)
    return joint, right / width


def eval_offline(predictions: dict, gold: Iterable[DialogRecord]) -> OfflineReport:
    """Score per-system-turn predicted states.

    ``predictions`` maps dialog_id to a list with one entry per system turn;
    an entry is either a list of segment strings or a bare string.  Slot
    accuracy is averaged per turn, so a turn with every sub-slot right always
    counts at least as much toward slot accuracy as toward joint accuracy.
    """
    n_turns = joint = n_dialogs = succ = 0
    slot = 0.0
    for rec in gold:
        states = [t.state_after for t in rec.turns if t.speaker == "system"]
        if rec.dialog_id not in predictions:
            raise EvalError(f"no predictions for dialog {rec.dialog_id}")
        pred = predictions[rec.dialog_id]
        if len(pred) != len(states):
            raise EvalError(f"dialog {rec.dialog_id}: {len(pred)} predicted states for {len(states)} system turns")
        for p, g in zip(pred, states):
            j, s = turn_scores(p, tuple(g))
            joint += j
            slot += s
            n_turns += 1
        n_dialogs += 1
        final = pred[-1] if pred else ""
        succ += ("".join(final) if not isinstance(final, str) else final) == rec.goal.full_value
    if n_dialogs == 0:
        raise EvalError("empty gold corpus")
    if n_turns == 0:
        return OfflineReport(1.0, 1.0, succ / n_dialogs, 0, n_dialogs)
    return OfflineReport(joint / n_turns, slot / n_turns, succ / n_dialogs, n_turns, n_dialogs)


def replay_agent(records: Iterable[DialogRecord], spec, cfg: Optional[AgentConfig] = None) -> dict:
    """Run the agent over each record's user utterances; returns predictions for eval_offline."""
    cfg = cfg or spec.agent
    index = default_index(spec.resources["kb"], spec.resources["pinyin"]) if spec.domain_id == "name" else None
    out = {}
    for rec in records:
        state, states = SlotState(), [()]
        for t in rec.turns[1:]:
            if t.speaker != "user":
                continue
            if t.act.label == "bye":
                break
            ua = parse(t.utterance, spec.patterns, "user")
            _, state = agent_step(state, ua, cfg, index, spec, turn=t.turn_index + 1)
            states.append(state.parts)
        out[rec.dialog_id] = [list(s) for s in states]
    return out


def read_predictions(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                out[d["dialog_id"]] = d["states"]
            except (ValueError, KeyError, TypeError) as e:
                raise EvalError(f"{path}:{lineno}: bad prediction line ({e})") from None
    return out


def write_predictions(path, predictions: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for did, states in predictions.items():
            fh.write(json.dumps({"dialog_id": did, "states": states}, ensure_ascii=False) + "\n")


# ----------------------------------------------------------- online scoring


def eval_online(cfg: Optional[AgentConfig], spec, n: int, max_turns: Optional[int] = None, seed: int = 0,
                noise: Optional[NoiseConfig] = None, workers: int = 1) -> OnlineReport:
    if n < 1:
        raise EvalError(f"n must be at least 1, got {n}")
    cfg = cfg or spec.agent
    ok = turns = 0
    for rec in _sessions(spec, cfg, range(seed, seed + n), noise, max_turns, workers):
        if rec.success:
            ok += 1
            turns += len(rec.turns)
    return OnlineReport(ok / n, turns / ok if ok else None, n)
