"""Command-line entry point: ``sstod gen | eval-offline | eval-online | chat | kb query``.

Exit codes: 0 on success, 2 on usage or config errors, 1 on runtime and I/O
errors.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import random
import sys
from typing import Optional, Sequence

from .agent import agent_step, default_index
from .config import ConfigError, NoiseConfig, load_domain
from .core import DOMAINS, DialogRecord, Goal, SlotState, Turn, act, dumps_record, read_jsonl, write_jsonl
from .evalgen import (CorpusError, EvalError, corpus_stats, eval_offline, eval_online, generate_corpus,
                      read_predictions, replay_agent, write_predictions)
from .knowledge import DEFAULT_ALPHA, DEFAULT_KB, DEFAULT_PINYIN, KnowledgeError, build_index, disambiguate, \
    load_kb, load_pinyin
from .language import parse, realize
from .simulator import corrupt_act


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ helpers


def parse_noise(text: Optional[str], base: NoiseConfig) -> NoiseConfig:
    """``0.1`` sets both noise rates; ``key=val,key=val`` overrides single fields."""
    if text is None:
        return base
    try:
        p = float(text)
    except ValueError:
        pass
    else:
        try:
            return base.with_overrides(substitution_prob=p, knowledge_corruption_prob=p)
        except ValueError as e:
            raise UsageError(f"--noise: {e}") from None
    kw = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        key, sep, val = item.partition("=")
        key = key.strip()
        if not sep or key not in NoiseConfig.__dataclass_fields__ or key == "confusion_sets":
            raise UsageError(f"--noise: cannot set {item!r}")
        val = val.strip()
        if key in ("homophone_values", "sticky_homophones"):
            if val.lower() not in ("true", "false", "1", "0"):
                raise UsageError(f"--noise: {key} takes true or false")
            kw[key] = val.lower() in ("true", "1")
        else:
            try:
                kw[key] = float(val)
            except ValueError:
                raise UsageError(f"--noise: {key} needs a number, got {val!r}") from None
    try:
        return base.with_overrides(**kw)
    except ValueError as e:
        raise UsageError(f"--noise: {e}") from None


def _spec(args):
    return load_domain(args.domain, args.config)


def _index_for(spec, kb: Optional[str] = None):
    if spec.domain_id != "name":
        return None
    if kb is None:
        return default_index(spec.resources["kb"], spec.resources["pinyin"])
    return build_index(load_kb(kb), DEFAULT_ALPHA, load_pinyin(spec.resources["pinyin"]))


def _write_report(path: Optional[str], report: dict) -> None:
    if path:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(report, fh, ensure_ascii=False, indent=2, sort_keys=True)
            fh.write("\n")


def _fmt(v) -> str:
    return f"{v:.4f}" if isinstance(v, float) else str(v)


def _print_report(title: str, d: dict, out) -> None:
    print(title, file=out)
    for k, v in d.items():
        print(f"  {k}: {_fmt(v)}", file=out)


# ----------------------------------------------------------------- commands


def cmd_gen(args, out) -> int:
    spec = _spec(args)
    noise = parse_noise(args.noise, spec.noise)
    recs = list(generate_corpus(spec, None, args.n, args.seed, noise, args.max_turns, args.workers))
    write_jsonl(args.out, recs)
    stats = corpus_stats(recs).to_dict()
    _print_report(f"wrote {len(recs)} dialogs to {args.out}", stats, out)
    _write_report(args.report, stats)
    return 0


def cmd_eval_offline(args, out) -> int:
    gold = list(read_jsonl(args.gold))
    if not gold:
        raise EvalError(f"{args.gold}: empty corpus")
    if args.pred:
        preds = read_predictions(args.pred)
    else:
        domain = args.domain or gold[0].domain_id
        spec = load_domain(domain, args.config)
        preds = replay_agent(gold, spec)
        if args.save_pred:
            write_predictions(args.save_pred, preds)
    rep = eval_offline(preds, gold).to_dict()
    _print_report("offline evaluation", rep, out)
    _write_report(args.report, rep)
    return 0


def cmd_eval_online(args, out) -> int:
    spec = _spec(args)
    cfg = spec.agent
    if args.no_knowledge:
        cfg = dataclasses.replace(cfg, knowledge_enabled=False)
    noise = parse_noise(args.noise, spec.noise)
    rep = eval_online(cfg, spec, args.n, args.max_turns, args.seed, noise, args.workers).to_dict()
    _print_report(f"online evaluation ({spec.domain_id})", rep, out)
    _write_report(args.report, rep)
    return 0


def cmd_kb(args, out) -> int:
    items = load_kb(args.kb)
    index = build_index(items, args.alpha, load_pinyin(args.pinyin))
    for rank, (ch, s) in enumerate(disambiguate(index, args.snippet)[:5], 1):
        print(f"{rank}\t{ch}\t{s:.4f}", file=out)
    return 0


CHAT_HELP = "commands: /goal <value> declares your target value, /quit ends the session"


def cmd_chat(args, out, inp) -> int:
    spec = _spec(args)
    noise = parse_noise(args.noise, NoiseConfig())
    index = _index_for(spec, args.kb)
    ps, cfg = spec.patterns, spec.agent
    rng_noise, rng_render = random.Random(f"{args.seed}:noise"), random.Random(f"{args.seed}:render")
    memo: dict = {}
    goal_value = ""
    state = SlotState()
    sys_act = act("system", "greet")
    turns = [Turn(0, "system", realize(sys_act, ps, rng_render), sys_act, ())]
    print(CHAT_HELP, file=out)
    print(f"system: {turns[0].utterance}", file=out)
    for line in inp:
        text = line.strip()
        if not text:
            continue
        if text == "/quit":
            break
        if text.startswith("/goal"):
            goal_value = text[len("/goal"):].strip()
            print(f"  [goal set to {goal_value!r}]", file=out)
            continue
        ua = parse(text, ps, "user")
        heard, _ = corrupt_act(ua, noise, rng_noise, memo, spec.resources.get("pinyin"))
        turns.append(Turn(len(turns), "user", text, ua))
        sys_act, state = agent_step(state, heard, cfg, index, spec, turn=len(turns))
        reply = realize(sys_act, ps, rng_render)
        turns.append(Turn(len(turns), "system", reply, sys_act, state.parts))
        print(f"system: {reply}", file=out)
        print(f"  [parsed {heard.label} {list(heard.payload.values)} -> state {list(state.parts)}]", file=out)
        if sys_act.label == "finish":
            break
    final = "".join(state.parts)
    goal = Goal(goal_value, (goal_value,) if goal_value else ())
    rec = DialogRecord(f"chat-{spec.domain_id}-{args.seed}", spec.domain_id, goal, tuple(turns),
                       bool(goal_value) and final == goal_value, args.seed)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(dumps_record(rec) + "\n")
    print(f"session over; collected {final!r}, success={rec.success}", file=out)
    return 0


# ------------------------------------------------------------------- parser


def _common(p, domain_required=True):
    p.add_argument("--domain", required=domain_required, help=f"one of {', '.join(DOMAINS)}")
    p.add_argument("--config", help="domain config file or directory (default: $SSTOD_CONFIG, then bundled)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sstod", description="Sub-slot dialog generation and evaluation.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an annotated corpus")
    _common(g)
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--noise", help="a rate for both noise channels, or key=val,... overrides")
    g.add_argument("--out", required=True)
    g.add_argument("--max-turns", type=int)
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--report", help="also write the summary as JSON")

    o = sub.add_parser("eval-offline", help="score per-turn predicted states against a gold corpus")
    _common(o, domain_required=False)
    o.add_argument("--gold", required=True)
    o.add_argument("--pred", help="predictions JSONL; omitted means replay the rule-based agent")
    o.add_argument("--save-pred", help="write the replayed predictions here")
    o.add_argument("--report")

    e = sub.add_parser("eval-online", help="run the agent against the user simulator")
    _common(e)
    e.add_argument("--n", type=int, default=100)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--noise")
    e.add_argument("--max-turns", type=int)
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--no-knowledge", action="store_true")
    e.add_argument("--report")

    c = sub.add_parser("chat", help="talk to the agent in the terminal")
    _common(c)
    c.add_argument("--kb", help="knowledge base TSV (name domain)")
    c.add_argument("--noise", help="noise applied to what you type (default 0)")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", help="save the transcript as a one-line JSONL record")

    k = sub.add_parser("kb", help="knowledge base tools")
    ksub = k.add_subparsers(dest="kb_command", required=True)
    q = ksub.add_parser("query", help="rank characters for a knowledge snippet")
    q.add_argument("--kb", default=str(DEFAULT_KB))
    q.add_argument("--pinyin", default=str(DEFAULT_PINYIN))
    q.add_argument("--snippet", required=True)
    q.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    return ap


def main(argv: Optional[Sequence[str]] = None, out=None, inp=None) -> int:
    out = out or sys.stdout
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    for name in ("n", "workers"):
        if getattr(args, name, 1) < 1:
            ap.print_usage(sys.stderr)
            print(f"sstod: error: --{name} must be at least 1", file=sys.stderr)
            return 2
    try:
        if args.command == "gen":
            return cmd_gen(args, out)
        if args.command == "eval-offline":
            return cmd_eval_offline(args, out)
        if args.command == "eval-online":
            return cmd_eval_online(args, out)
        if args.command == "chat":
            return cmd_chat(args, out, inp or sys.stdin)
        return cmd_kb(args, out)
    except (UsageError, ConfigError) as e:
        print(f"sstod: error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"sstod: error: {e.filename or ''}: {e.strerror or e}", file=sys.stderr)
        return 1
    except (KnowledgeError, EvalError, CorpusError, ValueError, KeyError) as e:
        print(f"sstod: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
