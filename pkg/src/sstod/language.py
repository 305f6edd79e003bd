"""One template grammar per domain, used in both directions.

``realize`` fills a template's placeholders from an act's payload; ``parse``
compiles every template into an anchored regex and reads the payload back.

Placeholders and the payload feature each one stands for::

    <value>   a symbol sequence              -> values
    <cands>   candidates joined by 还是       -> values (two or more)
    <k>       knowledge snippets             -> knowledge_snippets
    <vk>      "张是弓长张，艳是艳丽的艳"         -> values + knowledge_snippets
    <pos>     前3位 / 最后4位                  -> position_ref suffix_k / prefix_k
    <anchor>  a symbol sequence              -> position_ref whole_fragment
    <anchor>+<n>                             -> position_ref nth_occurrence
    <after>   a symbol sequence              -> position_ref after_anchor
    <a> <b>   two single symbols             -> compared_pair

A template is eligible for an act exactly when its feature set equals the
act payload's feature set.
"""
from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from typing import Optional

from .core import DialogAct, Payload, PositionRef
from .knowledge import extract_snippets


class TemplateError(ValueError):
    pass


PLACEHOLDERS = ("value", "cands", "k", "vk", "pos", "anchor", "after", "n", "a", "b")
_PH = re.compile(r"<([a-z]+)>")
_FEATURES = {
    "value": {"value"},
    "cands": {"value"},
    "k": {"k"},
    "vk": {"value", "k"},
    "pos": {"pos"},
    "anchor": {"anchor"},
    "after": {"after"},
    "n": {"n"},
    "a": {"pair"},
    "b": {"pair"},
}
_REF_FEATURES = {
    "suffix_k": {"pos"},
    "prefix_k": {"pos"},
    "whole_fragment": {"anchor"},
    "after_anchor": {"after"},
    "nth_occurrence": {"anchor", "n"},
}
CAND_SEP = "还是"
QUANT = re.compile(r"^([3-9])个(.)$")


@dataclass(frozen=True)
class Template:
    act_label: str
    pattern: str
    weight: float
    source: str = ""

    @property
    def placeholders(self) -> tuple[str, ...]:
        return tuple(_PH.findall(self.pattern))

    @property
    def features(self) -> frozenset:
        out = set()
        for ph in self.placeholders:
            out |= _FEATURES[ph]
        return frozenset(out)

    @property
    def literal_len(self) -> int:
        return len(_PH.sub("", self.pattern))


@dataclass
class PatternSet:
    templates: tuple[Template, ...]
    by_act: dict
    compiled: list  # (template, regex) in file order
    spec: object = field(repr=False, default=None)
    render: object = field(repr=False, default=None)

    def for_act(self, label: str) -> tuple[Template, ...]:
        return self.by_act.get(label, ())


def payload_features(payload: Payload) -> frozenset:
    f = set()
    if payload.values:
        f.add("value")
    if payload.knowledge_snippets:
        f.add("k")
    if payload.compared_pair is not None:
        f.add("pair")
    if payload.position_ref is not None:
        f |= _REF_FEATURES[payload.position_ref.kind]
    return frozenset(f)


# ------------------------------------------------------------------ loading


def read_templates(path) -> list[Template]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise TemplateError(f"{path}:{lineno}: expected act<TAB>weight<TAB>pattern")
            label, weight, pattern = cols[0].strip(), cols[1].strip(), cols[2].strip()
            try:
                w = float(weight)
            except ValueError:
                raise TemplateError(f"{path}:{lineno}: bad weight {weight!r}") from None
            if w <= 0:
                raise TemplateError(f"{path}:{lineno}: weight must be positive")
            for ph in _PH.findall(pattern):
                if ph not in PLACEHOLDERS:
                    raise TemplateError(f"{path}:{lineno}: unknown placeholder <{ph}>")
            phs = _PH.findall(pattern)
            if len(set(phs)) != len(phs) and set(phs) != {"value"}:
                raise TemplateError(f"{path}:{lineno}: repeated placeholder")
            if ("a" in phs) != ("b" in phs):
                raise TemplateError(f"{path}:{lineno}: <a> and <b> come in pairs")
            if "n" in phs and "anchor" not in phs:
                raise TemplateError(f"{path}:{lineno}: <n> needs <anchor>")
            out.append(Template(label, pattern, w, f"{path}:{lineno}"))
    return out


def load_patterns(files, spec, render) -> PatternSet:
    templates: list[Template] = []
    for item in files:
        path, line = item if isinstance(item, tuple) else (item, None)
        try:
            templates.extend(read_templates(path))
        except OSError as e:
            where = f" (config line {line})" if line else ""
            raise TemplateError(f"cannot read template file {path}{where}: {e.strerror}") from None
    inventory = set(spec.action_inventory)
    for t in templates:
        if t.act_label not in inventory:
            raise TemplateError(f"{t.source}: act {t.act_label!r} is not in the action inventory")
    by_act: dict[str, tuple] = {}
    for t in templates:
        by_act[t.act_label] = by_act.get(t.act_label, ()) + (t,)
    missing = [a for a in spec.action_inventory if a not in by_act]
    if missing:
        raise TemplateError(f"no templates for acts: {', '.join(missing)}")
    ps = PatternSet(tuple(templates), by_act, [], spec, render)
    ps.compiled = [(t, _compile(t, spec, render)) for t in templates]
    return ps


def _class(chars) -> str:
    return "[" + "".join(re.escape(c) for c in sorted(set(chars))) + "]"


def _value_chars(spec, render) -> set:
    chars = set(spec.alphabet) | {alias for _, alias in render.aliases}
    if spec.is_digit_domain:
        chars |= {"个", "，", " "}
    elif render.readback_groups:
        chars |= {" "}
    return chars


def _compile(t: Template, spec, render) -> re.Pattern:
    vc = _class(_value_chars(spec, render))
    sym = _class(spec.alphabet)
    unit = re.escape(render.unit)
    ordinal = "anchor" in t.placeholders and "cands" in t.placeholders
    pieces = {
        "value": f"(?P<value>{vc}+?)",
        "cands": (rf"(?P<cands>\d+(?:{CAND_SEP}\d+)+)" if ordinal else f"(?P<cands>{vc}+?(?:{CAND_SEP}{vc}+?)+)"),
        "k": "(?P<k>.+?)",
        "vk": "(?P<vk>.+?)",
        "pos": rf"(?P<pos>(?:前|最后)\d+{unit})",
        "anchor": f"(?P<anchor>{vc}+?)",
        "after": f"(?P<after>{vc}+?)",
        "n": r"(?P<n>\d+)",
        "a": f"(?P<a>{sym})",
        "b": f"(?P<b>{sym})",
    }
    out, pos, seen_value = [], 0, False
    for m in _PH.finditer(t.pattern):
        out.append(re.escape(t.pattern[pos : m.start()]))
        name = m.group(1)
        if name == "value" and seen_value:
            out.append(f"(?P<value2>{vc}+?)")
        else:
            out.append(pieces[name])
        seen_value = seen_value or name == "value"
        pos = m.end()
    out.append(re.escape(t.pattern[pos:]))
    return re.compile("".join(out))


# ---------------------------------------------------------------- rendering


def contract(value: str, rng: Optional[random.Random], prob: float) -> str:
    """Render runs of >= 3 equal digits as "N个d", separated by "，"."""
    pieces: list[tuple[str, bool]] = []
    i = 0
    while i < len(value):
        j = i
        while j < len(value) and value[j] == value[i]:
            j += 1
        run = j - i
        while run >= 3:
            take = min(run, 9)
            if run - take in (1, 2) and take > 3:
                take = max(3, run - 3) if run - 3 >= 3 else take
            if prob >= 1.0 or (rng is not None and prob > 0 and rng.random() < prob):
                pieces.append((f"{take}个{value[i]}", True))
            else:
                pieces.append((value[i] * take, False))
            i += take
            run -= take
        if run:
            pieces.append((value[i] * run, False))
            i += run
    out = ""
    prev_q = False
    for text, is_q in pieces:
        if out and (is_q or prev_q):
            out += "，"
        out += text
        prev_q = is_q
    return out


def expand(text: str) -> str:
    """Inverse of :func:`contract`; raises ValueError on a malformed count phrase."""
    out = []
    for piece in text.split("，"):
        if not piece:
            continue
        m = QUANT.match(piece)
        if m:
            out.append(m.group(2) * int(m.group(1)))
        elif "个" in piece:
            raise ValueError(f"malformed quantifier {piece!r}")
        else:
            out.append(piece)
    return "".join(out)


def render_value(value: str, ps: PatternSet, rng, speaker: str = "user", grouped: bool = False) -> str:
    spec, rc = ps.spec, ps.render
    if grouped and rc.readback_groups and sum(rc.readback_groups) == len(value):
        parts, i = [], 0
        for g in rc.readback_groups:
            parts.append(value[i : i + g])
            i += g
        return " ".join(parts)
    text = value
    if spec.is_digit_domain and rc.quantifier_prob > 0 and speaker == "user":
        text = contract(value, rng, rc.quantifier_prob)
    if rc.aliases and rc.alias_prob > 0 and rng is not None:
        table = dict(rc.aliases)
        text = "".join(
            table[c] if c in table and not _in_count(text, k) and rng.random() < rc.alias_prob else c
            for k, c in enumerate(text)
        )
    return text


def _in_count(text: str, k: int) -> bool:
    # the count digit of "4个3" must stay a digit
    return k + 1 < len(text) and text[k + 1] == "个"


def _pos_phrase(ref: PositionRef, unit: str) -> str:
    return ("最后" if ref.kind == "suffix_k" else "前") + f"{ref.k}{unit}"


def realize(act: DialogAct, templates: PatternSet, rng=None, template: Optional[Template] = None) -> str:
    pool = templates.for_act(act.label)
    if not pool:
        raise TemplateError(f"no templates for act {act.label!r}")
    feats = payload_features(act.payload)
    if template is None:
        eligible = [t for t in pool if t.features == feats]
        if not eligible:
            have = {ph for t in pool for ph in t.features}
            missing = sorted(have - feats) or sorted(feats - have) or sorted(feats)
            raise TemplateError(
                f"no {act.label} template fits payload fields {sorted(feats)}; missing placeholder(s) {missing}"
            )
        rng = rng or random.Random(0)
        template = rng.choices(eligible, weights=[t.weight for t in eligible])[0] if len(eligible) > 1 else eligible[0]
    elif template.features != feats:
        raise TemplateError(f"template {template.pattern!r} does not fit payload fields {sorted(feats)}")
    p = act.payload
    unit = templates.render.unit
    grouped = act.speaker == "system" and act.label in ("explicit_confirm", "finish")

    def fill(m):
        name = m.group(1)
        if name == "value":
            return render_value(p.values[0], templates, rng, act.speaker, grouped)
        if name == "cands":
            return CAND_SEP.join(p.values)
        if name == "k":
            return "，".join(p.knowledge_snippets)
        if name == "vk":
            v = p.values[0]
            if len(v) != len(p.knowledge_snippets):
                raise TemplateError("<vk> needs one snippet per symbol")
            return "，".join(f"{c}是{k}" for c, k in zip(v, p.knowledge_snippets))
        if name == "pos":
            return _pos_phrase(p.position_ref, unit)
        if name in ("anchor", "after"):
            return p.position_ref.anchor
        if name == "n":
            return str(p.position_ref.n)
        if name == "a":
            return p.compared_pair[0]
        if name == "b":
            return p.compared_pair[1]
        raise TemplateError(f"unknown placeholder <{name}>")

    return _PH.sub(fill, template.pattern)


# ------------------------------------------------------------------ parsing


_SPOKEN_DIGITS = dict(zip("零〇一二三四五六七八九幺两", "0012345678912"))


def normalize_value(text: str, ps: PatternSet) -> Optional[str]:
    spec, rc = ps.spec, ps.render
    table = {alias: sym for sym, alias in rc.aliases}
    if spec.is_digit_domain:
        table = {**_SPOKEN_DIGITS, **table}
    s = "".join(table.get(c, c) for c in text).replace(" ", "")
    if spec.is_digit_domain:
        try:
            s = expand(s)
        except ValueError:
            return None
    if not s or any(c not in spec.alphabet for c in s):
        return None
    return s


def _vk_parse(text: str):
    clauses = [c for c in re.split(r"[，,]", text) if c]
    found = extract_snippets(text)
    if len(found) != len(clauses) or any(h is None for _, h in found):
        return None
    return "".join(h for _, h in found), tuple(s for s, _ in found)


def _read(t: Template, m: re.Match, ps: PatternSet) -> Optional[Payload]:
    g = m.groupdict()
    values: tuple = ()
    snippets: tuple = ()
    ref = None
    pair = None
    if g.get("value") is not None:
        v = normalize_value(g["value"], ps)
        if v is None:
            return None
        if g.get("value2") is not None and normalize_value(g["value2"], ps) != v:
            return None
        values = (v,)
    if g.get("cands") is not None:
        parts = g["cands"].split(CAND_SEP)
        if "anchor" in t.placeholders:
            values = tuple(parts)
        else:
            vs = tuple(normalize_value(x, ps) for x in parts)
            if any(v is None for v in vs):
                return None
            values = vs
    if g.get("vk") is not None:
        r = _vk_parse(g["vk"])
        if r is None:
            return None
        hv, snippets = r
        if any(c not in ps.spec.alphabet for c in hv):
            return None
        if values and values[0] != hv:
            return None
        values = (hv,)
    if g.get("k") is not None:
        found = extract_snippets(g["k"], after_value=True)
        clauses = [c for c in re.split(r"[，,]", g["k"]) if c]
        # hinted clauses ("艳是...") belong to <vk>
        if not found or len(found) != len(clauses) or any(h is not None for _, h in found):
            return None
        snippets = tuple(s for s, _ in found)
    if g.get("pos") is not None:
        pm = re.match(r"(前|最后)(\d+)", g["pos"])
        k = int(pm.group(2))
        if k < 1:
            return None
        ref = PositionRef("suffix_k" if pm.group(1) == "最后" else "prefix_k", k=k)
    if g.get("anchor") is not None:
        a = normalize_value(g["anchor"], ps)
        if a is None:
            return None
        if g.get("n") is not None:
            n = int(g["n"])
            if n < 1:
                return None
            ref = PositionRef("nth_occurrence", anchor=a, n=n)
        else:
            ref = PositionRef("whole_fragment", anchor=a)
    if g.get("after") is not None:
        a = normalize_value(g["after"], ps)
        if a is None:
            return None
        ref = PositionRef("after_anchor", anchor=a)
    if g.get("a") is not None:
        pair = (g["a"], g["b"])
    return Payload(values, ref, snippets, pair)


def _rank(t: Template):
    return (t.literal_len, len(t.features))


_PUNCT = str.maketrans({",": "，", "?": "？", "!": "！", ":": "：", ";": "；"})


def parse(utterance: str, patterns: PatternSet, speaker: Optional[str] = None) -> DialogAct:
    """Best-matching act for ``utterance``; never raises.

    The template with the most literal characters wins; on a tie the one
    reading more payload fields wins, then file order.  Nothing matching
    gives the act ``unknown``.
    """
    text = (utterance or "").strip().translate(_PUNCT)
    sys_acts = set(patterns.spec.resources.get("system_acts", ()))
    best = None
    for t, rx in patterns.compiled:
        side = "system" if t.act_label in sys_acts else "user"
        if speaker is not None and side != speaker:
            continue
        if best is not None and _rank(t) <= _rank(best[0]):
            continue
        m = rx.fullmatch(text)
        if not m:
            continue
        payload = _read(t, m, patterns)
        if payload is None:
            continue
        best = (t, payload, side)
    if best is None:
        # a bare value typed by a person, e.g. "小明" or "幺三八"
        bare = normalize_value(text, patterns) if speaker != "system" and "inform" in patterns.by_act else None
        if bare is not None and len(bare) <= patterns.spec.length_max:
            return DialogAct("user", "inform", Payload((bare,)))
        return DialogAct(speaker or "user", "unknown")
    t, payload, side = best
    return DialogAct(side, t.act_label, payload)


def roundtrip_check(act: DialogAct, templates: PatternSet, rng=None, template: Optional[Template] = None) -> bool:
    text = realize(act, templates, rng, template)
    back = parse(text, templates, act.speaker)
    return back.label == act.label and back.payload == act.payload
