"""Character knowledge base and the two-channel TF-IDF retriever.

A knowledge item describes one Chinese character ("口天吴", "东吴的吴").  The
index embeds every item twice: once over its characters and once over their
tone-stripped pinyin.  A spoken snippet is scored against every item as a
blend of the two cosines, so a snippet whose characters were all misheard as
homophones still lines up perfectly in the pinyin channel.
"""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import sparse

DATA_DIR = Path(__file__).parent / "data"
DEFAULT_KB = DATA_DIR / "kb.tsv"
DEFAULT_PINYIN = DATA_DIR / "pinyin.tsv"
DEFAULT_ALPHA = 0.09

KINDS = ("combination", "structure", "hybrid")
UNKNOWN_PINYIN = "<unk>"


class KnowledgeError(ValueError):
    pass


@dataclass(frozen=True)
class KnowledgeItem:
    character: str
    pinyin: str
    text: str
    kind: str

    def __post_init__(self):
        if len(self.character) != 1:
            raise KnowledgeError(f"character must be a single symbol: {self.character!r}")
        if not self.text:
            raise KnowledgeError(f"empty knowledge text for {self.character}")
        if not self.pinyin:
            raise KnowledgeError(f"empty pinyin for {self.character}")
        if self.kind not in KINDS:
            raise KnowledgeError(f"unknown knowledge kind {self.kind!r}")


# ------------------------------------------------------------------ loading


def _data_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line


def load_kb(path=DEFAULT_KB) -> list[KnowledgeItem]:
    items = []
    for lineno, line in _data_lines(path):
        cols = line.split("\t")
        if len(cols) != 4:
            raise KnowledgeError(f"{path}:{lineno}: expected 4 tab-separated columns, got {len(cols)}")
        try:
            items.append(KnowledgeItem(*(c.strip() for c in cols)))
        except KnowledgeError as e:
            raise KnowledgeError(f"{path}:{lineno}: {e}") from None
    return items


def load_pinyin(path=DEFAULT_PINYIN) -> dict[str, str]:
    table = {}
    for lineno, line in _data_lines(path):
        cols = line.split("\t")
        if len(cols) < 2 or len(cols[0]) != 1:
            raise KnowledgeError(f"{path}:{lineno}: malformed pinyin entry")
        table[cols[0]] = strip_tone(cols[1].strip())
    return table


@lru_cache(maxsize=8)
def cached_pinyin(path=str(DEFAULT_PINYIN)) -> dict:
    return load_pinyin(path)


@lru_cache(maxsize=8)
def cached_kb(path=str(DEFAULT_KB)) -> tuple:
    return tuple(load_kb(path))


_TONE = str.maketrans(
    "āáǎàēéěèīíǐìōóǒòūúǔùǖǘǚǜü",
    "aaaaeeeeiiiioooouuuuvvvvv",
)


def strip_tone(py: str) -> str:
    return re.sub(r"[1-5]", "", py.lower().translate(_TONE))


def homophone_groups(pinyin: dict[str, str]) -> dict[str, tuple[str, ...]]:
    groups: dict[str, list[str]] = {}
    for ch, py in pinyin.items():
        groups.setdefault(py, []).append(ch)
    return {py: tuple(chs) for py, chs in groups.items()}


# -------------------------------------------------------------------- index


@dataclass(frozen=True)
class KnowledgeIndex:
    items: tuple[KnowledgeItem, ...]
    char_vocab: dict
    pinyin_vocab: dict
    idf_char: np.ndarray
    idf_pinyin: np.ndarray
    char_vectors: sparse.csr_matrix
    pinyin_vectors: sparse.csr_matrix
    alpha: float
    pinyin: dict = field(repr=False)

    def pinyin_of(self, ch: str) -> str:
        return self.pinyin.get(ch, UNKNOWN_PINYIN)

    @property
    def characters(self) -> frozenset:
        return frozenset(it.character for it in self.items)


def char_tokens(text: str) -> list[str]:
    return [c for c in text if not c.isspace()]


def pinyin_tokens(text: str, pinyin: dict) -> list[str]:
    return [pinyin.get(c, UNKNOWN_PINYIN) for c in char_tokens(text)]


def _channel(docs: list[list[str]]):
    vocab: dict[str, int] = {}
    for doc in docs:
        for t in doc:
            vocab.setdefault(t, len(vocab))
    n = len(docs)
    df = np.zeros(len(vocab))
    rows, cols, vals = [], [], []
    for i, doc in enumerate(docs):
        for t, c in Counter(doc).items():
            j = vocab[t]
            df[j] += 1
            rows.append(i)
            cols.append(j)
            vals.append(float(c))
    idf = np.log((1.0 + n) / (1.0 + df)) + 1.0
    tf = sparse.csr_matrix((vals, (rows, cols)), shape=(n, len(vocab)))
    return vocab, idf, sparse.csr_matrix(tf.multiply(idf[None, :]))


def build_index(
    items: Sequence[KnowledgeItem], alpha: float = DEFAULT_ALPHA, pinyin: Optional[dict] = None
) -> KnowledgeIndex:
    items = tuple(items)
    if not items:
        raise KnowledgeError("cannot build an index from an empty knowledge base")
    if not 0.0 <= alpha <= 1.0:
        raise KnowledgeError(f"alpha must lie in [0, 1], got {alpha}")
    table = dict(cached_pinyin() if pinyin is None else pinyin)
    for it in items:
        table.setdefault(it.character, strip_tone(it.pinyin))
    char_docs = [char_tokens(it.text) for it in items]
    for i, doc in enumerate(char_docs):
        if not doc:
            raise KnowledgeError(f"item {i} ({items[i].character}: {items[i].text!r}) has an empty vector")
    cv, ci, cm = _channel(char_docs)
    pv, pi, pm = _channel([pinyin_tokens(it.text, table) for it in items])
    return KnowledgeIndex(items, cv, pv, ci, pi, cm, pm, float(alpha), table)


def with_alpha(index: KnowledgeIndex, alpha: float) -> KnowledgeIndex:
    if not 0.0 <= alpha <= 1.0:
        raise KnowledgeError(f"alpha must lie in [0, 1], got {alpha}")
    return KnowledgeIndex(
        index.items, index.char_vocab, index.pinyin_vocab, index.idf_char, index.idf_pinyin,
        index.char_vectors, index.pinyin_vectors, float(alpha), index.pinyin,
    )


def _query(tokens: Iterable[str], vocab: dict, idf: np.ndarray) -> np.ndarray:
    q = np.zeros(len(vocab))
    for t in tokens:
        j = vocab.get(t)
        if j is not None:
            q[j] += 1.0
    return q * idf


def _cosines(q: np.ndarray, mat: sparse.csr_matrix) -> np.ndarray:
    qn = np.linalg.norm(q)
    if qn == 0.0:
        return np.zeros(mat.shape[0])
    norms = np.sqrt(np.asarray(mat.multiply(mat).sum(axis=1)).ravel())
    dots = mat @ q
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(norms > 0, dots / (norms * qn), 0.0)
    return np.clip(out, 0.0, 1.0)


def score_all(index: KnowledgeIndex, snippet: str) -> np.ndarray:
    if not snippet:
        raise KnowledgeError("empty snippet")
    qc = _query(char_tokens(snippet), index.char_vocab, index.idf_char)
    qp = _query(pinyin_tokens(snippet, index.pinyin), index.pinyin_vocab, index.idf_pinyin)
    a = index.alpha
    return a * _cosines(qc, index.char_vectors) + (1.0 - a) * _cosines(qp, index.pinyin_vectors)


def score(index: KnowledgeIndex, snippet: str, item_id: int) -> float:
    if not 0 <= item_id < len(index.items):
        raise KnowledgeError(f"unknown item id {item_id}")
    return float(score_all(index, snippet)[item_id])


def disambiguate(index: KnowledgeIndex, snippet: str) -> list[tuple[str, float]]:
    """Characters ranked by their best-matching item; ties keep KB order."""
    if not index.items:
        raise KnowledgeError("empty index")
    scores = score_all(index, snippet)
    order = sorted(range(len(scores)), key=lambda i: -scores[i])
    seen, ranked = set(), []
    for i in order:
        ch = index.items[i].character
        if ch not in seen:
            seen.add(ch)
            ranked.append((ch, float(scores[i])))
    return ranked


# --------------------------------------------------------- snippet extraction

_CJK = r"一-鿿"
_LEAD_INS = ("名字是", "我叫", "我姓", "叫", "姓", "是")
_OF = re.compile(rf"^([{_CJK}]{{1,6}})的([{_CJK}]{{1,2}})$")
_ONE_ONE = re.compile(rf"^一个([{_CJK}])字，?一个([{_CJK}])字$")
_STRUCT = re.compile(rf"^[{_CJK}]{{3,5}}$")
_HINT = re.compile(rf"^([{_CJK}])是(.+)$")
_SPLIT = re.compile(r"[，,。；;！!？?\s]+")


def _clauses(utterance: str) -> list[str]:
    parts = [p for p in _SPLIT.split(utterance) if p]
    merged, i = [], 0
    # "一个丰字，一个色字" spans two clauses
    while i < len(parts):
        if i + 1 < len(parts) and _ONE_ONE.match(parts[i] + parts[i + 1]):
            merged.append(parts[i] + parts[i + 1])
            i += 2
        else:
            merged.append(parts[i])
            i += 1
    return merged


def extract_snippets(
    utterance: str, patterns=None, after_value: bool = False
) -> list[tuple[str, Optional[str]]]:
    """Knowledge snippets in an utterance as (snippet, hinted character) pairs.

    Recognised shapes: "X的Y", "一个X字一个Y字" and bare structure descriptions
    such as "口天吴".  A bare description only counts when something marks it
    as knowledge: an explicit "张是..." hint, or a clause that follows the
    value (``after_value``, or any clause after the first).  ``patterns`` may
    add extra compiled regexes whose whole-clause match is a snippet.
    """
    out = []
    for idx, clause in enumerate(_clauses(utterance)):
        hint = None
        body = clause
        m = _HINT.match(clause)
        if m and len(clause) > 2:
            hint, body = m.group(1), m.group(2)
        else:
            for lead in _LEAD_INS:
                if body.startswith(lead) and len(body) > len(lead):
                    body = body[len(lead):]
                    break
        context = hint is not None or after_value or idx > 0
        if _ONE_ONE.match(body) or _OF.match(body):
            out.append((body, hint))
        elif patterns and any(p.fullmatch(body) for p in patterns):
            out.append((body, hint))
        elif context and _STRUCT.match(body):
            out.append((body, hint))
    return out
