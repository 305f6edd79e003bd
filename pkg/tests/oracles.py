"""Independent reference implementations used by the unit and acceptance tests.

Nothing here imports the package's scoring, overlap or edit-distance code.
"""
import math
from collections import Counter
from functools import lru_cache

from sstod.core import Payload, PositionRef

# ------------------------------------------------------------ tracker


def overlap_oracle(a, b):
    return max(k for k in range(min(len(a), len(b)) + 1) if a[len(a) - k:] == b[:k])


def lev_oracle(a, b):
    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))
    return d(len(a), len(b))


def fuzzy_oracle(value, c):
    """(new value, ambiguous?) by scanning every window of length |c|-1..|c|+1."""
    best = None
    for s in range(len(value)):
        for e in range(s + 1, len(value) + 1):
            if abs((e - s) - len(c)) > 1:
                continue
            key = (lev_oracle(value[s:e], c), (e - s) != len(c), -e, -s)
            if best is None or key < best[0]:
                best = (key, s, e)
    if best is None:
        return None, None
    (dist, *_), s, e = best
    if dist >= len(c):
        return value, True
    return value[:s] + c + value[e:], False


# ------------------------------------------------------------- TF-IDF


def _vec(tokens, idf):
    tf = Counter(t for t in tokens if t in idf)
    return {t: c * idf[t] for t, c in tf.items()}


def _cos(u, v):
    nu = math.sqrt(sum(x * x for x in u.values()))
    nv = math.sqrt(sum(x * x for x in v.values()))
    if nu == 0 or nv == 0:
        return 0.0
    return sum(x * v.get(t, 0.0) for t, x in u.items()) / (nu * nv)


class Oracle:
    """Straight-line TF-IDF over dicts, no shared code with the package."""

    def __init__(self, items, pinyin, alpha):
        self.alpha = alpha
        self.py = dict(pinyin)
        for it in items:
            self.py.setdefault(it.character, it.pinyin)
        self.cdocs = [[c for c in it.text if not c.isspace()] for it in items]
        self.pdocs = [[self.py.get(c, "<unk>") for c in d] for d in self.cdocs]
        self.cidf, self.pidf = self._idf(self.cdocs), self._idf(self.pdocs)

    @staticmethod
    def _idf(docs):
        n = len(docs)
        df = Counter(t for d in docs for t in set(d))
        return {t: math.log((1 + n) / (1 + k)) + 1 for t, k in df.items()}

    def channels(self, snippet, i):
        qc = [c for c in snippet if not c.isspace()]
        qp = [self.py.get(c, "<unk>") for c in qc]
        return (_cos(_vec(qc, self.cidf), _vec(self.cdocs[i], self.cidf)),
                _cos(_vec(qp, self.pidf), _vec(self.pdocs[i], self.pidf)))

    def score(self, snippet, i):
        c, p = self.channels(snippet, i)
        return self.alpha * c + (1 - self.alpha) * p


# ------------------------------------------------------ template payloads


SAMPLES = {
    "phone": ["13347773029", "529", "1", "3333", "11111", "7", "100000"],
    "id": ["11010519491231002X", "X", "4307", "5555"],
    "name": ["张艳", "吴", "张艳华", "林"],
    "plate": ["京A12345", "E", "1E", "B8D0"],
}
KB_TEXT = {"张": "弓长张", "艳": "严厉的艳", "吴": "口天吴", "华": "中华的华", "林": "双木林"}


def payloads_for(t, domain):
    """Every sample payload the template can carry."""
    ph = set(t.placeholders)
    vals = SAMPLES[domain]
    out = []
    for v in vals:
        values = (v,) if ("value" in ph or "vk" in ph) else ()
        if "cands" in ph:
            values = ("1", "2") if "anchor" in ph else (vals[0], vals[1])
        k = ()
        if "k" in ph or "vk" in ph:
            if not all(c in KB_TEXT for c in v):
                continue
            k = tuple(KB_TEXT[c] for c in v)
        ref = None
        if "pos" in ph:
            ref = PositionRef("suffix_k", k=len(v))
        if "anchor" in ph and "n" in ph:
            ref = PositionRef("nth_occurrence", anchor=vals[-1], n=2)
        elif "anchor" in ph:
            ref = PositionRef("whole_fragment", anchor=vals[-1])
        if "after" in ph:
            ref = PositionRef("after_anchor", anchor=vals[-1])
        pair = (vals[1][0], vals[-1][0]) if "a" in ph else None
        out.append(Payload(values, ref, k, pair))
    return out
