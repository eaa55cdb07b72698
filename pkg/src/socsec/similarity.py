"""Description matching: normalization, TF-IDF vectors and cosine scores.

Scoring only; acceptance thresholds belong to the caller.
"""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import TYPE_CHECKING, Callable, Iterable, Mapping, Sequence

from nltk.stem.porter import PorterStemmer

if TYPE_CHECKING:
    from .cwe_db import CweEntry, Db

_WORD_RE = re.compile(r"[a-z0-9]+")
_stemmer = PorterStemmer(PorterStemmer.ORIGINAL_ALGORITHM)


@lru_cache(maxsize=1)
def stopwords() -> frozenset[str]:
    text = resources.files("socsec.data").joinpath("stopwords.txt").read_text(encoding="utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip() and not w.startswith("#"))


@lru_cache(maxsize=4096)
def _stem(word: str) -> str:
    # Porter is not idempotent on its own output; iterate to a fixpoint
    prev, cur = None, word
    while cur != prev:
        prev, cur = cur, _stemmer.stem(cur)
    return cur


def normalize(text: str) -> list[str]:
    """Lowercase, drop punctuation (parenthesized words are kept), remove stopwords, stem."""
    stop = stopwords()
    out = []
    for w in _WORD_RE.findall(text.lower()):
        if w in stop:
            continue
        t = _stem(w)
        if t and t not in stop:
            out.append(t)
    return out


@dataclass(frozen=True)
class TextVector:
    weights: Mapping[str, float] = field(default_factory=dict)

    @property
    def norm(self) -> float:
        return math.sqrt(sum(w * w for w in self.weights.values()))


@dataclass(frozen=True)
class CorpusStats:
    """Document frequencies over a fixed corpus of token lists."""
    n_docs: int
    df: Mapping[str, int]

    @classmethod
    def build(cls, docs: Iterable[Sequence[str]]) -> "CorpusStats":
        df: Counter[str] = Counter()
        n = 0
        for tokens in docs:
            n += 1
            df.update(set(tokens))
        return cls(n, dict(df))

    def idf(self, token: str) -> float:
        # smoothed idf; stays positive for tokens seen in every document
        return math.log((1 + self.n_docs) / (1 + self.df.get(token, 0))) + 1.0


def vectorize(tokens: Sequence[str], corpus_stats: CorpusStats) -> TextVector:
    tf = Counter(tokens)
    return TextVector({t: c * corpus_stats.idf(t) for t, c in sorted(tf.items())})


def cosine_sim(a: TextVector, b: TextVector) -> float:
    na, nb = a.norm, b.norm
    if na == 0 or nb == 0:
        return 0.0
    small, large = (a.weights, b.weights) if len(a.weights) <= len(b.weights) else (b.weights, a.weights)
    dot = sum(w * large[t] for t, w in small.items() if t in large)
    return max(0.0, min(1.0, dot / (na * nb)))


Scorer = Callable[[str, Sequence[str]], list[float]]


def tfidf_scores(query: str, documents: Sequence[str]) -> list[float]:
    """Cosine score of ``query`` against each document; IDF over documents + query.

    The query vector keeps only words that occur in at least one document.
    """
    q_tokens = normalize(query)
    d_tokens = [normalize(d) for d in documents]
    stats = CorpusStats.build([*d_tokens, q_tokens])
    # words no description uses cannot match anything; leaving them in only
    # shrinks every score by the same factor
    vocab = {t for toks in d_tokens for t in toks}
    qv = vectorize([t for t in q_tokens if t in vocab], stats)
    return [cosine_sim(qv, vectorize(t, stats)) for t in d_tokens]


def rank(desc: str, db: "Db", scorer: Scorer = tfidf_scores) -> list[tuple["CweEntry", float]]:
    """All entries ordered by descending score, ties by ascending CWE number."""
    from .cwe_db import id_number

    entries = list(db)
    scores = scorer(desc, [e.description for e in entries])
    return sorted(zip(entries, scores), key=lambda p: (-p[1], id_number(p[0].cwe_id)))


def best_match(desc: str, db: "Db", scorer: Scorer = tfidf_scores) -> tuple["CweEntry", float]:
    if len(db) == 0:
        raise ValueError("best_match needs a non-empty db")
    return rank(desc, db, scorer)[0]


def char_ngrams(text: str, n: int = 3) -> list[str]:
    s = f"#{re.sub(r'[^a-z0-9]', '', text.lower())}#"
    return [s[i:i + n] for i in range(max(1, len(s) - n + 1))]


def nearest_identifier(name: str, candidates: Sequence[str]) -> tuple[str | None, float]:
    """Closest identifier by character-trigram cosine; used to bind signal names."""
    if not candidates:
        return None, 0.0
    grams = [char_ngrams(c) for c in candidates]
    q = char_ngrams(name)
    stats = CorpusStats.build([*grams, q])
    qv = vectorize(q, stats)
    scored = [(cosine_sim(qv, vectorize(g, stats)), c) for g, c in zip(grams, candidates)]
    score, best = max(scored, key=lambda p: (p[0], -candidates.index(p[1])))
    return best, score
