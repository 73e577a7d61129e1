"""Term statistics: TF-IDF keywords, phrase candidates, chi-square specificity,
co-occurrence contingency with deviation scores, and period trend series."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Optional, Sequence

import numpy as np


class TermStatsError(Exception):
    pass


def _load_stopwords() -> frozenset:
    text = resources.files("litscape").joinpath("data/stopwords.txt").read_text(encoding="utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip() and not w.startswith("#"))


STOPWORDS = _load_stopwords()

# phrases that say nothing in this domain; a candidate containing one is dropped
GENERIC_PHRASES = (
    "life cycle",
    "life cycle assessment",
    "life cycle assessments",
    "life cycle analysis",
    "cycle assessment",
    "cycle analysis",
    "environmental impact",
    "environmental impacts",
    "present study",
    "results show",
    "paper presents",
)

_TOKEN = re.compile(r"[^\W_]+(?:-[^\W_]+)*", re.UNICODE)
_SEGMENT_BREAK = re.compile(r"[.,;:!?()\[\]{}\"'\n\r\t/|]+")


@dataclass(frozen=True)
class TermScore:
    term: str
    score: float
    frequency: int


@dataclass(frozen=True)
class PhraseCandidate:
    phrase: str
    count: int
    doc_freq: int


def tokenize(text: str, stopwords=STOPWORDS) -> list:
    """Lowercased word tokens (inner hyphens kept), minus stopwords and 1-char tokens."""
    return [t for t in _TOKEN.findall(text.lower()) if len(t) > 1 and t not in stopwords]


# ---------------------------------------------------------------------------
# TF-IDF

def idf(doc_freq: int, n_docs: int) -> float:
    return math.log((1 + n_docs) / (1 + doc_freq)) + 1.0


def tfidf_scores(cluster_docs: Sequence[Sequence[str]], corpus_docs: Sequence[Sequence[str]],
                 top_n: Optional[int] = None) -> list:
    """Mean TF-IDF over the cluster's documents.

    Both arguments are documents already turned into term lists. tf is the
    term count over the document's term count; idf uses the smoothed form
    ``ln((1+N)/(1+df)) + 1`` over ``corpus_docs``. Ties sort alphabetically.
    """
    if not cluster_docs:
        raise TermStatsError("cluster has no documents")
    n = len(corpus_docs)
    df = Counter()
    for doc in corpus_docs:
        df.update(set(doc))
    totals = Counter()
    freq = Counter()
    for doc in cluster_docs:
        if not doc:
            continue
        counts = Counter(doc)
        length = len(doc)
        for term, c in counts.items():
            totals[term] += (c / length) * idf(df.get(term, 0), n)
            freq[term] += c
    m = len(cluster_docs)
    scored = [TermScore(t, s / m, freq[t]) for t, s in totals.items()]
    scored.sort(key=lambda ts: (-ts.score, ts.term))
    return scored if top_n is None else scored[:top_n]


def tfidf_cluster_terms(cluster_texts: Sequence[str], corpus_texts: Sequence[str], top_n: int = 10) -> list:
    return tfidf_scores([tokenize(t) for t in cluster_texts], [tokenize(t) for t in corpus_texts], top_n)


# ---------------------------------------------------------------------------
# phrases

def phrase_terms(text: str, nmin: int = 2, nmax: int = 4, stopwords=STOPWORDS,
                 blocklist: Iterable[str] = GENERIC_PHRASES) -> list:
    """All 2..4-word candidates in one text, in order, with repeats.

    Stopwords, numbers, single characters and punctuation all end a run of
    words; n-grams never cross a run boundary.
    """
    blocked = [tuple(b.split()) for b in blocklist]
    out = []
    for segment in _SEGMENT_BREAK.split(text.lower()):
        run: list = []
        runs = []
        for tok in _TOKEN.findall(segment):
            if tok in stopwords or len(tok) < 2 or tok.replace("-", "").isdigit():
                if run:
                    runs.append(run)
                run = []
            else:
                run.append(tok)
        if run:
            runs.append(run)
        for run in runs:
            for size in range(nmin, nmax + 1):
                for i in range(len(run) - size + 1):
                    gram = tuple(run[i:i + size])
                    if any(_contains(gram, b) for b in blocked):
                        continue
                    out.append(" ".join(gram))
    return out


def _contains(gram: tuple, sub: tuple) -> bool:
    k = len(sub)
    return any(gram[i:i + k] == sub for i in range(len(gram) - k + 1))


def extract_phrases(texts: Sequence[str], nmin: int = 2, nmax: int = 4,
                    blocklist: Iterable[str] = GENERIC_PHRASES) -> list:
    """Phrase candidates across ``texts`` with total and document counts, most frequent first."""
    blocklist = tuple(blocklist)
    count, dfc = Counter(), Counter()
    for text in texts:
        grams = phrase_terms(text, nmin, nmax, blocklist=blocklist)
        count.update(grams)
        dfc.update(set(grams))
    cands = [PhraseCandidate(p, count[p], dfc[p]) for p in count]
    cands.sort(key=lambda c: (-c.count, c.phrase))
    return cands


def tfidf_cluster_phrases(cluster_texts: Sequence[str], corpus_texts: Sequence[str], top_n: int = 10,
                          blocklist: Iterable[str] = GENERIC_PHRASES) -> list:
    """Phrase candidates re-ranked with the same TF-IDF scoring used for words."""
    blocklist = tuple(blocklist)
    as_terms = lambda t: phrase_terms(t, blocklist=blocklist)
    return tfidf_scores([as_terms(t) for t in cluster_texts], [as_terms(t) for t in corpus_texts], top_n)


# ---------------------------------------------------------------------------
# chi-square

_GAMMA_EPS = 1e-16
_GAMMA_MAX_ITER = 100000
_TINY = 1e-300


def _gamma_p_series(a: float, x: float) -> float:
    term = total = 1.0 / a
    ap = a
    for _ in range(_GAMMA_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _GAMMA_EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_contfrac(a: float, x: float) -> float:
    # modified Lentz evaluation of the continued fraction for Q(a, x)
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _GAMMA_EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_p_series(a, x)
    return _gamma_q_contfrac(a, x)


def chi2_sf(stat: float, dof: int) -> float:
    if dof <= 0:
        return 1.0
    return min(1.0, max(0.0, gamma_q(dof / 2.0, stat / 2.0)))


def chi_square(observed):
    """Pearson chi-square test of independence (no continuity correction).

    Returns ``(statistic, dof, p)``.
    """
    O = np.asarray(observed, dtype=np.float64)
    if O.ndim != 2 or O.size == 0:
        raise TermStatsError("observed must be a non-empty 2-D table")
    if np.any(O < 0):
        raise TermStatsError("counts must be non-negative")
    n = O.sum()
    rows, cols = O.sum(axis=1), O.sum(axis=0)
    if n <= 0 or np.any(rows == 0) or np.any(cols == 0):
        raise TermStatsError("degenerate margins: a row or column sums to zero")
    E = np.outer(rows, cols) / n
    stat = float(np.sum((O - E) ** 2 / E))
    dof = (O.shape[0] - 1) * (O.shape[1] - 1)
    return stat, dof, chi2_sf(stat, dof)


# ---------------------------------------------------------------------------
# specificity

def specificity_rank(units: Sequence[tuple], max_terms: int = 500, min_frequency: int = 1) -> list:
    """Rank candidate terms by chi-square of presence against a unit partition.

    ``units`` holds ``(terms, partition_label)`` pairs, where ``terms`` is any
    iterable of a unit's terms. Each term gets a 2 x P table (present/absent
    by partition); terms whose table is degenerate score 0. Ordered by score,
    then frequency (units containing the term), then alphabetically.
    """
    if not units:
        raise TermStatsError("no units to rank")
    labels = sorted({lab for _, lab in units})
    col = {lab: i for i, lab in enumerate(labels)}
    sizes = np.zeros(len(labels))
    present: dict = {}
    for terms, lab in units:
        j = col[lab]
        sizes[j] += 1
        for t in set(terms):
            present.setdefault(t, np.zeros(len(labels)))[j] += 1
    out = []
    for term, row in present.items():
        freq = int(row.sum())
        if freq < min_frequency:
            continue
        try:
            stat, _, _ = chi_square(np.vstack([row, sizes - row]))
        except TermStatsError:
            stat = 0.0
        out.append(TermScore(term, stat, freq))
    out.sort(key=lambda s: (-s.score, -s.frequency, s.term))
    return out[:max_terms]


def period_label(year: int, start: int, period_years: int) -> str:
    lo = start + ((year - start) // period_years) * period_years
    return f"{lo}-{lo + period_years - 1}"


def period_bins(years: Sequence[int], period_years: int = 4) -> list:
    if not years:
        return []
    start, end = min(years), max(years)
    return [f"{lo}-{lo + period_years - 1}" for lo in range(start, end + 1, period_years)]


# ---------------------------------------------------------------------------
# contingency

def term_pattern(term: str) -> re.Pattern:
    words = [re.escape(w) for w in term.lower().split()]
    return re.compile(r"(?<![^\W_])" + r"[\s\-]+".join(words) + r"(?![^\W_])")


def term_presence(texts: Sequence[str], terms: Sequence[str]) -> np.ndarray:
    """Boolean (docs x terms) matrix of whole-word, case-insensitive occurrence."""
    pats = [term_pattern(t) for t in terms]
    lowered = [t.lower() for t in texts]
    return np.array([[bool(p.search(doc)) for p in pats] for doc in lowered], dtype=bool).reshape(
        len(texts), len(terms))


@dataclass
class ContingencyMatrix:
    rows: list
    cols: list
    observed: np.ndarray
    expected: np.ndarray
    deviation: np.ndarray
    cell_p: np.ndarray
    significant: np.ndarray
    chi2: float
    dof: int
    p: float
    dropped: list = field(default_factory=list)
    alpha: float = 0.05


def _cell_p(o: float, row: float, col: float, n: float) -> float:
    table = [[o, row - o], [col - o, n - row - col + o]]
    try:
        return chi_square(table)[2]
    except TermStatsError:
        return 1.0


def contingency_from_counts(O, rows, cols, alpha: float = 0.05, dropped=()) -> ContingencyMatrix:
    O = np.asarray(O, dtype=np.float64)
    n = O.sum()
    rs, cs = O.sum(axis=1), O.sum(axis=0)
    E = np.outer(rs, cs) / n if n > 0 else np.zeros_like(O)
    with np.errstate(divide="ignore", invalid="ignore"):
        D = np.where(E > 0, (O - E) / np.where(E > 0, E, 1.0), np.nan)
    P = np.ones_like(O)
    for i in range(O.shape[0]):
        for j in range(O.shape[1]):
            P[i, j] = _cell_p(O[i, j], rs[i], cs[j], n)
    if O.shape[0] >= 2 and O.shape[1] >= 2 and n > 0:
        chi2, dof, p = chi_square(O)
    else:
        chi2, dof, p = 0.0, 0, 1.0
    return ContingencyMatrix(list(rows), list(cols), O, E, D, P, P < alpha, chi2, dof, p, list(dropped), alpha)


def contingency(texts: Sequence[str], group_a: Sequence[str], group_b: Sequence[str],
                alpha: float = 0.05) -> ContingencyMatrix:
    """Document co-occurrence of group A terms (rows) with group B terms (columns).

    Terms absent from the corpus, or never co-occurring with the other group,
    are dropped and listed in ``dropped``.
    """
    if not group_a or not group_b:
        raise TermStatsError("both term groups must be non-empty")
    A = term_presence(texts, group_a).astype(np.int64)
    B = term_presence(texts, group_b).astype(np.int64)
    O = A.T @ B
    dropped = [t for t, k in zip(group_a, A.sum(0)) if k == 0] + [t for t, k in zip(group_b, B.sum(0)) if k == 0]
    keep_r = [i for i in range(len(group_a)) if O[i].sum() > 0]
    keep_c = [j for j in range(len(group_b)) if O[:, j].sum() > 0]
    dropped += [group_a[i] for i in range(len(group_a)) if i not in keep_r and group_a[i] not in dropped]
    dropped += [group_b[j] for j in range(len(group_b)) if j not in keep_c and group_b[j] not in dropped]
    O = O[np.ix_(keep_r, keep_c)]
    return contingency_from_counts(O, [group_a[i] for i in keep_r], [group_b[j] for j in keep_c], alpha, dropped)


# ---------------------------------------------------------------------------
# trends

@dataclass(frozen=True)
class TrendRow:
    period: str
    term: str
    count: int
    height: float


def trend_series(docs: Sequence[tuple], period_years: int = 4, top_k: int = 10,
                 terms: Optional[Sequence[str]] = None) -> list:
    """Per-period share of the top-K terms.

    ``docs`` holds ``(year, text)`` pairs. Periods are consecutive windows of
    ``period_years`` anchored at the earliest year; every period through the
    latest year is emitted, empty ones as zero rows. Term counts are
    documents containing the term; heights sum to 1 in each non-empty period.
    """
    if not docs:
        return []
    years = [int(y) for y, _ in docs]
    if terms is None:
        ranked = extract_phrases([t for _, t in docs])
        ranked.sort(key=lambda c: (-c.doc_freq, c.phrase))
        terms = [c.phrase for c in ranked[:top_k]]
    else:
        terms = list(terms)[:top_k]
    start = min(years)
    bins = period_bins(years, period_years)
    presence = term_presence([t for _, t in docs], terms)
    counts = {b: np.zeros(len(terms), dtype=np.int64) for b in bins}
    for (year, _), row in zip(docs, presence):
        counts[period_label(int(year), start, period_years)] += row
    out = []
    for b in bins:
        c = counts[b]
        total = int(c.sum())
        for term, k in zip(terms, c):
            out.append(TrendRow(b, term, int(k), (int(k) / total) if total else 0.0))
    return out
