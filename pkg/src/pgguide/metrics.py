"""Summary diagnostics: ROUGE, novelty/overlap, p_gen statistics, cumulative
attention, the paired permutation test and the shunting detector."""
from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .annotate import sentence_of

SENTENCE_END = frozenset({".", "!", "?"})


# ---------------------------------------------------------------------------
# ROUGE


def _ngrams(tokens: Sequence[str], n: int) -> list[tuple]:
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def _prf(hits: float, n_cand: int, n_ref: int) -> tuple[float, float, float]:
    p = hits / n_cand if n_cand else 0.0
    r = hits / n_ref if n_ref else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def rouge_n(candidate: Sequence[str], reference: Sequence[str], n: int) -> tuple[float, float, float]:
    """Clipped n-gram precision, recall and F1 (token level, no stemming)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    cand = Counter(_ngrams(candidate, n))
    ref = Counter(_ngrams(reference, n))
    hits = sum(min(c, ref[g]) for g, c in cand.items())
    return _prf(hits, sum(cand.values()), sum(ref.values()))


def lcs_length(a: Sequence, b: Sequence) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> tuple[float, float, float]:
    return _prf(lcs_length(candidate, reference), len(candidate), len(reference))


# ---------------------------------------------------------------------------
# novelty and overlap


def novelty_counts(summary: Sequence[str], article: Sequence[str], n: int) -> tuple[int, int]:
    """(novel, total) summary n-grams, counted per summary position."""
    if n < 1:
        raise ValueError("n must be at least 1")
    grams = _ngrams(summary, n)
    source = set(_ngrams(article, n))
    return sum(g not in source for g in grams), len(grams)


def novel_ngram_pct(summary: Sequence[str], article: Sequence[str], n: int) -> float | None:
    """Percentage of summary n-grams absent from the article; ``None`` if the summary is shorter than n."""
    novel, tot = novelty_counts(summary, article, n)
    return 100.0 * novel / tot if tot else None


def split_sentences(tokens: Sequence[str]) -> list[list[str]]:
    """Split on sentence-final tokens; the terminator is not part of the sentence."""
    out, cur = [], []
    for tok in tokens:
        if tok in SENTENCE_END:
            if cur:
                out.append(cur)
            cur = []
        else:
            cur.append(tok)
    if cur:
        out.append(cur)
    return out


def _occurs(seq: Sequence[str], article: Sequence[str]) -> bool:
    k = len(seq)
    return any(list(article[i:i + k]) == list(seq) for i in range(len(article) - k + 1))


def sentence_counts(summary: Sequence[str], article: Sequence[str]) -> tuple[int, int]:
    """(novel, total) summary sentences; novel means not found contiguously in the article."""
    sents = split_sentences(summary)
    return sum(not _occurs(s, article) for s in sents), len(sents)


def novel_sentence_pct(summary: Sequence[str], article: Sequence[str]) -> float | None:
    novel, tot = sentence_counts(summary, article)
    return 100.0 * novel / tot if tot else None


def overlap_analysis(summary: Sequence[str], article: Sequence[str], max_n: int = 4) -> dict:
    """Percent of summary n-grams (n = 1..max_n) and sentences found in the article.

    Keys are the integers ``1..max_n`` and ``"sentences"``; values are ``None``
    when the summary has no units of that kind.
    """
    out: dict = {}
    for n in range(1, max_n + 1):
        novel, tot = novelty_counts(summary, article, n)
        out[n] = 100.0 * (tot - novel) / tot if tot else None
    novel, tot = sentence_counts(summary, article)
    out["sentences"] = 100.0 * (tot - novel) / tot if tot else None
    return out


# ---------------------------------------------------------------------------
# generation-probability statistics and attention


def pgen_bucket(p: float) -> int:
    """Bucket k covers [k/10, (k+1)/10); 1.0 falls in the last bucket."""
    return min(int(np.floor(p * 10.0)), 9)


def pgen_stats(values: Iterable[float]) -> tuple[float, list[int]]:
    """Mean generation probability and a 10-bucket histogram of counts."""
    vals = list(values)
    if not vals:
        raise ValueError("pgen_stats needs at least one step")
    hist = [0] * 10
    for v in vals:
        hist[pgen_bucket(v)] += 1
    return float(np.mean(vals)), hist


def cumulative_attention(trace) -> np.ndarray:
    """Per-article-token sum of attention over all decoding steps."""
    out = np.zeros(trace.n)
    for r in trace.records:
        out += r.attention
    return out


# ---------------------------------------------------------------------------
# Fisher-Pitman paired permutation test


def _count_ge(deltas: np.ndarray, observed: float, signs: np.ndarray, tol: float) -> int:
    sums = signs @ deltas
    return int(np.count_nonzero(sums >= observed - tol))


def fisher_pitman_test(deltas: Sequence[float], exact_limit: int = 20, n_resamples: int = 100_000,
                       seed: int = 0) -> float:
    """One-sided p-value that the mean paired difference is positive.

    Enumerates all ``2**k`` sign flips when ``k <= exact_limit`` (the identity
    pattern included), otherwise draws ``n_resamples`` seeded random flips and
    returns ``(1 + hits) / (1 + n_resamples)``.
    """
    d = np.asarray(list(deltas), dtype=np.float64)
    k = d.size
    if k == 0:
        raise ValueError("fisher_pitman_test needs at least one pair")
    observed = float(d.sum())
    # ties are counted as "at least as extreme"; absorb summation-order rounding
    tol = 1e-12 * max(1.0, float(np.abs(d).sum()))
    if k <= exact_limit:
        hits = 0
        chunk_bits = min(k, 16)
        low = np.array(list(itertools.product((1.0, -1.0), repeat=chunk_bits)))
        high_bits = k - chunk_bits
        for high in itertools.product((1.0, -1.0), repeat=high_bits):
            part = float(np.dot(high, d[:high_bits])) if high_bits else 0.0
            hits += _count_ge(d[high_bits:], observed - part, low, tol)
        return hits / float(2 ** k)
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < n_resamples:
        m = min(10_000, n_resamples - done)
        signs = rng.choice((-1.0, 1.0), size=(m, k))
        hits += _count_ge(d, observed, signs, tol)
        done += m
    return (1 + hits) / (1 + n_resamples)


# ---------------------------------------------------------------------------
# shunting


@dataclass
class ShuntEvent:
    step: int
    from_pos: int
    from_sentence: int
    to_pos: int
    to_sentence: int
    mid_clause: bool


def detect_shunts(trace, sentence_end: frozenset = SENTENCE_END) -> list[ShuntEvent]:
    """Mid-clause jumps of the attention argmax between article sentences.

    An event is recorded at step t when the argmax position moves to another
    sentence, the previous argmax was not its sentence's last token, and the
    token emitted at step t-1 did not end a summary sentence.
    """
    starts = trace.sentence_starts
    n = trace.n
    last_token = {k: (starts[k + 1] if k + 1 < len(starts) else n) - 1 for k in range(len(starts))}
    events: list[ShuntEvent] = []
    period_since_event = False
    recs = trace.records
    for t in range(1, len(recs)):
        prev_surface = recs[t - 1].surface
        if prev_surface in sentence_end:
            period_since_event = True
        i, j = recs[t - 1].copy_position, recs[t].copy_position
        si, sj = sentence_of(starts, i), sentence_of(starts, j)
        if si == sj or i == last_token[si] or prev_surface in sentence_end:
            continue
        events.append(ShuntEvent(t, i, si, j, sj, not period_since_event))
        period_since_event = False
    return events


# ---------------------------------------------------------------------------
# per-document report


@dataclass
class MetricsReport:
    doc_id: str
    rouge1: float
    rouge2: float
    rougeL: float
    novel: dict = field(default_factory=dict)       # n -> (novel, total)
    novel_sentences: tuple = (0, 0)
    pgens: list = field(default_factory=list)
    shunts: list = field(default_factory=list)

    def novel_pct(self, n) -> float | None:
        novel, tot = self.novel[n]
        return 100.0 * novel / tot if tot else None

    @property
    def novel_sentence_pct(self) -> float | None:
        novel, tot = self.novel_sentences
        return 100.0 * novel / tot if tot else None

    @property
    def avg_pgen(self) -> float | None:
        return float(np.mean(self.pgens)) if self.pgens else None

    @property
    def pgen_histogram(self) -> list[int]:
        return pgen_stats(self.pgens)[1] if self.pgens else [0] * 10


def build_report(doc_id: str, summary: Sequence[str], reference: Sequence[str], article: Sequence[str],
                 trace=None) -> MetricsReport:
    rep = MetricsReport(
        doc_id,
        rouge_n(summary, reference, 1)[2],
        rouge_n(summary, reference, 2)[2],
        rouge_l(summary, reference)[2],
        {n: novelty_counts(summary, article, n) for n in range(1, 5)},
        sentence_counts(summary, article),
    )
    if trace is not None:
        rep.pgens = [r.p_gen for r in trace.records]
        rep.shunts = detect_shunts(trace)
    return rep


def aggregate(reports: Sequence[MetricsReport], label: str = "ALL", novelty_avg: str = "micro") -> MetricsReport:
    """Corpus-level row: mean ROUGE, pooled (micro) or averaged (macro) novelty, pooled p_gen."""
    if not reports:
        raise ValueError("nothing to aggregate")
    agg = MetricsReport(label, float(np.mean([r.rouge1 for r in reports])),
                        float(np.mean([r.rouge2 for r in reports])),
                        float(np.mean([r.rougeL for r in reports])))
    keys = [1, 2, 3, 4]
    if novelty_avg == "micro":
        agg.novel = {n: tuple(map(sum, zip(*(r.novel[n] for r in reports)))) for n in keys}
        agg.novel_sentences = tuple(map(sum, zip(*(r.novel_sentences for r in reports))))
    else:
        # macro: represent each mean percentage as a (pct, 100) pair
        for n in keys:
            vals = [r.novel_pct(n) for r in reports if r.novel_pct(n) is not None]
            agg.novel[n] = (float(np.mean(vals)), 100) if vals else (0, 0)
        vals = [r.novel_sentence_pct for r in reports if r.novel_sentence_pct is not None]
        agg.novel_sentences = (float(np.mean(vals)), 100) if vals else (0, 0)
    agg.pgens = [p for r in reports for p in r.pgens]
    agg.shunts = [e for r in reports for e in r.shunts]
    return agg


REPORT_COLUMNS = ("doc", "R1", "R2", "RL", "novel_1", "novel_2", "novel_3", "novel_4",
                  "novel_sentences", "avg_pgen")


def _fmt(v, digits):
    return "NA" if v is None else f"{v:.{digits}f}"


def format_report_row(rep: MetricsReport) -> str:
    cells = [rep.doc_id, _fmt(rep.rouge1, 4), _fmt(rep.rouge2, 4), _fmt(rep.rougeL, 4)]
    cells += [_fmt(rep.novel_pct(n), 2) for n in range(1, 5)]
    cells += [_fmt(rep.novel_sentence_pct, 2), _fmt(rep.avg_pgen, 4)]
    return "\t".join(cells)


def format_report(reports: Sequence[MetricsReport]) -> str:
    header = "\t".join(REPORT_COLUMNS) + "\n"
    return header + "".join(format_report_row(r) + "\n" for r in reports)


def emit_report(reports: Sequence[MetricsReport], path):
    """Write the tab-separated table: ROUGE-1/2/L, novel n-grams 1-4, novel sentences, average p_gen."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_report(reports))


def format_shunt_log(doc_id: str, events: Sequence[ShuntEvent]) -> str:
    return "".join(f"{doc_id}\t{e.step}\t{e.from_pos}\t{e.to_pos}\t{e.from_sentence}\t{e.to_sentence}"
                   f"\t{'mid' if e.mid_clause else 'after'}\n" for e in events)
