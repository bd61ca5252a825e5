"""Text heat rendering of cumulative attention and matplotlib report figures."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .annotate import AnnotatedDocument, sentence_bounds
from .metrics import MetricsReport, cumulative_attention, overlap_analysis

HEAT_LEVELS = "·░▒▓█"


def heat_level(fraction: float) -> int:
    """Quantize a value in [0, 1] to one of five levels."""
    return min(len(HEAT_LEVELS) - 1, int(fraction * len(HEAT_LEVELS)))


def render_attention(trace, doc: AnnotatedDocument) -> str:
    """Article tokens, one sentence per line, each followed by its heat glyph.

    Levels quantize cumulative attention relative to the most-attended token;
    a trace with no steps renders every token at the lowest level.
    """
    cum = cumulative_attention(trace)
    n = min(trace.n, len(doc.tokens))
    peak = float(cum.max()) if cum.size else 0.0
    glyphs = [HEAT_LEVELS[heat_level(cum[i] / peak) if peak > 0 else 0] for i in range(n)]
    starts = [s for s in doc.sentence_starts if s < n] or [0]
    lines = []
    for k in range(len(starts)):
        lo, hi = sentence_bounds(starts, n, k)
        lines.append(" ".join(f"{doc.tokens[i]}{glyphs[i]}" for i in range(lo, hi)))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# figures


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def plot_pgen_histogram(report: MetricsReport, path) -> Path:
    """Bar chart of the share of decoding steps per p_gen bucket."""
    plt = _pyplot()
    hist = np.array(report.pgen_histogram, dtype=float)
    share = 100.0 * hist / hist.sum() if hist.sum() else hist
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(np.arange(10) / 10 + 0.05, share, width=0.09, color="#4c72b0")
    ax.set_xlim(0, 1)
    ax.set_xlabel("p_gen")
    ax.set_ylabel("% of steps")
    ax.set_title(f"generation probability ({report.doc_id})")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def plot_overlap(summaries: Sequence[tuple[Sequence[str], Sequence[str]]], path, label: str = "") -> Path:
    """Percent of summary n-grams (1-4) and sentences found in the article, pooled."""
    plt = _pyplot()
    keys = [1, 2, 3, 4, "sentences"]
    per_doc = [overlap_analysis(s, a) for s, a in summaries]
    means = []
    for k in keys:
        vals = [d[k] for d in per_doc if d[k] is not None]
        means.append(float(np.mean(vals)) if vals else 0.0)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar([str(k) for k in keys], means, color="#55a868")
    ax.set_ylim(0, 100)
    ax.set_ylabel("% overlap with article")
    ax.set_title(f"source overlap {label}".strip())
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def plot_cumulative_attention(trace, doc: AnnotatedDocument, path) -> Path:
    plt = _pyplot()
    cum = cumulative_attention(trace)
    fig, ax = plt.subplots(figsize=(max(5, 0.25 * trace.n), 3))
    ax.bar(np.arange(trace.n), cum, color="#c44e52")
    ax.set_xticks(np.arange(trace.n))
    ax.set_xticklabels(doc.tokens[:trace.n], rotation=90, fontsize=7)
    for s in trace.sentence_starts[1:]:
        ax.axvline(s - 0.5, color="grey", lw=0.5)
    ax.set_ylabel("cumulative attention")
    ax.set_title(trace.doc_id)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)
