"""Synthetic summarisation tasks small enough to train at desk scale.

copy-span
    The summary is the article's first sentence, which always contains at
    least one out-of-vocabulary name when the OOV rate is positive.
forbidden-copy
    About half the content tokens are adjectives (the cue class).  The
    summary is the first sentence with every adjective replaced by one
    generic word that never occurs in articles, so adjectives are never
    copied and every replacement is a novel word.
two-entity
    Two coreference chains whose mentions sit in separate clauses.  The
    summary lists the clauses of the first chain, one summary sentence per
    clause.  Clauses of both chains share a word, inviting mid-clause jumps.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .annotate import RESERVED, AnnotatedDocument, Vocabulary
from .corpus import Document, format_coref_field


@dataclass
class SyntheticTaskSpec:
    task: str = "copy-span"
    vocab_size: int = 200
    article_len: int = 30
    oov_rate: float = 0.1
    seed: int = 0
    min_sentence: int = 4
    max_sentence: int = 8

    def __post_init__(self):
        if self.task not in ("copy-span", "forbidden-copy", "two-entity"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.vocab_size < 40:
            raise ValueError("synthetic vocabularies need at least 40 entries")
        if not 0.0 <= self.oov_rate < 1.0:
            raise ValueError("oov_rate must lie in [0, 1)")


_POS_CYCLE = ("NN", "VB", "NN", "RB")

# forbidden-copy summaries replace every cue-marked word with this vocabulary word
GENERIC = "para0"


def synthetic_vocab(spec: SyntheticTaskSpec) -> Vocabulary:
    """Reserved tokens, punctuation, then adjectives, paraphrases, entities and plain words."""
    n_content = spec.vocab_size - len(RESERVED) - 2
    n_adj = n_content // 8
    n_ent = 8
    n_plain = n_content - 2 * n_adj - n_ent
    words = ([f"adj{i}" for i in range(n_adj)] + [f"para{i}" for i in range(n_adj)]
             + [f"ent{i}" for i in range(n_ent)] + [f"w{i}" for i in range(n_plain)])
    return Vocabulary(list(RESERVED) + [".", ","] + words)


def _word_pos(word: str) -> str:
    if word.startswith("adj"):
        return "JJ"
    if word.startswith("ent") or word.startswith("name"):
        return "NNP"
    if word in (".", ","):
        return word
    return _POS_CYCLE[int(word[1:]) % len(_POS_CYCLE)]


def _word_ner(word: str) -> str:
    return "PERSON" if word.startswith("ent") or word.startswith("name") else "O"


class _Gen:
    def __init__(self, spec: SyntheticTaskSpec, rng: np.random.Generator):
        self.spec = spec
        self.rng = rng
        vocab = synthetic_vocab(spec)
        self.adjs = [w for w in vocab.itos if w.startswith("adj")]
        self.ents = [w for w in vocab.itos if w.startswith("ent")]
        self.plain = [w for w in vocab.itos if w.startswith("w")]

    def plain_word(self) -> str:
        if self.spec.oov_rate and self.rng.random() < self.spec.oov_rate:
            return self.name()
        return self.plain[self.rng.integers(len(self.plain))]

    def name(self) -> str:
        return f"name{self.rng.integers(10_000)}"

    def sentence_lengths(self, total: int) -> list[int]:
        """Content lengths of sentences (each followed by '.') filling ``total`` tokens."""
        lo, hi = self.spec.min_sentence, self.spec.max_sentence
        out, used = [], 0
        while used < total:
            k = int(self.rng.integers(lo, hi + 1))
            if total - used - (k + 1) < lo + 1:
                k = total - used - 1
            out.append(k)
            used += k + 1
        return out


def _assemble(doc_id, sentences, summary, coref=None) -> Document:
    doc = Document(doc_id)
    for sent in sentences:
        doc.sentence_starts.append(len(doc.tokens))
        for tok in sent:
            doc.tokens.append(tok)
            doc.pos.append(_word_pos(tok))
            doc.ner.append(_word_ner(tok))
    doc.coref = [format_coref_field(coref[i]) if coref else "-" for i in range(len(doc.tokens))]
    doc.summary = list(summary)
    return doc


def _copy_span(g: _Gen, doc_id: str) -> Document:
    sents = [[g.plain_word() for _ in range(k)] + ["."] for k in g.sentence_lengths(g.spec.article_len)]
    first = sents[0]
    if g.spec.oov_rate > 0 and not any(t.startswith("name") for t in first):
        first[int(g.rng.integers(len(first) - 1))] = g.name()
    return _assemble(doc_id, sents, first)


def _forbidden_copy(g: _Gen, doc_id: str) -> Document:
    sents = []
    for k in g.sentence_lengths(g.spec.article_len):
        sent = []
        for _ in range(k):
            if g.rng.random() < 0.5:
                sent.append(g.adjs[g.rng.integers(len(g.adjs))])
            else:
                sent.append(g.plain_word())
        sents.append(sent + ["."])
    summary = [GENERIC if t.startswith("adj") else t for t in sents[0]]
    return _assemble(doc_id, sents, summary)


def _two_entity(g: _Gen, doc_id: str) -> Document:
    """Four sentences of two clauses; chain 0 owns clauses (0,0) and (2,1),
    chain 1 owns (1,1) and (2,0).  Each chain-1 clause repeats the word that
    sits in the middle of the chain-0 clause it precedes or follows."""
    ea, eb = (g.ents[i] for i in g.rng.choice(len(g.ents), size=2, replace=False))
    lo, hi = max(3, g.spec.min_sentence // 2 + 1), max(4, g.spec.max_sentence // 2 + 1)

    def clause(head=None):
        k = int(g.rng.integers(lo, hi + 1))
        words = [g.plain_word() for _ in range(k)]
        if head:
            words[0] = head
        return words

    layout = {(0, 0): 0, (1, 1): 1, (2, 0): 1, (2, 1): 0}
    clauses = {}
    for s in range(4):
        for c in range(2):
            owner = layout.get((s, c))
            clauses[(s, c)] = clause({0: ea, 1: eb}.get(owner))
    # shared bridge words: each chain-0 clause shares its middle word with a chain-1 clause
    for a_key, b_key in (((0, 0), (1, 1)), ((2, 1), (2, 0))):
        mid_a = len(clauses[a_key]) // 2
        mid_b = len(clauses[b_key]) // 2
        clauses[b_key][mid_b] = clauses[a_key][mid_a]
    sentences, coref, summary = [], [], []
    for s in range(4):
        sent, marks = [], []
        for c in range(2):
            words = clauses[(s, c)]
            owner = layout.get((s, c))
            for i, w in enumerate(words):
                sent.append(w)
                if owner is None:
                    marks.append([])
                else:
                    marks.append([(owner, "m" if i == 0 else "c")])
            if owner == 0:
                summary += words + ["."]
            sent.append("," if c == 0 else ".")
            marks.append([])
        sentences.append(sent)
        coref.extend(marks)
    return _assemble(doc_id, sentences, summary, coref)


_BUILDERS = {"copy-span": _copy_span, "forbidden-copy": _forbidden_copy, "two-entity": _two_entity}


def generate_documents(spec: SyntheticTaskSpec, count: int | None = None, prefix: str = "") -> Iterator[Document]:
    """Deterministic stream of raw corpus records for ``spec`` (infinite if ``count`` is None)."""
    rng = np.random.default_rng(spec.seed)
    g = _Gen(spec, rng)
    build = _BUILDERS[spec.task]
    k = 0
    while count is None or k < count:
        yield build(g, f"{prefix}{spec.task}-{spec.seed}-{k}")
        k += 1


def generate_synthetic(spec: SyntheticTaskSpec, count: int | None = None, cue_set: str = "both",
                       vocab: Vocabulary | None = None) -> Iterator[AnnotatedDocument]:
    """Annotated documents for ``spec``, ready for the model."""
    vocab = vocab or synthetic_vocab(spec)
    for doc in generate_documents(spec, count):
        yield doc.annotate(vocab, cue_set)
