"""Linguistic cues, coreference tags and vocabulary bookkeeping.

Annotations normally arrive precomputed in corpus files; the rule taggers here
are small fallbacks meant for synthetic or unannotated text.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

POS_CLASSES = ("Noun", "Verb", "Adjective", "Other")
NER_CLASSES = (
    "Person", "Location", "Organization", "Duration", "Date", "Cardinal",
    "Percent", "Money", "Measure", "Facility", "GPE", "Other",
)
CUE_SETS = {"none": (False, False), "pos": (True, False), "ner": (False, True), "both": (True, True)}

PAD, UNK, START, STOP = "<pad>", "<unk>", "<start>", "<stop>"
RESERVED = (PAD, UNK, START, STOP)

CLAUSE_PUNCT = frozenset({",", ";", ".", "!", "?"})
CLAUSE_WORDS = frozenset({"and", "but", "which", "who", "that"})


class AnnotationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# tag normalisation

_POS_ALIASES = {
    "noun": "Noun", "propn": "Noun",
    "verb": "Verb", "aux": "Verb",
    "adjective": "Adjective", "adj": "Adjective",
}

_NER_ALIASES = {
    "person": "Person", "per": "Person",
    "location": "Location", "loc": "Location",
    "organization": "Organization", "organisation": "Organization", "org": "Organization",
    "duration": "Duration", "date": "Date", "time": "Date",
    "cardinal": "Cardinal", "number": "Cardinal",
    "percent": "Percent", "money": "Money",
    "measure": "Measure", "quantity": "Measure",
    "facility": "Facility", "fac": "Facility",
    "gpe": "GPE",
}


def pos_class(tag: str) -> str:
    """Map a POS tag string (coarse name or Penn tag) to one of POS_CLASSES."""
    low = tag.lower()
    if low in _POS_ALIASES:
        return _POS_ALIASES[low]
    up = tag.upper()
    if up.startswith("NN"):
        return "Noun"
    if up.startswith("VB") or up == "MD":
        return "Verb"
    if up.startswith("JJ"):
        return "Adjective"
    return "Other"


def ner_class(tag: str) -> str:
    """Map an NER label (any case, BIO prefix allowed) to one of NER_CLASSES."""
    low = tag.lower()
    if low[:2] in ("b-", "i-"):
        low = low[2:]
    return _NER_ALIASES.get(low, "Other")


# ---------------------------------------------------------------------------
# fallback taggers

_CLOSED_CLASS = frozenset("""
a an the this these those my your his her its our their some any no every each
of in on at by for with from to into onto over under about after before between
through during without within against among and or but nor so yet if because
while although though than as that which who whom whose what where when why how
i you he she it we they me him us them myself himself herself itself themselves
not very also just only too there here then now again ever never
""".split())

_VERB_LEXICON = frozenset("""
is was are were be been being am has have had do does did says said say
will would can could shall should may might must go went gone make made take
took get got see saw know knew think thought come came give gave find found
tell told become became leave left feel felt put bring brought begin began keep
kept hold held run ran win won die died
""".split())

_ADJ_LEXICON = frozenset("""
good bad new old big small great little high low long short young large early
late important public able free full real best better sure whole own top
""".split())

_VERB_SUFFIXES = ("ing", "ed", "ly")
_ADJ_SUFFIXES = ("ous", "ful", "ive")


def fallback_pos_tag(tokens: Sequence[str]) -> list[str]:
    """Deterministic lexicon and suffix tagger over the 4-class POS inventory."""
    out = []
    for tok in tokens:
        low = tok.lower()
        if low in _CLOSED_CLASS:
            out.append("Other")
        elif low in _VERB_LEXICON:
            out.append("Verb")
        elif low in _ADJ_LEXICON:
            out.append("Adjective")
        elif not any(ch.isalpha() for ch in tok):
            out.append("Other")
        elif any(low.endswith(s) and len(low) >= len(s) + 3 for s in _VERB_SUFFIXES):
            out.append("Verb")
        elif any(low.endswith(s) and len(low) >= len(s) + 3 for s in _ADJ_SUFFIXES):
            out.append("Adjective")
        else:
            out.append("Noun")
    return out


_PERSON_NAMES = frozenset("""
anne margot john mary james robert michael william david richard joseph thomas
charles daniel paul mark george elizabeth sarah jessica susan karen lisa nancy
cristiano ronaldo rand rahm jesus darren aaron dzhokhar obama clinton trump
""".split())
_LOCATIONS = frozenset("""
europe asia africa america antarctica atlantic pacific everest alps sahara
amazon nile himalayas arctic mediterranean
""".split())
_GPE = frozenset("""
india china japan germany france britain england spain italy russia canada
mexico brazil australia iraq iran syria egypt israel london paris berlin tokyo
washington chicago boston kentucky missouri ferguson louisville massachusetts
oklahoma bangalore pittsburgh amsterdam granada madrid
""".split())
_MONTHS = frozenset("""
january february march april may june july august september october november
december monday tuesday wednesday thursday friday saturday sunday
""".split())
_DURATIONS = frozenset("years months weeks days hours minutes decades".split())


def fallback_ner_tag(tokens: Sequence[str]) -> list[str]:
    """Pattern and gazetteer tagger over the 12-class NER inventory."""
    out = []
    for tok in tokens:
        low = tok.lower()
        if tok.isdigit():
            out.append("Date" if len(tok) == 4 and 1000 <= int(tok) <= 2100 else "Cardinal")
        elif tok.startswith("$") and len(tok) > 1:
            out.append("Money")
        elif tok.endswith("%") and len(tok) > 1:
            out.append("Percent")
        elif low in _PERSON_NAMES:
            out.append("Person")
        elif low in _GPE:
            out.append("GPE")
        elif low in _LOCATIONS:
            out.append("Location")
        elif low in _MONTHS:
            out.append("Date")
        elif low in _DURATIONS:
            out.append("Duration")
        else:
            out.append("Other")
    return out


# ---------------------------------------------------------------------------
# cue vectors


def cue_dim(active: str) -> int:
    use_pos, use_ner = CUE_SETS[active]
    return 4 * use_pos + 12 * use_ner


def build_cue_vectors(pos_tags: Sequence[str], ner_tags: Sequence[str], active: str = "both") -> np.ndarray:
    """One-hot POS/NER blocks per token, shape ``(n, cue_dim(active))``.

    Tags are class names from POS_CLASSES / NER_CLASSES (raw tag strings are
    normalised through :func:`pos_class` and :func:`ner_class`).
    """
    if active not in CUE_SETS:
        raise AnnotationError(f"unknown cue set {active!r}")
    if len(pos_tags) != len(ner_tags):
        raise AnnotationError(f"cue length mismatch: {len(pos_tags)} POS vs {len(ner_tags)} NER tags")
    use_pos, use_ner = CUE_SETS[active]
    n = len(pos_tags)
    out = np.zeros((n, cue_dim(active)))
    for i in range(n):
        off = 0
        if use_pos:
            out[i, POS_CLASSES.index(pos_class(pos_tags[i]))] = 1.0
            off = 4
        if use_ner:
            out[i, off + NER_CLASSES.index(ner_class(ner_tags[i]))] = 1.0
    return out


# ---------------------------------------------------------------------------
# coreference tags


@dataclass(frozen=True)
class Mention:
    start: int
    end: int  # inclusive
    clause: tuple[int, int] | None = None


@dataclass
class CorefChainSpec:
    chains: list[list[Mention]] = field(default_factory=list)

    def validate(self, n: int):
        for k, chain in enumerate(self.chains):
            for m in chain:
                spans = [(m.start, m.end)] + ([m.clause] if m.clause else [])
                for s, e in spans:
                    if not (0 <= s <= e < n):
                        raise AnnotationError(f"chain {k}: span ({s}, {e}) outside [0, {n})")


def sentence_of(sentence_starts: Sequence[int], i: int) -> int:
    """Index of the sentence containing token ``i``."""
    lo, hi = 0, len(sentence_starts) - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if sentence_starts[mid] <= i:
            lo = mid
        else:
            hi = mid - 1
    return lo


def sentence_bounds(sentence_starts: Sequence[int], n: int, k: int) -> tuple[int, int]:
    """Half-open token range of sentence ``k``."""
    end = sentence_starts[k + 1] if k + 1 < len(sentence_starts) else n
    return sentence_starts[k], end


def _is_boundary(tok: str) -> bool:
    return tok in CLAUSE_PUNCT or tok.lower() in CLAUSE_WORDS


def clause_fallback(tokens: Sequence[str], sentence_starts: Sequence[int], start: int, end: int) -> tuple[int, int]:
    """Grow a mention span to the surrounding clause.

    The clause is the maximal run of tokens around the mention that contains
    no clause boundary (``, ; . ! ?`` or a connective such as "and" or
    "which") and stays inside the mention's sentence.  Returns an inclusive
    ``(start, end)`` span.
    """
    s_lo, s_hi = sentence_bounds(sentence_starts, len(tokens), sentence_of(sentence_starts, start))
    lo = start
    while lo - 1 >= s_lo and not _is_boundary(tokens[lo - 1]):
        lo -= 1
    hi = end
    while hi + 1 < s_hi and not _is_boundary(tokens[hi + 1]):
        hi += 1
    return lo, hi


def assign_coref_tags(tokens: Sequence[str], sentence_starts: Sequence[int],
                      chains: CorefChainSpec) -> list[frozenset[int]]:
    """Tag every token in each mention and its clause with the chain index."""
    n = len(tokens)
    chains.validate(n)
    tags: list[set[int]] = [set() for _ in range(n)]
    for k, chain in enumerate(chains.chains):
        for m in chain:
            lo, hi = m.clause if m.clause else clause_fallback(tokens, sentence_starts, m.start, m.end)
            lo, hi = min(lo, m.start), max(hi, m.end)
            for i in range(lo, hi + 1):
                tags[i].add(k)
    return [frozenset(t) for t in tags]


def chains_from_marks(marks: Sequence[Sequence[tuple[int, str]]]) -> CorefChainSpec:
    """Rebuild chain spans from per-token ``(chain, role)`` marks.

    Mentions are maximal runs of ``m`` marks for one chain.  A mention's clause
    is the maximal run of ``m``/``c`` marks of the same chain around it, and is
    only treated as supplied when that run contains at least one ``c`` mark.
    """
    n = len(marks)
    ids = sorted({k for ms in marks for k, _ in ms})
    remap = {k: j for j, k in enumerate(ids)}
    chains: list[list[Mention]] = [[] for _ in ids]
    for k in ids:
        role = [None] * n
        for i, ms in enumerate(marks):
            for kk, r in ms:
                if kk == k:
                    role[i] = "m" if (r == "m" or role[i] == "m") else "c"
        i = 0
        while i < n:
            if role[i] != "m":
                i += 1
                continue
            j = i
            while j + 1 < n and role[j + 1] == "m":
                j += 1
            lo, hi = i, j
            while lo - 1 >= 0 and role[lo - 1] is not None:
                lo -= 1
            while hi + 1 < n and role[hi + 1] is not None:
                hi += 1
            has_clause = any(role[x] == "c" for x in range(lo, hi + 1))
            chains[remap[k]].append(Mention(i, j, (lo, hi) if has_clause else None))
            i = j + 1
    return CorefChainSpec(chains)


# ---------------------------------------------------------------------------
# vocabulary


class Vocabulary:
    """Token <-> id map whose first entries are the reserved tokens."""

    def __init__(self, tokens: Iterable[str]):
        self.itos = list(tokens)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        missing = [t for t in RESERVED if t not in self.stoi]
        if missing:
            raise AnnotationError(f"vocabulary lacks reserved tokens {missing}")
        if len(self.stoi) != len(self.itos):
            raise AnnotationError("vocabulary contains duplicate tokens")

    def __len__(self):
        return len(self.itos)

    def __contains__(self, tok):
        return tok in self.stoi

    @property
    def pad(self):
        return self.stoi[PAD]

    @property
    def unk(self):
        return self.stoi[UNK]

    @property
    def start(self):
        return self.stoi[START]

    @property
    def stop(self):
        return self.stoi[STOP]

    @classmethod
    def build(cls, token_streams: Iterable[Iterable[str]], max_size: int = 2000):
        counts: dict[str, int] = {}
        for stream in token_streams:
            for tok in stream:
                if tok not in RESERVED:
                    counts[tok] = counts.get(tok, 0) + 1
        ranked = sorted(counts, key=lambda t: (-counts[t], t))
        return cls(list(RESERVED) + ranked[: max(0, max_size - len(RESERVED))])

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls(line.rstrip("\n") for line in fh if line.rstrip("\n"))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("".join(t + "\n" for t in self.itos))


def map_vocab(tokens: Sequence[str], vocab: Vocabulary):
    """Vocabulary ids plus dense per-article OOV indices.

    Returns ``(ids, oov_index, oovs)``: OOV tokens get the ``<unk>`` id and an
    index into ``oovs`` assigned in order of first occurrence; in-vocabulary
    tokens get ``None``.
    """
    ids, oov_index, oovs = [], [], []
    seen: dict[str, int] = {}
    for tok in tokens:
        if tok in vocab.stoi:
            ids.append(vocab.stoi[tok])
            oov_index.append(None)
        else:
            if tok not in seen:
                seen[tok] = len(oovs)
                oovs.append(tok)
            ids.append(vocab.unk)
            oov_index.append(seen[tok])
    return ids, oov_index, oovs


# ---------------------------------------------------------------------------
# model-ready documents


@dataclass
class AnnotatedDocument:
    """A tokenized article with everything the model consumes.

    ``ext_ids`` addresses the extended vocabulary: fixed ids for known words,
    ``len(vocab) + k`` for the article's k-th OOV word.  ``summary_ext`` uses
    the same space (summary words that are neither in the vocabulary nor in
    the article map to ``<unk>``).
    """

    doc_id: str
    tokens: list[str]
    ids: list[int]
    oov_index: list[int | None]
    oovs: list[str]
    cues: np.ndarray
    coref_tags: list[frozenset[int]]
    sentence_starts: list[int]
    vocab_size: int
    summary: list[str] = field(default_factory=list)
    summary_ext: list[int] = field(default_factory=list)
    unk_id: int = 1

    def __post_init__(self):
        n = len(self.tokens)
        if n < 1:
            raise AnnotationError(f"{self.doc_id}: empty article")
        for name in ("ids", "oov_index", "coref_tags"):
            if len(getattr(self, name)) != n:
                raise AnnotationError(f"{self.doc_id}: {name} has length {len(getattr(self, name))}, expected {n}")
        if self.cues.shape[0] != n:
            raise AnnotationError(f"{self.doc_id}: cue rows {self.cues.shape[0]} != {n}")
        ss = self.sentence_starts
        if not ss or ss[0] != 0 or any(b <= a for a, b in zip(ss, ss[1:])) or ss[-1] >= n:
            raise AnnotationError(f"{self.doc_id}: bad sentence starts {ss}")

    @property
    def n(self):
        return len(self.tokens)

    @property
    def ext_ids(self) -> list[int]:
        return [self.vocab_size + k if k is not None else i for i, k in zip(self.ids, self.oov_index)]

    @property
    def ext_size(self) -> int:
        return self.vocab_size + len(self.oovs)

    def truncated(self, max_len: int) -> "AnnotatedDocument":
        """Article cut to ``max_len`` tokens, OOV indices re-densified."""
        if self.n <= max_len:
            return self
        keep = self.tokens[:max_len]
        seen: dict[str, int] = {}
        oov_index = [None if k is None else seen.setdefault(tok, len(seen))
                     for tok, k in zip(keep, self.oov_index[:max_len])]
        summary_ext = [e if e < self.vocab_size else
                       (self.vocab_size + seen[tok] if tok in seen else self.unk_id)
                       for tok, e in zip(self.summary, self.summary_ext)]
        return AnnotatedDocument(
            self.doc_id, keep, self.ids[:max_len], oov_index, list(seen), self.cues[:max_len],
            self.coref_tags[:max_len], [s for s in self.sentence_starts if s < max_len],
            self.vocab_size, list(self.summary), summary_ext, self.unk_id)


def annotate_document(doc_id: str, tokens: Sequence[str], vocab: Vocabulary, *,
                      pos: Sequence[str] | None = None, ner: Sequence[str] | None = None,
                      chains: CorefChainSpec | None = None, sentence_starts: Sequence[int] | None = None,
                      summary: Sequence[str] = (), cue_set: str = "both") -> AnnotatedDocument:
    """Assemble an :class:`AnnotatedDocument`, running fallback taggers for missing layers."""
    tokens = list(tokens)
    if any(t == "" for t in tokens):
        raise AnnotationError(f"{doc_id}: empty token")
    pos = list(pos) if pos is not None else fallback_pos_tag(tokens)
    ner = list(ner) if ner is not None else fallback_ner_tag(tokens)
    starts = list(sentence_starts) if sentence_starts is not None else [0]
    ids, oov_index, oovs = map_vocab(tokens, vocab)
    tags = assign_coref_tags(tokens, starts, chains or CorefChainSpec())
    oov_lookup = {t: k for k, t in enumerate(oovs)}
    summary = list(summary)
    summary_ext = [vocab.stoi[t] if t in vocab.stoi else
                   (len(vocab) + oov_lookup[t] if t in oov_lookup else vocab.unk) for t in summary]
    return AnnotatedDocument(doc_id, tokens, ids, oov_index, oovs, build_cue_vectors(pos, ner, cue_set),
                             tags, starts, len(vocab), summary, summary_ext, vocab.unk)
