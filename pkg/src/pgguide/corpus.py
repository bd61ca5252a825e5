"""Reader and writer for the tab-separated corpus format.

A corpus is a sequence of records separated by blank lines::

    #doc <id>
    #sent
    surface<TAB>POS<TAB>NER<TAB>coref
    ...
    #summary
    surface
    ...

``coref`` is ``-`` or comma-separated ``chain:role`` entries with role ``m``
(mention) or ``c`` (clause); the long forms ``mention``/``clause`` are accepted.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .annotate import AnnotatedDocument, Vocabulary, annotate_document, chains_from_marks


class CorpusError(ValueError):
    pass


@dataclass
class Document:
    """One corpus record exactly as written (tag strings kept raw)."""

    doc_id: str
    tokens: list[str] = field(default_factory=list)
    pos: list[str] = field(default_factory=list)
    ner: list[str] = field(default_factory=list)
    coref: list[str] = field(default_factory=list)
    sentence_starts: list[int] = field(default_factory=list)
    summary: list[str] = field(default_factory=list)
    has_summary: bool = True

    def marks(self) -> list[list[tuple[int, str]]]:
        return [parse_coref_field(c) for c in self.coref]

    def annotate(self, vocab: Vocabulary, cue_set: str = "both") -> AnnotatedDocument:
        return annotate_document(
            self.doc_id, self.tokens, vocab, pos=self.pos, ner=self.ner,
            chains=chains_from_marks(self.marks()), sentence_starts=self.sentence_starts,
            summary=self.summary, cue_set=cue_set)


def parse_coref_field(text: str, lineno: int | None = None) -> list[tuple[int, str]]:
    if text == "-":
        return []
    out = []
    for entry in text.split(","):
        chain, sep, role = entry.partition(":")
        where = f"line {lineno}: " if lineno else ""
        if not sep or not chain.isdigit():
            raise CorpusError(f"{where}bad coref entry {entry!r}")
        role = {"m": "m", "mention": "m", "c": "c", "clause": "c"}.get(role)
        if role is None:
            raise CorpusError(f"{where}bad coref role in {entry!r}")
        out.append((int(chain), role))
    return out


def format_coref_field(marks: Iterable[tuple[int, str]]) -> str:
    marks = list(marks)
    return ",".join(f"{k}:{r}" for k, r in marks) if marks else "-"


def read_corpus(path) -> Iterator[Document]:
    """Stream raw :class:`Document` records from ``path``."""
    with open(path, encoding="utf-8") as fh:
        doc: Document | None = None
        section = None
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                if doc is not None:
                    yield _finish(doc, lineno)
                    doc = None
                continue
            if line.startswith("#doc"):
                if doc is not None:
                    raise CorpusError(f"line {lineno}: #doc inside an unterminated record")
                doc = Document(line[4:].strip(), has_summary=False)
                section = None
                continue
            if doc is None:
                raise CorpusError(f"line {lineno}: content outside a #doc record")
            if line == "#sent":
                if section == "summary":
                    raise CorpusError(f"line {lineno}: #sent after #summary")
                section = "article"
                doc.sentence_starts.append(len(doc.tokens))
                continue
            if line == "#summary":
                section = "summary"
                doc.has_summary = True
                continue
            if section == "article":
                cols = line.split("\t")
                if len(cols) != 4 or not cols[0]:
                    raise CorpusError(f"line {lineno}: expected 4 tab-separated columns, got {len(cols)}")
                parse_coref_field(cols[3], lineno)
                doc.tokens.append(cols[0])
                doc.pos.append(cols[1])
                doc.ner.append(cols[2])
                doc.coref.append(cols[3])
            elif section == "summary":
                if "\t" in line:
                    raise CorpusError(f"line {lineno}: summary lines carry the surface only")
                doc.summary.append(line)
            else:
                raise CorpusError(f"line {lineno}: token before any #sent marker")
        if doc is not None:
            yield _finish(doc, lineno + 1)


def _finish(doc: Document, lineno: int) -> Document:
    if not doc.tokens:
        raise CorpusError(f"line {lineno}: record {doc.doc_id!r} has no article tokens")
    if len(set(doc.sentence_starts)) != len(doc.sentence_starts):
        raise CorpusError(f"line {lineno}: record {doc.doc_id!r} has an empty sentence")
    return doc


def load_corpus(path, vocab: Vocabulary, cue_set: str = "both") -> Iterator[AnnotatedDocument]:
    for doc in read_corpus(path):
        yield doc.annotate(vocab, cue_set)


def format_document(doc: Document) -> str:
    lines = [f"#doc {doc.doc_id}"]
    starts = set(doc.sentence_starts)
    for i, tok in enumerate(doc.tokens):
        if i in starts:
            lines.append("#sent")
        lines.append(f"{tok}\t{doc.pos[i]}\t{doc.ner[i]}\t{doc.coref[i]}")
    if doc.has_summary:
        lines.append("#summary")
        lines.extend(doc.summary)
    return "\n".join(lines) + "\n"


def save_corpus(docs: Iterable[Document], path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(format_document(d) for d in docs))
