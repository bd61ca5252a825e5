"""Greedy and beam decoding over the extended vocabulary, with traces."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Protocol, Sequence

import numpy as np

from . import autodiff as ad
from .annotate import AnnotatedDocument, Vocabulary
from .config import Config
from .model import ModelParameters
from .network import decode_step, initial_state, prepare


class DecodeError(ValueError):
    pass


@dataclass
class StepRecord:
    token: int
    p_gen: float
    attention: np.ndarray
    surface: str = ""

    @property
    def copy_position(self) -> int:
        return int(np.argmax(self.attention))


@dataclass
class DecodingTrace:
    doc_id: str
    n: int
    sentence_starts: list[int]
    records: list[StepRecord] = field(default_factory=list)
    stop_id: int | None = None
    log_prob: float = 0.0

    @property
    def tokens(self) -> list[int]:
        """Emitted extended-vocabulary ids, without the final stop token."""
        toks = [r.token for r in self.records]
        if toks and toks[-1] == self.stop_id:
            toks = toks[:-1]
        return toks

    @property
    def surfaces(self) -> list[str]:
        recs = self.records
        if recs and recs[-1].token == self.stop_id:
            recs = recs[:-1]
        return [r.surface for r in recs]


class Stepper(Protocol):
    def initial(self): ...

    def step(self, state, prev_token: int) -> tuple[np.ndarray, float, np.ndarray, object]: ...


class ModelStepper:
    """Runs the model one step at a time without recording gradients."""

    def __init__(self, doc: AnnotatedDocument, params: ModelParameters, cfg: Config, mode: str | None = None):
        self.cfg = cfg
        self.params = params
        with ad.no_grad():
            self.dctx = prepare(doc, params, cfg, mode)

    @property
    def doc(self):
        return self.dctx.doc

    def initial(self):
        return initial_state(self.dctx)

    def step(self, state, prev_token):
        with ad.no_grad():
            out, new_state = decode_step(prev_token, state, self.dctx, self.params, self.cfg)
        return out.p_final.value[0], out.p_gen.item(), out.a.value[0], new_state


def _surface(doc: AnnotatedDocument | None, vocab: Vocabulary | None, token: int) -> str:
    if vocab is None:
        return str(token)
    if token < len(vocab):
        return vocab.itos[token]
    k = token - len(vocab)
    if doc is None or k >= len(doc.oovs):
        raise DecodeError(f"dangling OOV index {k}")
    return doc.oovs[k]


def decode_greedy(stepper: Stepper, start_id: int, stop_id: int, max_steps: int) -> list[tuple]:
    """Argmax decoding; returns ``(token, p_gen, attention, prob)`` per step.

    Ties go to the lowest extended-vocabulary index.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    state = stepper.initial()
    prev = start_id
    out = []
    for _ in range(max_steps):
        p, p_gen, a, state = stepper.step(state, prev)
        tok = int(np.argmax(p))
        out.append((tok, p_gen, a, float(p[tok])))
        if tok == stop_id:
            break
        prev = tok
    return out


@dataclass
class Hypothesis:
    tokens: list[int]
    log_prob: float
    state: object
    steps: list[tuple] = field(default_factory=list)

    @property
    def score(self) -> float:
        return self.log_prob / max(len(self.tokens), 1)


def _log(p: float) -> float:
    return math.log(p) if p > 0 else -math.inf


def beam_search(stepper: Stepper, start_id: int, stop_id: int, beam_width: int, max_steps: int) -> Hypothesis:
    """Beam search whose beam shrinks as hypotheses finish.

    Each round keeps the best ``beam_width - len(finished)`` expansions of the
    live hypotheses (ties broken toward the lexicographically lowest token
    sequence); expansions ending in ``stop_id`` move to the finished set.
    Finished hypotheses are ranked by log-probability per emitted token.
    With ``beam_width == 1`` this is exactly greedy decoding.
    """
    if beam_width < 1:
        raise ValueError("beam width must be at least 1")
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    live = [Hypothesis([], 0.0, stepper.initial())]
    finished: list[Hypothesis] = []
    for _ in range(max_steps):
        quota = beam_width - len(finished)
        candidates = []
        for hyp in live:
            prev = hyp.tokens[-1] if hyp.tokens else start_id
            p, p_gen, a, new_state = stepper.step(hyp.state, prev)
            top = np.argsort(-p, kind="stable")[:quota]
            for tok in top:
                tok = int(tok)
                lp = hyp.log_prob + _log(float(p[tok]))
                candidates.append((lp, hyp, tok, p_gen, a, float(p[tok]), new_state))
        candidates.sort(key=lambda c: (-c[0], c[1].tokens + [c[2]]))
        live = []
        for lp, hyp, tok, p_gen, a, prob, new_state in candidates[:quota]:
            nh = Hypothesis(hyp.tokens + [tok], lp, new_state, hyp.steps + [(tok, p_gen, a, prob)])
            (finished if tok == stop_id else live).append(nh)
        if not live or len(finished) >= beam_width:
            break
    finished.extend(live)
    return min(finished, key=lambda h: (-h.score, h.tokens))


def decode(doc: AnnotatedDocument, params: ModelParameters, cfg: Config, vocab: Vocabulary,
           mode: str | None = None, beam: int | None = None, max_steps: int | None = None) -> DecodingTrace:
    """Decode one document and return its full trace."""
    stepper = ModelStepper(doc, params, cfg, mode)
    beam = beam or cfg.beam
    max_steps = max_steps or cfg.decode_steps
    if beam == 1:
        steps = decode_greedy(stepper, vocab.start, vocab.stop, max_steps)
    else:
        steps = beam_search(stepper, vocab.start, vocab.stop, beam, max_steps).steps
    d = stepper.doc
    trace = DecodingTrace(d.doc_id, d.n, list(d.sentence_starts), stop_id=vocab.stop)
    for tok, p_gen, a, prob in steps:
        trace.records.append(StepRecord(tok, p_gen, np.array(a), _surface(d, vocab, tok)))
        trace.log_prob += _log(prob)
    return trace


def resolve_tokens(trace: DecodingTrace, doc: AnnotatedDocument, vocab: Vocabulary) -> str:
    """Surface string of the decoded summary; OOV ids map back to article words."""
    return " ".join(_surface(doc, vocab, t) for t in trace.tokens)


# ---------------------------------------------------------------------------
# trace files


def format_trace(trace: DecodingTrace) -> str:
    lines = [f"#trace {trace.doc_id}\tn={trace.n}\tsents={','.join(map(str, trace.sentence_starts))}"
             f"\tstop={trace.stop_id if trace.stop_id is not None else -1}"]
    for k, r in enumerate(trace.records):
        weights = " ".join(f"{w:.6f}" for w in r.attention)
        lines.append(f"{k}\t{r.token}\t{r.surface or r.token}\t{r.p_gen:.6f}\t{weights}")
    return "\n".join(lines) + "\n"


def write_traces(traces: Sequence[DecodingTrace], path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(format_trace(t) for t in traces))


def read_traces(path) -> Iterator[DecodingTrace]:
    with open(path, encoding="utf-8") as fh:
        trace = None
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                if trace is not None:
                    yield trace
                    trace = None
                continue
            if line.startswith("#trace"):
                if trace is not None:
                    yield trace
                head, *fields_ = line.split("\t")
                kv = dict(f.split("=", 1) for f in fields_)
                try:
                    n = int(kv["n"])
                    sents = [int(x) for x in kv["sents"].split(",") if x]
                except (KeyError, ValueError):
                    raise DecodeError(f"line {lineno}: malformed trace header") from None
                stop = int(kv.get("stop", -1))
                trace = DecodingTrace(head[len("#trace"):].strip(), n, sents, stop_id=None if stop < 0 else stop)
                continue
            if trace is None:
                raise DecodeError(f"line {lineno}: step line outside a trace")
            cols = line.split("\t")
            if len(cols) != 5:
                raise DecodeError(f"line {lineno}: expected 5 tab-separated fields")
            attn = np.array([float(x) for x in cols[4].split()])
            if attn.size != trace.n:
                raise DecodeError(f"line {lineno}: {attn.size} attention weights for n={trace.n}")
            trace.records.append(StepRecord(int(cols[1]), float(cols[3]), attn, cols[2]))
        if trace is not None:
            yield trace
