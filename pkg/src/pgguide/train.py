"""Teacher-forced training with gradient accumulation, plus batch evaluation."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import autodiff as ad
from .annotate import AnnotatedDocument, Vocabulary
from .checkpoint import load_checkpoint, save_checkpoint
from .config import Config
from .corpus import load_corpus
from .decode import DecodingTrace, decode, resolve_tokens
from .metrics import MetricsReport, build_report
from .model import AFFINITY_PARAMS, GUIDED_PARAMS, ModelParameters, init_parameters
from .network import sequence_loss
from .optim import AdagradState, adagrad_step, clip_by_global_norm
from .synthetic import SyntheticTaskSpec, generate_synthetic, synthetic_vocab

log = logging.getLogger(__name__)

LOSS_COLUMNS = ("step", "nll", "L", "affinity", "total")

# held-out synthetic documents come from a stream seeded away from training
HELDOUT_SEED_OFFSET = 1_000_003


class TrainingDiverged(FloatingPointError):
    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value} at step {step}")
        self.step = step


@dataclass
class LossRecord:
    step: int
    nll: float
    L: float
    affinity: float
    total: float


@dataclass
class TrainResult:
    params: ModelParameters
    vocab: Vocabulary
    curve: list[LossRecord] = field(default_factory=list)


def task_spec(cfg: Config, heldout: bool = False) -> SyntheticTaskSpec:
    seed = cfg.seed + (HELDOUT_SEED_OFFSET if heldout else 0)
    return SyntheticTaskSpec(cfg.task, cfg.vocab_size, cfg.article_len, cfg.oov_rate, seed)


def resolve_vocab(cfg: Config) -> Vocabulary:
    if cfg.vocab:
        return Vocabulary.load(cfg.vocab)
    if cfg.corpus:
        raise ValueError("a corpus run needs a vocabulary file (vocab = PATH)")
    return synthetic_vocab(task_spec(cfg))


def training_documents(cfg: Config, vocab: Vocabulary) -> Iterator[AnnotatedDocument]:
    """Endless deterministic document stream: the corpus cycled in file order,
    a fixed pool of ``task_n`` synthetic documents, or fresh synthetic documents."""
    if cfg.corpus:
        docs = list(load_corpus(cfg.corpus, vocab, cfg.cues))
        docs = [d for d in docs if d.summary]
        if not docs:
            raise ValueError(f"{cfg.corpus}: no documents with summaries")
        return itertools.cycle(docs)
    stream = generate_synthetic(task_spec(cfg), None, cfg.cues, vocab)
    if cfg.task_n:
        return itertools.cycle(list(itertools.islice(stream, cfg.task_n)))
    return stream


def heldout_documents(cfg: Config, vocab: Vocabulary, count: int) -> list[AnnotatedDocument]:
    return list(generate_synthetic(task_spec(cfg, heldout=True), count, cfg.cues, vocab))


def trainable_names(params: ModelParameters, cfg: Config) -> list[str]:
    skip = set()
    if not cfg.guided:
        skip.update(GUIDED_PARAMS)
    if not cfg.affinity:
        skip.update(AFFINITY_PARAMS)
    return [n for n in params.names() if n not in skip]


def affinity_active(cfg: Config, step: int) -> bool:
    """The auxiliary affinity loss joins the objective for steps at or after
    ``affinity_phase * steps``."""
    return cfg.affinity and step >= math.floor(cfg.affinity_phase * cfg.steps)


def warm_start(params: ModelParameters, path) -> ModelParameters:
    """Load a checkpoint, skipping guided/affinity weights so they stay fresh."""
    arrays = load_checkpoint(path)
    keep = {k: v for k, v in arrays.items() if k not in GUIDED_PARAMS + AFFINITY_PARAMS}
    params.load_arrays(keep, strict=False)
    return params


def accumulate(docs: Sequence[AnnotatedDocument], params: ModelParameters, names: Sequence[str], cfg: Config,
               vocab: Vocabulary, use_affinity: bool) -> tuple[dict[str, np.ndarray], LossRecord]:
    """Mean gradient and mean loss components over ``docs``."""
    tensors = [params._t[n] for n in names]
    grads = {n: np.zeros(t.shape) for n, t in zip(names, tensors)}
    sums = np.zeros(4)
    for doc in docs:
        with ad.new_graph() as g:
            lb = sequence_loss(doc, params, cfg, start_id=vocab.start, stop_id=vocab.stop,
                               affinity_active=use_affinity)
            ad.backward(lb.total, tensors, g)
        for n, t in zip(names, tensors):
            grads[n] += t.grad
            t.grad = None
        sums += (lb.nll, lb.insignificance, lb.affinity, lb.total.item())
    k = len(docs)
    for n in grads:
        grads[n] /= k
    nll_, L, aff, tot = (sums / k).tolist()
    return grads, LossRecord(0, nll_, L, aff, tot)


def train(cfg: Config, params: ModelParameters | None = None, vocab: Vocabulary | None = None,
          docs: Iterable[AnnotatedDocument] | None = None, progress_every: int = 0) -> TrainResult:
    """Run ``cfg.steps`` Adagrad updates, each over ``cfg.accum`` documents.

    Deterministic given the config.  Raises :class:`TrainingDiverged` on a
    non-finite loss.
    """
    vocab = vocab or resolve_vocab(cfg)
    if params is None:
        params = init_parameters(cfg, len(vocab), cfg.seed)
        if cfg.warm_start:
            warm_start(params, cfg.warm_start)
    stream = iter(docs) if docs is not None else training_documents(cfg, vocab)
    names = trainable_names(params, cfg)
    state = AdagradState(cfg.lr, cfg.acc_init, cfg.adagrad_eps, cfg.clip)
    result = TrainResult(params, vocab)
    for step in range(cfg.steps):
        batch = list(itertools.islice(stream, cfg.accum))
        if not batch:
            break
        grads, rec = accumulate(batch, params, names, cfg, vocab, affinity_active(cfg, step))
        rec.step = step
        if not math.isfinite(rec.total):
            raise TrainingDiverged(step, rec.total)
        clip_by_global_norm(grads, cfg.clip)
        adagrad_step(params._t, grads, state)
        result.curve.append(rec)
        if progress_every and step % progress_every == 0:
            log.info("step %d nll %.4f L %.4f aff %.4f total %.4f", step, rec.nll, rec.L, rec.affinity, rec.total)
    if cfg.ckpt_out:
        save_checkpoint(cfg.ckpt_out, params.arrays())
    if cfg.loss_out:
        write_loss_curve(result.curve, cfg.loss_out)
    return result


def format_loss_curve(curve: Sequence[LossRecord]) -> str:
    lines = ["\t".join(LOSS_COLUMNS)]
    lines += [f"{r.step}\t{r.nll!r}\t{r.L!r}\t{r.affinity!r}\t{r.total!r}" for r in curve]
    return "\n".join(lines) + "\n"


def write_loss_curve(curve: Sequence[LossRecord], path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_loss_curve(curve))


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class Evaluation:
    doc: AnnotatedDocument
    trace: DecodingTrace
    summary: list[str]
    report: MetricsReport


def evaluate(params: ModelParameters, docs: Iterable[AnnotatedDocument], cfg: Config,
             vocab: Vocabulary, mode: str | None = None) -> Iterator[Evaluation]:
    """Decode each document and score it against its reference summary."""
    for doc in docs:
        trace = decode(doc, params, cfg, vocab, mode)
        summary = resolve_tokens(trace, doc, vocab).split(" ") if trace.tokens else []
        report = build_report(doc.doc_id, summary, doc.summary, doc.tokens, trace)
        yield Evaluation(doc, trace, summary, report)


def token_accuracy(pairs: Iterable[tuple[Sequence[str], Sequence[str]]]) -> float:
    """Pooled positional matches over the pooled longer length of each pair."""
    hits = total = 0
    for dec, ref in pairs:
        hits += sum(a == b for a, b in zip(dec, ref))
        total += max(len(dec), len(ref))
    return hits / total if total else 1.0
