"""Finite-difference verification of the full training objective on a tiny model."""
from __future__ import annotations

from dataclasses import dataclass

from . import autodiff as ad
from .annotate import RESERVED, AnnotatedDocument, CorefChainSpec, Mention, Vocabulary, annotate_document
from .config import MODES, Config
from .model import init_parameters
from .network import sequence_loss
from .train import trainable_names

TINY_CONFIG = dict(hidden=8, emb=8, vocab_size=20, article_len=6, max_dec=4, init_scale=0.5, lam=0.5)
DEFAULT_EPS = 1e-4
THRESHOLD = 1e-4


def tiny_vocab(size: int) -> Vocabulary:
    if size <= len(RESERVED):
        raise ValueError("vocabulary must hold more than the reserved tokens")
    return Vocabulary(list(RESERVED) + [f"w{i}" for i in range(size - len(RESERVED))])


def tiny_document(cfg: Config) -> tuple[AnnotatedDocument, Vocabulary]:
    """A two-sentence article with repeated and out-of-vocabulary words and two
    coreference chains, plus a summary mixing copied, OOV and generated words."""
    vocab = tiny_vocab(cfg.vocab_size)
    n = max(cfg.article_len, 4)
    words = len(vocab) - len(RESERVED)
    tokens = [f"oov{i}" if i % 3 == 2 else f"w{(3 * i + 1) % words}" for i in range(n)]
    tokens[-2] = tokens[0]  # repeated word: its copy mass sums over both positions
    half = n // 2
    chains = CorefChainSpec([[Mention(0, 0, (0, half - 1))], [Mention(half, half, (half, n - 1))]])
    summary = [tokens[2], tokens[half], f"w{words - 1}"][: max(cfg.max_dec - 1, 1)]
    doc = annotate_document("tiny", tokens, vocab, chains=chains, sentence_starts=[0, half], summary=summary)
    return doc, vocab


@dataclass
class GradcheckResult:
    mode: str
    max_rel_error: float
    n_params: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error < THRESHOLD


def run_gradcheck(cfg: Config, eps: float = DEFAULT_EPS, seed: int = 3) -> GradcheckResult:
    """Compare analytic and central-difference gradients of the full objective
    (NLL, insignificance and affinity terms as the mode dictates)."""
    doc, vocab = tiny_document(cfg)
    params = init_parameters(cfg, len(vocab), seed)
    names = trainable_names(params, cfg)

    def loss():
        return sequence_loss(doc, params, cfg, start_id=vocab.start, stop_id=vocab.stop).total

    tensors = params.tensors(names)
    err = ad.gradient_check(loss, tensors, eps=eps)
    return GradcheckResult(cfg.mode, err, sum(t.size for t in tensors))


def run_all_modes(cfg: Config, eps: float = DEFAULT_EPS) -> list[GradcheckResult]:
    return [run_gradcheck(cfg.replace(mode=m), eps) for m in MODES]
