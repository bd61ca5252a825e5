"""One decoder step and the teacher-forced sequence objective, per mode."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .affinity import (affinity_loss, affinity_matrix, biased_attention_scores,
                       expected_transition_affinity, unweighted_transition_affinity)
from .annotate import AnnotatedDocument
from .config import Config
from .guided import DoNotCopyDistribution, do_not_copy, guided_generation_probability, insignificance_loss
from .model import (EncoderStates, ModelParameters, attention_scores, context_vector, copy_matrix, encode,
                    final_distribution, generation_probability, nll, vocab_distribution)


@dataclass
class DocContext:
    """Per-document values that stay fixed across decoding steps."""

    doc: AnnotatedDocument
    enc: EncoderStates
    copy: np.ndarray
    T: np.ndarray | None
    dncm: DoNotCopyDistribution | None
    mode: str


@dataclass
class DecoderState:
    h: ad.Tensor
    c: ad.Tensor
    ctx: ad.Tensor              # previous context vector (input feeding)
    a_prev: ad.Tensor | None    # previous attention, None before the first step


@dataclass
class DecoderStep:
    s: ad.Tensor
    y: ad.Tensor
    a: ad.Tensor
    ctx: ad.Tensor
    p_gen: ad.Tensor
    p_vocab: ad.Tensor
    p_final: ad.Tensor


def prepare(doc: AnnotatedDocument, params: ModelParameters, cfg: Config, mode: str | None = None) -> DocContext:
    mode = mode or cfg.mode
    doc = doc.truncated(cfg.max_enc)
    enc = encode(doc, params, cfg)
    dncm = do_not_copy(doc.cues, enc.H, params) if mode in ("guided", "both") else None
    T = affinity_matrix(doc.coref_tags) if mode in ("affinity", "both") else None
    return DocContext(doc, enc, copy_matrix(doc), T, dncm, mode)


def initial_state(dctx: DocContext) -> DecoderState:
    hidden = dctx.enc.final_h.shape[1]
    return DecoderState(dctx.enc.final_h, dctx.enc.final_c, ad.constant(np.zeros((1, hidden))), None)


def decode_step(prev_token: int, state: DecoderState, dctx: DocContext, params: ModelParameters,
                cfg: Config) -> tuple[DecoderStep, DecoderState]:
    """Advance the decoder by one token.

    ``prev_token`` lives in the extended vocabulary; OOV ids are fed back as
    ``<unk>``.  Guided modes swap in the cue-aware generation switch; affinity
    modes bias attention with the previous step's attention.
    """
    vocab_size = params["embedding"].shape[0]
    tok = prev_token if prev_token < vocab_size else dctx.doc.unk_id
    y = ad.embed(params["embedding"], [tok])
    x = ad.concat([y, state.ctx], axis=1) if cfg.input_feed else y
    gates = ad.add(ad.add(ad.matmul(x, params["dec_Wx"]), ad.matmul(state.h, params["dec_Wh"])), params["dec_b"])
    hc = ad.lstm_cell(gates, state.c)
    s, c = ad.row(hc, 0), ad.row(hc, 1)
    if dctx.T is not None:
        a = biased_attention_scores(dctx.enc, s, state.a_prev, dctx.T, params)
    else:
        a = attention_scores(dctx.enc, s, params)
    ctx = context_vector(a, dctx.enc.H)
    if dctx.dncm is not None:
        p_gen = guided_generation_probability(ctx, dctx.dncm.context, s, y, params)
    else:
        p_gen = generation_probability(ctx, s, y, params)
    p_vocab = vocab_distribution(s, ctx, params)
    p_final = final_distribution(p_gen, p_vocab, a, dctx.copy)
    return DecoderStep(s, y, a, ctx, p_gen, p_vocab, p_final), DecoderState(s, c, ctx, a)


def teacher_targets(doc: AnnotatedDocument, stop_id: int, max_dec: int) -> list[int]:
    return (list(doc.summary_ext) + [stop_id])[:max_dec]


@dataclass
class LossBreakdown:
    total: ad.Tensor
    nll: float
    insignificance: float
    affinity: float
    steps: list[DecoderStep] = field(repr=False, default_factory=list)
    dctx: DocContext | None = field(repr=False, default=None)


def sequence_loss(doc: AnnotatedDocument, params: ModelParameters, cfg: Config, *, start_id: int, stop_id: int,
                  affinity_active: bool = True) -> LossBreakdown:
    """Teacher-forced objective for one document.

    ``mean_t(nll_t) + mu * mean_t(L_t) - lam * mean_{t>=1}(affinity_t)``; the
    insignificance term only in guided modes and the affinity term only in
    affinity modes while ``affinity_active``.
    """
    dctx = prepare(doc, params, cfg)
    targets = teacher_targets(dctx.doc, stop_id, cfg.max_dec)
    state = initial_state(dctx)
    prev = start_id
    steps, nlls, insig, affin = [], [], [], []
    use_aff = affinity_active and dctx.T is not None and dctx.T.any() and cfg.lam > 0
    for target in targets:
        step, new_state = decode_step(prev, state, dctx, params, cfg)
        nlls.append(nll(step.p_final, target))
        if dctx.dncm is not None:
            insig.append(insignificance_loss(step.a, dctx.dncm.I))
        if use_aff and state.a_prev is not None:
            if cfg.affinity_agg == "expected":
                affin.append(expected_transition_affinity(state.a_prev, step.a, dctx.T))
            else:
                affin.append(unweighted_transition_affinity(state.a_prev, dctx.T))
        steps.append(step)
        state, prev = new_state, target
    nll_mean = ad.mean(nlls)
    total = nll_mean
    insig_val = aff_val = 0.0
    if insig:
        insig_mean = ad.mean(insig)
        insig_val = insig_mean.item()
        total = ad.add(total, ad.scale(insig_mean, cfg.mu))
    if affin:
        aff_mean = ad.mean(affin)
        aff_val = aff_mean.item()
        total = ad.add(total, affinity_loss([aff_mean], cfg.lam))
    return LossBreakdown(total, nll_mean.item(), insig_val, aff_val, steps, dctx)
