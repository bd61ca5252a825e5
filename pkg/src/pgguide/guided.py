"""The do-not-copy-me mechanism.

A cue-driven distribution ``I`` over article positions is computed once per
document.  Its encoder-state average feeds the generation switch, and the
insignificance loss ``sum_i min(a_i, I_i)`` penalises attention that overlaps
with it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .model import ModelParameters, final_distribution, generation_logit


@dataclass
class DoNotCopyDistribution:
    g: ad.Tensor       # 1 x n raw scores
    I: ad.Tensor       # 1 x n, softmax(g)
    context: ad.Tensor  # 1 x hidden, sum_i I_i h_i


def dncm_distribution(cues, params: ModelParameters):
    """Scores ``u . tanh(W_dncm r_i + b_dncm)`` and their softmax over the article.

    Returns ``(g, I)`` as 1 x n tensors.
    """
    R = cues if isinstance(cues, ad.Tensor) else ad.constant(np.asarray(cues, dtype=np.float64))
    W = params["dncm_W"]
    if R.shape[1] != W.shape[0]:
        raise ad.ShapeError(f"cue width {R.shape[1]} does not match W_dncm rows {W.shape[0]}")
    n = R.shape[0]
    hidden = ad.tanh(ad.add(ad.matmul(R, W), ad.matmul(ad.constant(np.ones((n, 1))), params["dncm_b"])))
    g = ad.reshape(ad.matmul(hidden, params["dncm_u"]), (1, n))
    return g, ad.softmax(g)


def dncm_context(I: ad.Tensor, H: ad.Tensor) -> ad.Tensor:
    return ad.matmul(I, H)


def do_not_copy(cues, H: ad.Tensor, params: ModelParameters) -> DoNotCopyDistribution:
    g, I = dncm_distribution(cues, params)
    return DoNotCopyDistribution(g, I, dncm_context(I, H))


def guided_generation_probability(ctx, dncm_ctx, s, y, params: ModelParameters) -> ad.Tensor:
    """Generation switch with the extra ``w_dncm . h*_dncm`` term."""
    z = ad.add(generation_logit(ctx, s, y, params), ad.matmul(dncm_ctx, params["gen_wdncm"]))
    return ad.sigmoid(z)


# the mixture itself is unchanged; only the switch value differs
guided_final_distribution = final_distribution


def insignificance_loss(a, I) -> ad.Tensor:
    """``sum_i min(a_i, I_i)``; lies in [0, 1] for two distributions."""
    a = a if isinstance(a, ad.Tensor) else ad.constant(np.atleast_2d(a))
    I = I if isinstance(I, ad.Tensor) else ad.constant(np.atleast_2d(I))
    if a.shape != I.shape:
        raise ad.ShapeError(f"insignificance loss: {a.shape} vs {I.shape}")
    return ad.total(ad.minimum(a, I))


def total_loss(nll_terms, l_terms, mu: float) -> ad.Tensor:
    """Mean over timesteps of ``nll_t + mu * L_t``."""
    if mu < 0:
        raise ValueError("mu must be non-negative")
    steps = [ad.add(n, ad.scale(l, mu)) if l is not None else n for n, l in zip(nll_terms, l_terms)]
    return ad.mean(steps)
