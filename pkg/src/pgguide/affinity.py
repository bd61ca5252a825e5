"""Coreference transition affinity and the attention bias built on it."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autodiff as ad
from .model import EncoderStates, ModelParameters, attention_scores


def transition_affinity(i: int, j: int, tags: Sequence[frozenset]) -> int:
    """Number of coreference tags shared by positions ``i`` and ``j``."""
    n = len(tags)
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"positions ({i}, {j}) outside [0, {n})")
    return len(tags[i] & tags[j])


def affinity_matrix(tags: Sequence[frozenset]) -> np.ndarray:
    """Dense symmetric n x n matrix of shared-tag counts."""
    n = len(tags)
    chains = sorted({k for t in tags for k in t})
    if not chains:
        return np.zeros((n, n))
    member = np.zeros((n, len(chains)))
    col = {k: c for c, k in enumerate(chains)}
    for i, t in enumerate(tags):
        for k in t:
            member[i, col[k]] = 1.0
    return member @ member.T


def affinity_bias(a_prev, T: np.ndarray, params: ModelParameters) -> ad.Tensor:
    """``W_a * sum_j a_prev_j t(j, i)`` for every position i, 1 x n."""
    return ad.scale(ad.matmul(a_prev, ad.constant(T)), params["aff_Wa"])


def biased_attention_scores(enc: EncoderStates, s, a_prev, T: np.ndarray,
                            params: ModelParameters) -> ad.Tensor:
    """Attention with the transition-affinity bias added to every score.

    ``a_prev`` is ``None`` on the first decoding step, where no bias applies.
    """
    if a_prev is None or not T.any():
        return attention_scores(enc, s, params)
    return attention_scores(enc, s, params, bias=affinity_bias(a_prev, T, params))


def expected_transition_affinity(a_prev, a, T: np.ndarray) -> ad.Tensor:
    """``sum_i a_i sum_j a_prev_j t(j, i)`` for one step, as 1 x 1."""
    a_prev = a_prev if isinstance(a_prev, ad.Tensor) else ad.constant(np.atleast_2d(a_prev))
    a = a if isinstance(a, ad.Tensor) else ad.constant(np.atleast_2d(a))
    return ad.total(ad.mul(a, ad.matmul(a_prev, ad.constant(T))))


def unweighted_transition_affinity(a_prev, T: np.ndarray) -> ad.Tensor:
    """``(1/n) sum_i sum_j a_prev_j t(j, i)``; ignores where the current step attends."""
    a_prev = a_prev if isinstance(a_prev, ad.Tensor) else ad.constant(np.atleast_2d(a_prev))
    return ad.scale(ad.total(ad.matmul(a_prev, ad.constant(T))), 1.0 / T.shape[0])


def affinity_loss(expectations, lam: float) -> ad.Tensor:
    """``-lam * mean(expectations)``."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if not expectations:
        raise ValueError("affinity loss needs at least one step")
    terms = [e if isinstance(e, ad.Tensor) else ad.constant([[float(e)]]) for e in expectations]
    return ad.scale(ad.mean(terms), -lam)
