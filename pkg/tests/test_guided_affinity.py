import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pgguide import autodiff as ad
from pgguide.affinity import (affinity_loss, affinity_matrix, biased_attention_scores, expected_transition_affinity,
                              transition_affinity, unweighted_transition_affinity)
from pgguide.guided import (dncm_context, dncm_distribution, guided_generation_probability, insignificance_loss,
                            total_loss)
from pgguide.model import EncoderStates, attention_scores, final_distribution, generation_probability
from conftest import small_params
from test_model import dot_col, sig, softmax_list, tl


def _enc(H, params):
    H = ad.constant(H)
    return EncoderStates(H, ad.matmul(H, params["att_Wh"]), None, None)


class TestDoNotCopyDistribution:
    def test_shared_cue_uniform(self):
        cfg, params = small_params("guided")
        cues = np.tile(np.eye(16)[3], (5, 1))
        _, I = dncm_distribution(cues, params)
        np.testing.assert_allclose(I.value, np.full((1, 5), 0.2), atol=1e-15)

    def test_zero_u_uniform(self):
        cfg, params = small_params("guided")
        params["dncm_u"].value[:] = 0
        cues = np.eye(16)[[0, 4, 9, 2]]
        _, I = dncm_distribution(cues, params)
        np.testing.assert_allclose(I.value, np.full((1, 4), 0.25), atol=1e-15)

    def test_scalar_oracle(self):
        cfg, params = small_params("guided", seed=3)
        rng = np.random.default_rng(0)
        cues = np.zeros((5, 16))
        cues[np.arange(5), rng.integers(4, size=5)] = 1
        cues[np.arange(5), 4 + rng.integers(12, size=5)] = 1
        g, I = dncm_distribution(cues, params)
        W, b, u = tl(params["dncm_W"]), tl(params["dncm_b"]), tl(params["dncm_u"])
        want_g = [sum(u[k][0] * math.tanh(dot_col(list(r), W, k) + b[0][k]) for k in range(len(u))) for r in cues]
        np.testing.assert_allclose(g.value[0], want_g, atol=1e-14)
        np.testing.assert_allclose(I.value[0], softmax_list(want_g), atol=1e-14)

    def test_width_mismatch(self):
        cfg, params = small_params("guided")
        with pytest.raises(ad.ShapeError):
            dncm_distribution(np.zeros((3, 4)), params)

    def test_context(self):
        rng = np.random.default_rng(1)
        H = rng.normal(size=(3, 4))
        assert dncm_context(ad.constant([[0, 1.0, 0]]), ad.constant(H)).value[0].tolist() == H[1].tolist()
        I = rng.dirichlet(np.ones(3))
        want = [sum(I[i] * H[i, k] for i in range(3)) for k in range(4)]
        np.testing.assert_allclose(dncm_context(ad.constant([I]), ad.constant(H)).value[0], want, atol=1e-14)


class TestGuidedSwitch:
    def test_reduces_when_w_dncm_zero(self):
        cfg, params = small_params("guided", seed=2)
        params["gen_wdncm"].value[:] = 0
        rng = np.random.default_rng(0)
        ctx, d, s, y = (ad.constant(rng.normal(size=(1, k))) for k in (6, 6, 6, 5))
        assert guided_generation_probability(ctx, d, s, y, params).item() == generation_probability(ctx, s, y, params).item()

    def test_all_zero_half(self):
        cfg, params = small_params("guided")
        for k in ("gen_wh", "gen_ws", "gen_wy", "gen_b", "gen_wdncm"):
            params[k].value[:] = 0
        z = ad.constant(np.ones((1, 6)))
        assert guided_generation_probability(z, z, z, ad.constant(np.ones((1, 5))), params).item() == 0.5

    def test_scalar_oracle(self):
        cfg, params = small_params("guided", seed=9)
        rng = np.random.default_rng(2)
        h, d, s, y = (rng.normal(size=k) for k in (6, 6, 6, 5))
        got = guided_generation_probability(*(ad.constant([v]) for v in (h, d, s, y)), params).item()
        col = lambda name, vec: sum(vec[k] * params[name].value[k, 0] for k in range(len(vec)))
        z = col("gen_wh", h) + col("gen_ws", s) + col("gen_wy", y) + col("gen_wdncm", d) + params["gen_b"].value[0, 0]
        assert got == pytest.approx(sig(z), abs=1e-15)

    def test_mixture_worked_example(self):
        copy = np.zeros((3, 2))
        copy[[0, 1, 2], [0, 0, 1]] = 1
        assert final_distribution(0.5, [[0.1, 0.9]], [[0.3, 0.3, 0.4]], copy).value[0, 0] == pytest.approx(0.35)


class TestInsignificanceLoss:
    def test_examples(self):
        assert insignificance_loss([[0.2, 0.8]], [[0.2, 0.8]]).item() == pytest.approx(1.0)
        assert insignificance_loss([[1.0, 0.0]], [[0.0, 1.0]]).item() == 0.0
        assert insignificance_loss([[0.5, 0.5]], [[0.9, 0.1]]).item() == pytest.approx(0.6)

    def test_exhaustive_grid(self):
        # every pair of distributions on a 0.25-grid over n <= 4 positions
        for n in range(1, 5):
            grid = [np.array(c) / 4 for c in itertools.product(range(5), repeat=n) if sum(c) == 4]
            for a, I in itertools.product(grid, grid):
                L = insignificance_loss([a], [I]).item()
                assert -1e-15 <= L <= 1 + 1e-15
                assert (abs(L - 1) < 1e-12) == np.array_equal(a, I)
                assert (L == 0) == (not np.any((a > 0) & (I > 0)))

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 12), st.integers(0, 2**32 - 1))
    def test_bounds_random(self, n, seed):
        rng = np.random.default_rng(seed)
        a, I = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
        L = insignificance_loss([a], [I]).item()
        assert 0 <= L <= 1 + 1e-12

    def test_total_loss(self):
        one = ad.constant([[1.0]])
        nll = [one, one]
        Ls = [ad.constant([[0.5]]), ad.constant([[0.7]])]
        assert total_loss(nll, Ls, 1.0).item() == pytest.approx(1.6)
        assert total_loss(nll, Ls, 0.0).item() == 1.0
        zeros = [ad.constant([[0.0]])] * 2
        assert total_loss(nll, zeros, 3.0).item() == 1.0


class TestTransitionAffinity:
    def test_examples(self):
        tags = [frozenset({1, 2}), frozenset({2, 3}), frozenset(), frozenset({4, 7, 9})]
        assert transition_affinity(0, 1, tags) == 1
        assert all(transition_affinity(2, j, tags) == 0 for j in range(4))
        assert transition_affinity(3, 3, tags) == 3
        with pytest.raises(IndexError):
            transition_affinity(0, 4, tags)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.frozensets(st.integers(0, 4), max_size=3), min_size=1, max_size=8))
    def test_matrix_matches_pairwise(self, tags):
        T = affinity_matrix(tags)
        n = len(tags)
        for i in range(n):
            for j in range(n):
                assert T[i, j] == transition_affinity(i, j, tags) == T[j, i]

    def test_two_shared_tags_bias_example(self):
        cfg, params = small_params("affinity")
        params["att_v"].value[:] = 0  # equal base scores
        params["aff_Wa"].value[:] = 2.0
        T = affinity_matrix([frozenset({1}), frozenset({1}), frozenset()])
        rng = np.random.default_rng(0)
        a = biased_attention_scores(_enc(rng.normal(size=(3, 6)), params), ad.constant(rng.normal(size=(1, 6))),
                                    ad.constant([[1.0, 0.0, 0.0]]), T, params).value[0]
        want = softmax_list([2.0, 2.0, 0.0])
        np.testing.assert_allclose(a, want, atol=1e-15)
        np.testing.assert_allclose(a, [0.4683, 0.4683, 0.0634], atol=1e-4)

    def test_reductions(self):
        cfg, params = small_params("affinity", seed=1)
        rng = np.random.default_rng(1)
        enc, s = _enc(rng.normal(size=(4, 6)), params), ad.constant(rng.normal(size=(1, 6)))
        prev = ad.constant(rng.dirichlet(np.ones(4))[None])
        base = attention_scores(enc, s, params).value
        T = affinity_matrix([frozenset({0}), frozenset({0, 1}), frozenset(), frozenset({1})])
        assert np.array_equal(biased_attention_scores(enc, s, prev, np.zeros((4, 4)), params).value, base)
        assert np.array_equal(biased_attention_scores(enc, s, None, T, params).value, base)
        params["aff_Wa"].value[:] = 0
        np.testing.assert_allclose(biased_attention_scores(enc, s, prev, T, params).value, base, atol=1e-15)

    def test_bias_scalar_oracle(self):
        cfg, params = small_params("affinity", seed=3)
        params["aff_Wa"].value[:] = 0.7
        rng = np.random.default_rng(3)
        H, s = rng.normal(size=(4, 6)), rng.normal(size=(1, 6))
        tags = [frozenset({0}), frozenset({0, 1}), frozenset(), frozenset({1})]
        prev = rng.dirichlet(np.ones(4))
        got = biased_attention_scores(_enc(H, params), ad.constant(s), ad.constant([prev]), affinity_matrix(tags), params)
        Wh, Ws, b, v = (tl(params[k]) for k in ("att_Wh", "att_Ws", "att_b", "att_v"))
        e = []
        for i in range(4):
            base = sum(v[k][0] * math.tanh(dot_col(H[i], Wh, k) + dot_col(s[0], Ws, k) + b[0][k]) for k in range(len(v)))
            e.append(base + 0.7 * sum(prev[j] * len(tags[j] & tags[i]) for j in range(4)))
        np.testing.assert_allclose(got.value[0], softmax_list(e), atol=1e-14)


class TestAffinityObjective:
    def test_expected_examples(self):
        assert expected_transition_affinity([[0.5, 0.5]], [[0.5, 0.5]], np.zeros((2, 2))).item() == 0
        T = affinity_matrix([frozenset({1, 2}), frozenset()])
        assert expected_transition_affinity([[1.0, 0.0]], [[1.0, 0.0]], T).item() == 2
        assert expected_transition_affinity([[0.5, 0.5]], [[0.5, 0.5]], np.eye(2)).item() == pytest.approx(0.5)

    def test_unweighted(self):
        T = np.eye(2)
        assert unweighted_transition_affinity([[0.5, 0.5]], T).item() == pytest.approx(0.5)

    def test_loss(self):
        assert affinity_loss([0.5, 1.5], 1.0).item() == pytest.approx(-1.0)
        assert affinity_loss([0.5, 1.5], 0.0).item() == 0.0
        assert affinity_loss([0.0, 0.0], 0.7).item() == 0.0
        with pytest.raises(ValueError):
            affinity_loss([1.0], -0.1)
