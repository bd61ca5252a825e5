import itertools
import math

import numpy as np
import pytest

from pgguide.annotate import Vocabulary, RESERVED
from pgguide.decode import (DecodeError, DecodingTrace, StepRecord, beam_search, decode, decode_greedy, format_trace,
                            read_traces, resolve_tokens, write_traces)
from conftest import random_doc, small_params

STOP = 1


class TableStepper:
    """p_final depends only on the emitted prefix, looked up in a seeded table."""

    def __init__(self, vocab_size=4, seed=0, uniform=False):
        self.v = vocab_size
        self.rng = np.random.default_rng(seed)
        self.uniform = uniform
        self.table = {}

    def dist(self, prefix):
        if prefix not in self.table:
            if self.uniform:
                self.table[prefix] = np.full(self.v, 1.0 / self.v)
            else:
                self.table[prefix] = self.rng.dirichlet(np.full(self.v, 0.7))
        return self.table[prefix]


def prefix_stepper(vocab_size=4, seed=0, uniform=False):
    table = TableStepper(vocab_size, seed, uniform)

    class S:
        def initial(self):
            return ("init",)

        def step(self, state, prev):
            prefix = () if state == ("init",) else state + (prev,)
            return table.dist(prefix), 0.5, np.array([1.0]), prefix

    return S(), table


def brute_force_best(table, max_len):
    """Enumerate every sequence that stops or hits the limit; rank by mean log-prob, ties to lowest sequence."""
    best = None
    for length in range(1, max_len + 1):
        for seq in itertools.product(range(table.v), repeat=length):
            if STOP in seq[:-1]:
                continue
            if length < max_len and seq[-1] != STOP:
                continue
            lp, prefix = 0.0, ()
            for tok in seq:
                lp += math.log(table.dist(prefix)[tok])
                prefix += (tok,)
            key = (-lp / length, list(seq))
            if best is None or key < best[0]:
                best = (key, list(seq), lp)
    return best


class TestGreedy:
    def test_stop_first_step(self):
        class OneHotStop:
            def initial(self):
                return None

            def step(self, state, prev):
                return np.eye(5)[STOP], 0.3, np.array([0.5, 0.5]), state

        steps = decode_greedy(OneHotStop(), 2, STOP, 10)
        assert len(steps) == 1 and steps[0][0] == STOP
        trace = DecodingTrace("d", 2, [0], [StepRecord(*s[:3]) for s in steps], stop_id=STOP)
        assert trace.tokens == []

    def test_limit(self):
        class NeverStop:
            def initial(self):
                return None

            def step(self, state, prev):
                return np.eye(5)[3], 0.3, np.array([1.0]), state

        assert [s[0] for s in decode_greedy(NeverStop(), 2, STOP, 3)] == [3, 3, 3]

    def test_tie_lowest_index(self):
        class Tie:
            def initial(self):
                return None

            def step(self, state, prev):
                return np.array([0.1, 0.1, 0.4, 0.4]), 0.3, np.array([1.0]), state

        assert decode_greedy(Tie(), 0, STOP, 2)[0][0] == 2

    def test_bad_limit(self):
        with pytest.raises(ValueError):
            decode_greedy(None, 0, STOP, 0)


class TestBeam:
    @pytest.mark.parametrize("seed", range(12))
    def test_matches_enumeration(self, seed):
        stepper, table = prefix_stepper(4, seed)
        hyp = beam_search(stepper, 0, STOP, 4 ** 3, 3)
        _, want, lp = brute_force_best(table, 3)
        assert hyp.tokens == want
        assert hyp.log_prob == pytest.approx(lp, abs=1e-12)

    @pytest.mark.parametrize("seed", range(40))
    def test_width_four_matches_enumeration_on_three_steps(self, seed):
        stepper, table = prefix_stepper(3, seed)
        hyp = beam_search(stepper, 0, STOP, 4, 3)
        _, want, lp = brute_force_best(table, 3)
        assert hyp.tokens == want
        assert hyp.log_prob == pytest.approx(lp, abs=1e-12)

    def test_uniform_tie_rule(self):
        stepper, _ = prefix_stepper(4, 0, uniform=True)
        assert beam_search(stepper, 0, STOP, 3, 3).tokens == [0, 0, 0]

    @pytest.mark.parametrize("seed", range(10))
    def test_width_one_is_greedy(self, seed):
        stepper, table = prefix_stepper(5, seed)
        greedy = [s[0] for s in decode_greedy(stepper, 0, STOP, 6)]
        assert beam_search(stepper, 0, STOP, 1, 6).tokens == greedy

    def test_score_is_sum_of_logs(self):
        stepper, table = prefix_stepper(4, 5)
        hyp = beam_search(stepper, 0, STOP, 3, 5)
        assert hyp.log_prob == pytest.approx(sum(math.log(s[3]) for s in hyp.steps), abs=1e-9)

    def test_bad_width(self):
        with pytest.raises(ValueError):
            beam_search(None, 0, STOP, 0, 3)


class TestModelDecoding:
    @pytest.mark.parametrize("seed", range(20))
    def test_beam_one_equals_greedy_on_random_models(self, seed, small_vocab):
        mode = ("baseline", "guided", "affinity", "both")[seed % 4]
        cfg, params = small_params(mode, seed=seed, decode_steps=6)
        doc = random_doc(np.random.default_rng(seed), small_vocab)
        g = decode(doc, params, cfg, small_vocab, beam=1)
        b = decode(doc, params, cfg, small_vocab, beam=1)
        assert g.tokens == b.tokens
        from pgguide.decode import ModelStepper
        hyp = beam_search(ModelStepper(doc, params, cfg), small_vocab.start, small_vocab.stop, 1, 6)
        assert [s[0] for s in hyp.steps] == [r.token for r in g.records]

    def test_trace_invariants(self, small_vocab, small_doc):
        cfg, params = small_params("both", seed=4, decode_steps=5)
        for beam in (1, 3):
            tr = decode(small_doc, params, cfg, small_vocab, beam=beam)
            assert 1 <= len(tr.records) <= 5
            for r in tr.records:
                assert abs(r.attention.sum() - 1) < 1e-9 and r.attention.shape == (small_doc.n,)
                assert 0 <= r.p_gen <= 1

    def test_deterministic(self, small_vocab, small_doc):
        cfg, params = small_params("both", seed=4, decode_steps=5)
        a = decode(small_doc, params, cfg, small_vocab, beam=2)
        b = decode(small_doc, params, cfg, small_vocab, beam=2)
        assert format_trace(a) == format_trace(b)


class TestResolve:
    def test_in_vocab(self, small_vocab, small_doc):
        tr = DecodingTrace("d", small_doc.n, [0], [StepRecord(small_vocab.stoi["w3"], 0.5, np.ones(small_doc.n))])
        assert resolve_tokens(tr, small_doc, small_vocab) == "w3"

    def test_oov_mapping(self):
        vocab = Vocabulary(list(RESERVED) + ["police", "said"])
        from pgguide.annotate import annotate_document
        doc = annotate_document("d", ["police", "said", "tsarnaev", "fled"], vocab)
        assert doc.oovs[0] == "tsarnaev"
        tr = DecodingTrace("d", 4, [0], [StepRecord(len(vocab), 0.1, np.full(4, .25)),
                                         StepRecord(vocab.stoi["said"], 0.9, np.full(4, .25))])
        assert resolve_tokens(tr, doc, vocab) == "tsarnaev said"

    def test_dangling(self, small_vocab, small_doc):
        tr = DecodingTrace("d", small_doc.n, [0], [StepRecord(len(small_vocab) + 9, 0.5, np.ones(small_doc.n))])
        with pytest.raises(DecodeError):
            resolve_tokens(tr, small_doc, small_vocab)


class TestTraceFiles:
    def test_round_trip(self, tmp_path, small_vocab, small_doc):
        cfg, params = small_params("both", seed=1, decode_steps=5)
        tr = decode(small_doc, params, cfg, small_vocab)
        write_traces([tr, tr], tmp_path / "t.txt")
        back = list(read_traces(tmp_path / "t.txt"))
        assert len(back) == 2
        assert format_trace(back[0]) == format_trace(tr)
        assert back[0].tokens == tr.tokens
        assert resolve_tokens(back[0], small_doc, small_vocab) == resolve_tokens(tr, small_doc, small_vocab)

    def test_format(self):
        tr = DecodingTrace("x", 2, [0, 1], [StepRecord(7, 0.25, np.array([0.75, 0.25]), "cat")], stop_id=1)
        assert format_trace(tr) == "#trace x\tn=2\tsents=0,1\tstop=1\n0\t7\tcat\t0.250000\t0.750000 0.250000\n"

    @pytest.mark.parametrize("text", ["0\t1\ta\t0.5\t1.0\n", "#trace x\tn=2\tsents=0\n0\t1\ta\t0.5\t1.0\n",
                                      "#trace x\tsents=0\n", "#trace x\tn=1\tsents=0\n0\t1\t0.5\n"])
    def test_malformed(self, tmp_path, text):
        (tmp_path / "t").write_text(text)
        with pytest.raises(DecodeError):
            list(read_traces(tmp_path / "t"))
