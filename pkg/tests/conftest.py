import numpy as np
import pytest

from pgguide import autodiff as ad
from pgguide.annotate import RESERVED, CorefChainSpec, Mention, Vocabulary, annotate_document
from pgguide.config import Config
from pgguide.model import init_parameters


def numeric_grad(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. every entry of ``x`` (mutated in place)."""
    out = np.zeros_like(x)
    flat, gflat = x.reshape(-1), out.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + eps
        up = f()
        flat[k] = orig - eps
        down = f()
        flat[k] = orig
        gflat[k] = (up - down) / (2 * eps)
    return out


def rel_err(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)))


@pytest.fixture
def small_vocab():
    return Vocabulary(list(RESERVED) + [f"w{i}" for i in range(16)])


@pytest.fixture
def small_doc(small_vocab):
    tokens = ["w1", "w2", "zed", "w3", "w1", "qux", "w5", "."]
    chains = CorefChainSpec([[Mention(0, 0, (0, 2))], [Mention(3, 3, (3, 5))]])
    return annotate_document("small", tokens, small_vocab, chains=chains, sentence_starts=[0, 3],
                             summary=["zed", "w3", "w9"])


def small_params(mode="both", seed=0, **kw):
    cfg = Config(hidden=6, emb=5, mode=mode, max_dec=4, init_scale=0.5, **kw)
    return cfg, init_parameters(cfg, 20, seed)


def random_doc(rng, vocab, n=None, with_chains=True, summary_len=3):
    """A random annotated document over ``vocab`` plus a few OOV words."""
    n = n or int(rng.integers(2, 9))
    pool = vocab.itos[4:] + ["oovA", "oovB"]
    tokens = [pool[i] for i in rng.integers(len(pool), size=n)]
    chains = None
    if with_chains and n >= 2:
        k = int(rng.integers(n))
        j = int(rng.integers(n))
        chains = CorefChainSpec([[Mention(k, k, (min(k, j), max(k, j)))], [Mention(j, j, None)]])
    starts = [0] + sorted({int(s) for s in rng.integers(1, n, size=1)}) if n > 2 else [0]
    summary = [pool[i] for i in rng.integers(len(pool), size=summary_len)]
    return annotate_document(f"r{n}", tokens, vocab, chains=chains, sentence_starts=starts, summary=summary)


@pytest.fixture
def fresh_graph():
    with ad.new_graph() as g:
        yield g


# acceptance verdict lines, echoed again in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
