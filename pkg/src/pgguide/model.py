"""Pointer-generator building blocks: parameters, LSTM encoder, attention,
generation probability and the mixed copy/generate distribution."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .annotate import AnnotatedDocument, cue_dim
from .config import Config

GUIDED_PARAMS = ("dncm_W", "dncm_b", "dncm_u", "gen_wdncm")
AFFINITY_PARAMS = ("aff_Wa",)


class ModelParameters:
    """Named trainable tensors with an access log.

    Every ``params[name]`` lookup is recorded in :attr:`accessed`, which lets
    tests confirm that a baseline pass never touches guided or affinity
    weights.
    """

    def __init__(self, tensors: dict[str, ad.Tensor]):
        self._t = dict(tensors)
        self.accessed: set[str] = set()

    def __getitem__(self, name) -> ad.Tensor:
        self.accessed.add(name)
        return self._t[name]

    def __contains__(self, name):
        return name in self._t

    def __iter__(self):
        return iter(self._t)

    def __len__(self):
        return len(self._t)

    def names(self):
        return list(self._t)

    def tensors(self, names=None) -> list[ad.Tensor]:
        return [self._t[n] for n in (names if names is not None else self._t)]

    def items(self):
        return self._t.items()

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.value.copy() for k, t in self._t.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray], strict=True):
        for k, v in arrays.items():
            if k not in self._t:
                if strict:
                    raise KeyError(f"unexpected parameter {k!r}")
                continue
            if self._t[k].shape != v.shape:
                raise ValueError(f"{k}: checkpoint shape {v.shape} vs model {self._t[k].shape}")
            self._t[k].value = np.array(v, dtype=np.float64)

    def clone(self) -> "ModelParameters":
        return ModelParameters({k: ad.parameter(t.value.copy(), name=k) for k, t in self._t.items()})

    def reset_log(self):
        self.accessed.clear()


def parameter_shapes(cfg: Config, vocab_size: int) -> dict[str, tuple[int, ...]]:
    H, E, A = cfg.hidden, cfg.emb, cfg.attn_dim
    c = cue_dim(cfg.cues)
    enc_in = E + (c if cfg.cue_concat else 0)
    dec_in = E + (H if cfg.input_feed else 0)
    shapes = {
        "embedding": (vocab_size, E),
        "enc_Wx": (enc_in, 4 * H), "enc_Wh": (H, 4 * H), "enc_b": (1, 4 * H),
    }
    if cfg.bidirectional:
        shapes.update({
            "encb_Wx": (enc_in, 4 * H), "encb_Wh": (H, 4 * H), "encb_b": (1, 4 * H),
            "red_W": (2 * H, H), "red_b": (1, H), "red_Wc": (2 * H, H), "red_bc": (1, H),
        })
    shapes.update({
        "dec_Wx": (dec_in, 4 * H), "dec_Wh": (H, 4 * H), "dec_b": (1, 4 * H),
        "att_Wh": (H, A), "att_Ws": (H, A), "att_b": (1, A), "att_v": (A, 1),
        "gen_wh": (H, 1), "gen_ws": (H, 1), "gen_wy": (E, 1), "gen_b": (1, 1),
        "out_W": (2 * H, vocab_size), "out_b": (1, vocab_size),
    })
    if c:
        shapes.update({"dncm_W": (c, A), "dncm_b": (1, A), "dncm_u": (A, 1), "gen_wdncm": (H, 1)})
    shapes["aff_Wa"] = (1, 1)
    return shapes


def init_parameters(cfg: Config, vocab_size: int, seed: int | None = None) -> ModelParameters:
    """Uniform(-s, s) initialisation with forget-gate biases shifted by +1."""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    s = cfg.init_scale
    H = cfg.hidden
    tensors = {}
    for name, shape in parameter_shapes(cfg, vocab_size).items():
        value = rng.uniform(-s, s, size=shape)
        if name in ("enc_b", "encb_b", "dec_b"):
            value[0, H:2 * H] += 1.0
        tensors[name] = ad.parameter(value, name=name)
    return ModelParameters(tensors)


def config_from_parameters(arrays: dict[str, np.ndarray], base: Config | None = None) -> Config:
    """Recover model-shape settings from checkpoint array shapes."""
    base = base or Config()
    vocab_size, emb = arrays["embedding"].shape
    hidden = arrays["enc_Wh"].shape[0]
    attn = arrays["att_Wh"].shape[1]
    c = arrays["dncm_W"].shape[0] if "dncm_W" in arrays else 0
    cues = {0: "none", 4: "pos", 12: "ner", 16: "both"}[c]
    cue_concat = arrays["enc_Wx"].shape[0] != emb
    input_feed = arrays["dec_Wx"].shape[0] != emb
    mode = base.mode if (c or not base.guided) else "baseline"
    return base.replace(hidden=hidden, emb=emb, attn=attn, cues=cues, cue_concat=cue_concat,
                        input_feed=input_feed, bidirectional="encb_Wx" in arrays,
                        vocab_size=vocab_size, mode=mode)


# ---------------------------------------------------------------------------
# encoder


@dataclass
class EncoderStates:
    H: ad.Tensor        # n x hidden, one row per article position
    keys: ad.Tensor     # n x attn, H @ W_h (step-invariant part of the attention score)
    final_h: ad.Tensor  # 1 x hidden
    final_c: ad.Tensor  # 1 x hidden

    @property
    def n(self):
        return self.H.shape[0]


def _run_lstm(xw: ad.Tensor, Wh: ad.Tensor, b: ad.Tensor, order):
    hdim = Wh.shape[0]
    h = ad.constant(np.zeros((1, hdim)))
    c = ad.constant(np.zeros((1, hdim)))
    rows = {}
    for i in order:
        gates = ad.add(ad.add(ad.row(xw, i), ad.matmul(h, Wh)), b)
        hc = ad.lstm_cell(gates, c)
        h, c = ad.row(hc, 0), ad.row(hc, 1)
        rows[i] = h
    return rows, h, c


def encoder_inputs(doc: AnnotatedDocument, params: ModelParameters, cfg: Config) -> ad.Tensor:
    emb = params["embedding"]
    if max(doc.ids) >= emb.shape[0]:
        raise IndexError(f"{doc.doc_id}: token id beyond vocabulary of {emb.shape[0]}")
    x = ad.embed(emb, doc.ids)
    if cfg.cue_concat and doc.cues.shape[1]:
        x = ad.concat([x, ad.constant(doc.cues)], axis=1)
    return x


def encode(doc: AnnotatedDocument, params: ModelParameters, cfg: Config) -> EncoderStates:
    """Run the recurrent encoder over the article.

    Inputs are word embeddings, optionally concatenated with the cue vectors.
    With ``cfg.bidirectional`` the forward and backward states are joined and
    linearly reduced back to the hidden size.
    """
    x = encoder_inputs(doc, params, cfg)
    n = doc.n
    xw = ad.matmul(x, params["enc_Wx"])
    fw, h, c = _run_lstm(xw, params["enc_Wh"], params["enc_b"], range(n))
    H = ad.concat([fw[i] for i in range(n)], axis=0)
    if cfg.bidirectional:
        xwb = ad.matmul(x, params["encb_Wx"])
        bw, hb, cb = _run_lstm(xwb, params["encb_Wh"], params["encb_b"], range(n - 1, -1, -1))
        Hb = ad.concat([bw[i] for i in range(n)], axis=0)
        ones = ad.constant(np.ones((n, 1)))
        H = ad.add(ad.matmul(ad.concat([H, Hb], axis=1), params["red_W"]), ad.matmul(ones, params["red_b"]))
        h = ad.add(ad.matmul(ad.concat([h, hb], axis=1), params["red_W"]), params["red_b"])
        c = ad.add(ad.matmul(ad.concat([c, cb], axis=1), params["red_Wc"]), params["red_bc"])
    keys = ad.matmul(H, params["att_Wh"])
    return EncoderStates(H, keys, h, c)


# ---------------------------------------------------------------------------
# per-step pieces


def attention_scores(enc: EncoderStates, s: ad.Tensor, params: ModelParameters,
                     bias: ad.Tensor | None = None) -> ad.Tensor:
    """softmax over positions of ``v . tanh(W_h h_i + W_s s + b_att)`` (+ bias), 1 x n."""
    n = enc.n
    q = ad.add(ad.matmul(s, params["att_Ws"]), params["att_b"])
    feats = ad.tanh(ad.add(enc.keys, ad.matmul(ad.constant(np.ones((n, 1))), q)))
    e = ad.reshape(ad.matmul(feats, params["att_v"]), (1, n))
    if bias is not None:
        e = ad.add(e, bias)
    return ad.softmax(e)


def context_vector(a: ad.Tensor, H: ad.Tensor) -> ad.Tensor:
    return ad.matmul(a, H)


def generation_logit(ctx, s, y, params: ModelParameters) -> ad.Tensor:
    z = ad.add(ad.matmul(ctx, params["gen_wh"]), ad.matmul(s, params["gen_ws"]))
    z = ad.add(z, ad.matmul(y, params["gen_wy"]))
    return ad.add(z, params["gen_b"])


def generation_probability(ctx, s, y, params: ModelParameters) -> ad.Tensor:
    """sigma(w_h.h* + w_s.s + w_y.y + b_gen) as a 1 x 1 tensor."""
    return ad.sigmoid(generation_logit(ctx, s, y, params))


def vocab_distribution(s, ctx, params: ModelParameters) -> ad.Tensor:
    """Softmax of a linear map of [s; h*] over the fixed vocabulary, 1 x V."""
    z = ad.add(ad.matmul(ad.concat([s, ctx], axis=1), params["out_W"]), params["out_b"])
    return ad.softmax(z)


def copy_matrix(doc: AnnotatedDocument) -> np.ndarray:
    """n x extended-vocab indicator with a 1 at (i, extended id of token i)."""
    M = np.zeros((doc.n, doc.ext_size))
    M[np.arange(doc.n), doc.ext_ids] = 1.0
    return M


def final_distribution(p_gen, p_vocab, a, copy: np.ndarray) -> ad.Tensor:
    """``p_gen * P_vocab(w) + (1 - p_gen) * sum of attention on occurrences of w``.

    ``copy`` is the matrix from :func:`copy_matrix`; OOV slots receive mass
    only through the copy term.
    """
    p_gen = p_gen if isinstance(p_gen, ad.Tensor) else ad.constant(np.full((1, 1), p_gen))
    p_vocab = p_vocab if isinstance(p_vocab, ad.Tensor) else ad.constant(np.atleast_2d(p_vocab))
    a = a if isinstance(a, ad.Tensor) else ad.constant(np.atleast_2d(a))
    n_extra = copy.shape[1] - p_vocab.shape[1]
    gen = ad.scale(p_vocab, p_gen)
    if n_extra:
        gen = ad.concat([gen, ad.constant(np.zeros((1, n_extra)))], axis=1)
    return ad.add(gen, ad.scale(ad.matmul(a, ad.constant(copy)), ad.one_minus(p_gen)))


def nll(p_final: ad.Tensor, target: int) -> ad.Tensor:
    """``-log max(p(target), 1e-12)``."""
    if not 0 <= target < p_final.shape[1]:
        raise IndexError(f"target {target} outside extended vocabulary of {p_final.shape[1]}")
    return ad.scale(ad.log(ad.cols(p_final, target, target + 1)), -1.0)


def nll_loss(p_finals, targets) -> ad.Tensor:
    """Mean per-step negative log likelihood of a target sequence."""
    return ad.mean([nll(p, t) for p, t in zip(p_finals, targets)])
