"""Run configuration: ``key = value`` files plus command-line overrides."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

MODES = ("baseline", "guided", "affinity", "both")
TASKS = ("copy-span", "forbidden-copy", "two-entity")


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    # model shape
    hidden: int = 32
    emb: int = 16
    attn: int = 0  # 0 means "same as hidden"
    cues: str = "both"
    cue_concat: bool = True
    bidirectional: bool = False
    input_feed: bool = True
    init_scale: float = 0.1
    # objective
    mode: str = "baseline"
    mu: float = 1.0
    lam: float = 0.1
    affinity_agg: str = "expected"
    affinity_phase: float = 0.75
    # optimizer
    lr: float = 0.15
    acc_init: float = 0.1
    adagrad_eps: float = 1e-8
    clip: float = 2.0
    # schedule
    steps: int = 2000
    accum: int = 8
    seed: int = 0
    max_enc: int = 60
    max_dec: int = 20
    decode_steps: int = 20
    beam: int = 1
    # data
    task: str = "copy-span"
    task_n: int = 0  # 0 means "generate a fresh document per training example"
    vocab_size: int = 200
    article_len: int = 30
    oov_rate: float = 0.1
    corpus: str = ""
    vocab: str = ""
    novelty_avg: str = "micro"
    warm_start: str = ""
    ckpt_out: str = ""
    loss_out: str = ""

    def __post_init__(self):
        self.validate()

    @property
    def attn_dim(self) -> int:
        return self.attn or self.hidden

    @property
    def guided(self) -> bool:
        return self.mode in ("guided", "both")

    @property
    def affinity(self) -> bool:
        return self.mode in ("affinity", "both")

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode: expected one of {MODES}, got {self.mode!r}")
        if self.task not in TASKS:
            raise ConfigError(f"task: expected one of {TASKS}, got {self.task!r}")
        if self.cues not in ("none", "pos", "ner", "both"):
            raise ConfigError(f"cues: unknown cue set {self.cues!r}")
        if self.guided and self.cues == "none":
            raise ConfigError("cues: guided modes need at least one cue block")
        if self.affinity_agg not in ("expected", "unweighted"):
            raise ConfigError(f"affinity_agg: {self.affinity_agg!r}")
        if self.novelty_avg not in ("micro", "macro"):
            raise ConfigError(f"novelty_avg: {self.novelty_avg!r}")
        for key in ("mu", "lam", "acc_init"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key}: must be non-negative")
        for key in ("hidden", "emb", "accum", "max_enc", "max_dec", "decode_steps", "beam"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key}: must be at least 1")
        if self.steps < 0:
            raise ConfigError("steps: must be non-negative")
        if not 0.0 <= self.affinity_phase <= 1.0:
            raise ConfigError("affinity_phase: must lie in [0, 1]")

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)

    def with_overrides(self, pairs) -> "Config":
        """Apply ``key=value`` strings (or a mapping of raw strings)."""
        items = pairs.items() if isinstance(pairs, dict) else (_split(p) for p in pairs)
        return self.replace(**{k: _coerce(k, v) for k, v in items})

    @classmethod
    def from_file(cls, path, overrides=()) -> "Config":
        raw: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, value = (s.strip() for s in line.split("=", 1))
                raw[key] = value
        cfg = cls().with_overrides(raw)
        return cfg.with_overrides(overrides)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {_render(getattr(self, f.name))}\n" for f in fields(self))


# desk-scale values are the defaults; this preset records the full-size model shape
FULL_SCALE = dict(hidden=256, emb=128, vocab_size=50000, max_enc=400, max_dec=100, decode_steps=120)

TINY = dict(hidden=8, emb=8, vocab_size=20, article_len=6, max_dec=4)


def _split(pair: str):
    if "=" not in pair:
        raise ConfigError(f"override {pair!r} is not key=value")
    k, v = pair.split("=", 1)
    return k.strip(), v.strip()


_TYPES = {f.name: f.type for f in fields(Config)}


def _coerce(key: str, value):
    if key not in _TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    if not isinstance(value, str):
        return value
    kind = _TYPES[key]
    try:
        if kind == "bool":
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no", "on", "off"):
                raise ValueError(value)
            return low in ("true", "1", "yes", "on")
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {kind}") from None
    return value


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)
