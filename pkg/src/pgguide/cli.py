"""Command-line entry point: train, decode, evaluate, analyze, gradcheck, synth.

Exit codes: 0 success, 1 invalid input (bad flags, config or files), 2 runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .annotate import AnnotationError, Vocabulary
from .checkpoint import CheckpointError, load_checkpoint
from .config import Config, ConfigError
from .corpus import CorpusError, load_corpus, read_corpus, save_corpus
from .decode import DecodeError, decode, read_traces, write_traces
from .metrics import aggregate, detect_shunts, emit_report, format_report, format_shunt_log, pgen_stats
from .model import config_from_parameters, init_parameters

log = logging.getLogger("pgguide")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _parser() -> _Parser:
    p = _Parser(prog="pgguide", description="Pointer-generator summarisation with cue- and coreference-guided attention.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    t = sub.add_parser("train", help="train a model from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--warm-start")
    t.add_argument("overrides", nargs="*", metavar="key=value")

    d = sub.add_parser("decode", help="decode a corpus and write attention traces")
    d.add_argument("--ckpt", required=True)
    d.add_argument("--corpus", required=True)
    d.add_argument("--mode", required=True)
    d.add_argument("--beam", type=int, default=1)
    d.add_argument("--trace-out", required=True)
    _common(d)

    e = sub.add_parser("evaluate", help="decode and score a corpus")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--corpus", required=True)
    e.add_argument("--report", required=True)
    e.add_argument("--mode")
    e.add_argument("--beam", type=int, default=1)
    e.add_argument("--figures", help="directory for PNG figures")
    _common(e)

    a = sub.add_parser("analyze", help="shunting log and attention heat map from traces")
    a.add_argument("--trace", required=True)
    a.add_argument("--corpus", required=True)
    a.add_argument("--shunts")
    a.add_argument("--heat")
    a.add_argument("--figures", help="directory for PNG figures")

    g = sub.add_parser("gradcheck", help="finite-difference gradient check on a tiny model")
    g.add_argument("--config", required=True)
    g.add_argument("--eps", type=float)
    g.add_argument("--all-modes", action="store_true")
    g.add_argument("overrides", nargs="*", metavar="key=value")

    s = sub.add_parser("synth", help="write a synthetic-task corpus")
    s.add_argument("--task", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--vocab-out")
    s.add_argument("--vocab-size", type=int, default=200)
    s.add_argument("--article-len", type=int, default=30)
    s.add_argument("--oov-rate", type=float, default=0.1)
    return p


def _common(p):
    p.add_argument("--config", help="config file supplying model and decoding settings")
    p.add_argument("--vocab", help="vocabulary file (default: the synthetic vocabulary of the checkpoint's size)")
    p.add_argument("overrides", nargs="*", metavar="key=value")


def _load_config(args) -> Config:
    path = getattr(args, "config", None)
    overrides = getattr(args, "overrides", []) or []
    return Config.from_file(path, overrides) if path else Config().with_overrides(overrides)


def _load_model(args):
    from .synthetic import SyntheticTaskSpec, synthetic_vocab

    arrays = load_checkpoint(args.ckpt)
    cfg = config_from_parameters(arrays, _load_config(args))
    if getattr(args, "mode", None):
        cfg = cfg.replace(mode=args.mode)
    if getattr(args, "beam", None):
        cfg = cfg.replace(beam=args.beam)
    params = init_parameters(cfg, arrays["embedding"].shape[0], 0)
    params.load_arrays(arrays, strict=False)
    vocab_path = args.vocab or cfg.vocab
    if vocab_path:
        vocab = Vocabulary.load(vocab_path)
    else:
        vocab = synthetic_vocab(SyntheticTaskSpec(vocab_size=cfg.vocab_size))
    if len(vocab) != cfg.vocab_size:
        raise ConfigError(f"vocabulary has {len(vocab)} entries but the checkpoint expects {cfg.vocab_size}")
    return cfg, params, vocab


def cmd_train(args) -> int:
    from .train import train

    cfg = _load_config(args)
    if args.warm_start:
        cfg = cfg.replace(warm_start=args.warm_start)
    result = train(cfg, progress_every=max(1, cfg.steps // 20))
    if result.curve:
        last = result.curve[-1]
        print(f"steps\t{len(result.curve)}\nfinal_nll\t{last.nll:.6f}\nfinal_total\t{last.total:.6f}")
    return 0


def cmd_decode(args) -> int:
    cfg, params, vocab = _load_model(args)
    docs = load_corpus(args.corpus, vocab, cfg.cues)
    traces = [decode(d, params, cfg, vocab) for d in docs]
    write_traces(traces, args.trace_out)
    log.info("wrote %d traces to %s", len(traces), args.trace_out)
    return 0


def cmd_evaluate(args) -> int:
    from .train import evaluate

    cfg, params, vocab = _load_model(args)
    docs = list(load_corpus(args.corpus, vocab, cfg.cues))
    evals = list(evaluate(params, docs, cfg, vocab))
    reports = [e.report for e in evals]
    rows = reports + ([aggregate(reports, "ALL", cfg.novelty_avg)] if reports else [])
    emit_report(rows, args.report)
    sys.stdout.write(format_report(rows[-1:]) if reports else format_report([]))
    if args.figures and reports:
        from .render import plot_cumulative_attention, plot_overlap, plot_pgen_histogram

        out = Path(args.figures)
        out.mkdir(parents=True, exist_ok=True)
        plot_pgen_histogram(rows[-1], out / "pgen_histogram.png")
        plot_overlap([(e.summary, e.doc.tokens) for e in evals], out / "overlap.png", cfg.mode)
        plot_cumulative_attention(evals[0].trace, evals[0].doc, out / "attention_first_doc.png")
    return 0


def cmd_analyze(args) -> int:
    from .render import render_attention

    docs = {d.doc_id: d for d in read_corpus(args.corpus)}
    traces = list(read_traces(args.trace))
    shunt_lines, heat, pgens = [], [], []
    for tr in traces:
        if tr.doc_id not in docs:
            raise CorpusError(f"trace {tr.doc_id!r} has no matching corpus record")
        shunt_lines.append(format_shunt_log(tr.doc_id, detect_shunts(tr)))
        heat.append(f"# {tr.doc_id}\n" + render_attention(tr, docs[tr.doc_id]))
        pgens.extend(r.p_gen for r in tr.records)
    if args.shunts:
        Path(args.shunts).write_text("".join(shunt_lines), encoding="utf-8")
    else:
        sys.stdout.write("".join(shunt_lines))
    if args.heat:
        Path(args.heat).write_text("\n".join(heat), encoding="utf-8")
    if pgens:
        avg, hist = pgen_stats(pgens)
        log.info("avg_pgen %.4f histogram %s", avg, " ".join(map(str, hist)))
    if args.figures and traces:
        from .metrics import MetricsReport
        from .render import plot_cumulative_attention, plot_pgen_histogram

        out = Path(args.figures)
        out.mkdir(parents=True, exist_ok=True)
        if pgens:
            plot_pgen_histogram(MetricsReport("ALL", 0, 0, 0, pgens=pgens), out / "pgen_histogram.png")
        for tr in traces:
            plot_cumulative_attention(tr, docs[tr.doc_id], out / f"attention_{_safe(tr.doc_id)}.png")
    return 0


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def cmd_gradcheck(args) -> int:
    from .gradcheck import DEFAULT_EPS, THRESHOLD, run_all_modes, run_gradcheck

    cfg = _load_config(args)
    eps = args.eps if args.eps is not None else DEFAULT_EPS
    if not 1e-6 <= eps <= 1e-3:
        raise ConfigError(f"eps must lie in [1e-6, 1e-3], got {eps}")
    results = run_all_modes(cfg, eps) if args.all_modes else [run_gradcheck(cfg, eps)]
    for r in results:
        print(f"{r.mode}\tmax_rel_error\t{r.max_rel_error:.3e}\t{'pass' if r.passed else 'FAIL'}")
    if not all(r.passed for r in results):
        log.error("gradient check exceeded threshold %g", THRESHOLD)
        return 2
    return 0


def cmd_synth(args) -> int:
    from .synthetic import SyntheticTaskSpec, generate_documents, synthetic_vocab

    try:
        spec = SyntheticTaskSpec(args.task, args.vocab_size, args.article_len, args.oov_rate, args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.n < 0:
        raise ConfigError("--n must be non-negative")
    save_corpus(generate_documents(spec, args.n), args.out)
    if args.vocab_out:
        synthetic_vocab(spec).save(args.vocab_out)
    return 0


COMMANDS = {"train": cmd_train, "decode": cmd_decode, "evaluate": cmd_evaluate, "analyze": cmd_analyze,
            "gradcheck": cmd_gradcheck, "synth": cmd_synth}

_VALIDATION_ERRORS = (UsageError, ConfigError, CorpusError, AnnotationError, CheckpointError, DecodeError,
                      FileNotFoundError, IsADirectoryError, KeyError)


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        return COMMANDS[args.command](args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure: divergence, numerical errors, I/O mid-run
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
