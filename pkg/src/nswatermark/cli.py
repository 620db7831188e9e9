"""Command-line entry point: ``nswm <subcommand> ...``.

Exit status: 0 on success, 1 on a domain error (bad config value,
infeasible decode, unreachable server, ...), 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import (
    GAMMA_GRID,
    MODES,
    ConfigError,
    RunConfig,
    _floats,
    key_from_env,
    read_config_values,
)
from .corpus import read_corpus, split_validation_test, synthetic_corpus
from .detector import detect
from .evaluation import (
    decode,
    read_records,
    run_corpus,
    tune_gamma,
    write_records,
    write_scatter_csv,
    write_summary,
)
from .lm import NGramModel, Vocabulary, tokenize, train_ngram
from .ns_decoder import InfeasibleError
from .partition import parse_key
from .remote import RemoteLogitClient, RemoteLogitError
from .theory import DISTRIBUTIONS, simulation_report


class DomainError(Exception):
    pass


# --- shared option groups -------------------------------------------------------

# flag dest -> config-file key
_FLAG_KEYS = {
    "gamma": "gamma",
    "z": "z",
    "beta": "beta",
    "alpha": "alpha",
    "tmax": "tmax",
    "beam": "beam",
    "key": "key",
    "delta": "delta",
    "delta_grid": "delta_grid",
    "mode": "mode",
    "model": "model",
    "endpoint": "endpoint",
    "timeout_ms": "timeout_ms",
    "input": "input",
    "output": "output",
    "seed": "seed",
}


def _key_arg(text: str) -> int:
    try:
        return parse_key(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _add_watermark_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("watermark")
    g.add_argument("--config", help="key = value config file; flags override it")
    g.add_argument("--gamma", type=float)
    g.add_argument("--z", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--alpha", type=float)
    g.add_argument("--tmax", type=int)
    g.add_argument("--beam", type=int)
    g.add_argument("--key", type=_key_arg, help="hex key; falls back to $NSWM_KEY")
    g.add_argument("--delta", type=float, help="soft-watermark offset")
    g.add_argument("--delta-grid", type=_floats, help="comma-separated offsets for adaptive-soft")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--model", help="n-gram model file from train-lm")
    g.add_argument("--endpoint", help="host:port of a remote logit server")
    g.add_argument("--vocab", help="vocabulary file (required with --endpoint)")
    g.add_argument("--timeout-ms", type=int)


def _add_io_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", help="input file (default: stdin)")
    p.add_argument("--output", help="output file (default: stdout)")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nswm", description="Minimum-constraint text watermarking toolkit.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-lm", help="train an n-gram model")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--corpus", help="text file, one whitespace-tokenized sentence per line")
    src.add_argument("--synthetic", type=int, metavar="N", help="train on N synthetic sentences")
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--smoothing", type=float, default=0.001, help="add-alpha smoothing")
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True, help="model file to write")
    p.add_argument("--vocab-out", help="also write the vocabulary alone")
    p.add_argument("--corpus-out", help="also write the training sentences (synthetic only)")

    p = sub.add_parser("generate", help="decode one output per prompt line")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--ids", action="store_true", help="prompt lines are token ids")
    _add_watermark_flags(p)
    _add_model_flags(p)
    _add_io_flags(p)

    p = sub.add_parser("detect", help="score token-id or text lines")
    p.add_argument("--format", choices=("auto", "ids", "text"), default="auto")
    _add_watermark_flags(p)
    _add_model_flags(p)
    _add_io_flags(p)

    p = sub.add_parser("evaluate", help="decode a prompt set under several modes")
    p.add_argument("--modes", default="none,ns", help="comma-separated modes")
    p.add_argument("--ids", action="store_true")
    p.add_argument("--out-dir", help="write records.jsonl, summary.json and scatter.csv here")
    p.add_argument("--human-min-length", type=int, default=0)
    _add_watermark_flags(p)
    _add_model_flags(p)
    _add_io_flags(p)

    p = sub.add_parser("simulate", help="Monte-Carlo check of the tuned soft watermark")
    p.add_argument("--theorem1", action="store_true", required=True)
    p.add_argument("--T", type=int, default=10_000)
    p.add_argument("--N", type=int, default=100_000)
    p.add_argument("--dist", choices=sorted(DISTRIBUTIONS), default="uniform01")
    p.add_argument("--lemma-runs", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output")

    p = sub.add_parser("tune", help="grid search over gamma on a validation split")
    p.add_argument("--grid-gamma", type=_floats, default=GAMMA_GRID)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--ids", action="store_true")
    p.add_argument("--validation-fraction", type=float, default=0.1)
    p.add_argument("--max-fnr", type=float, default=0.0)
    _add_watermark_flags(p)
    _add_model_flags(p)
    _add_io_flags(p)
    return ap


# --- config resolution -----------------------------------------------------------


def resolve_config(args) -> RunConfig:
    """defaults < config file < flags; ``$NSWM_KEY`` if no key was given."""
    values = read_config_values(args.config) if getattr(args, "config", None) else {}
    for dest, name in _FLAG_KEYS.items():
        v = getattr(args, dest, None)
        if v is not None:
            values[name] = v
    if "key" not in values:
        try:
            values["key"] = key_from_env()
        except ValueError as exc:
            raise ConfigError(f"NSWM_KEY: {exc}") from exc
    return RunConfig().update(values)


def load_model(run: RunConfig, vocab_path: str | None):
    """``(provider, vocabulary)`` for a model file or a remote endpoint."""
    if run.model:
        model = NGramModel.load(run.model)
        return model, model.vocabulary
    if run.endpoint:
        if not vocab_path:
            raise DomainError("--vocab is required with --endpoint")
        vocab = Vocabulary.load(vocab_path)
        return RemoteLogitClient(run.endpoint, len(vocab), run.timeout_ms), vocab
    raise DomainError("a model (--model) or an endpoint (--endpoint) is required")


def _read_lines(path: str | None) -> list[str]:
    if path:
        return Path(path).read_text(encoding="utf-8").splitlines()
    return sys.stdin.read().splitlines()


def _parse_ids(line: str) -> list[int]:
    line = line.strip()
    if line.startswith("["):
        return [int(t) for t in json.loads(line)]
    return [int(t) for t in line.split()]


def _looks_like_ids(line: str) -> bool:
    try:
        _parse_ids(line)
        return True
    except (ValueError, TypeError, json.JSONDecodeError):
        return False


def _prompts(lines, vocab: Vocabulary, ids: bool) -> list[list[int]]:
    out = []
    for line in lines:
        if not line.strip():
            continue
        out.append(_parse_ids(line) if ids else vocab.encode(tokenize(line)))
    return out


class _Output:
    def __init__(self, path: str | None):
        self.fh = open(path, "w", encoding="utf-8") if path else sys.stdout

    def line(self, obj) -> None:
        self.fh.write(json.dumps(obj) + "\n")

    def close(self) -> None:
        if self.fh is not sys.stdout:
            self.fh.close()
        else:
            self.fh.flush()


def _json_float(x: float):
    return x if math.isfinite(x) else None


# --- subcommands ---------------------------------------------------------------------


def cmd_train_lm(args) -> int:
    if args.corpus:
        sentences = read_corpus(args.corpus)
    else:
        sentences = synthetic_corpus(args.synthetic, seed=args.seed)
    if not sentences:
        raise DomainError("empty corpus")
    model = train_ngram(sentences, args.order, args.smoothing, min_count=args.min_count)
    model.save(args.output)
    if args.vocab_out:
        model.vocabulary.save(args.vocab_out)
    if args.corpus_out:
        Path(args.corpus_out).write_text("".join(" ".join(s) + "\n" for s in sentences), encoding="utf-8")
    print(json.dumps({"vocab_size": model.vocab_size, "order": model.order, "sentences": len(sentences)}), file=sys.stderr)
    return 0


_GEN: dict = {}


def _gen_init(model, run):
    _GEN.update(model=model, run=run)


def _gen_one(prompt):
    run, model = _GEN["run"], _GEN["model"]
    cfg = run.watermark
    result = decode(run.mode, cfg, model, prompt, run.delta)
    rep = detect(cfg.partition(model.vocab_size), result.tokens, cfg.Z)
    out = {"tokens": result.tokens, "logprob": result.logprob, "z": _json_float(rep.z)}
    if run.mode == "ns-linear":
        out["t_hat"] = result.info["t_hat"]
    if run.mode in ("adaptive-soft", "soft"):
        out["delta_used"] = result.info["delta_used"]
    return out


def _map_ordered(init, initargs, fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(jobs, initializer=init, initargs=initargs) as pool:
            return list(pool.map(fn, items))
    init(*initargs)
    return [fn(it) for it in items]


def cmd_generate(args) -> int:
    run = resolve_config(args)
    model, vocab = load_model(run, args.vocab)
    prompts = _prompts(_read_lines(run.input), vocab, args.ids)
    outs = _map_ordered(_gen_init, (model, run), _gen_one, prompts, args.jobs)
    sink = _Output(run.output)
    try:
        for o in outs:
            sink.line({"tokens": o["tokens"], "text": vocab.to_text(o["tokens"]), **{k: v for k, v in o.items() if k != "tokens"}})
    finally:
        sink.close()
    return 0


def cmd_detect(args) -> int:
    run = resolve_config(args)
    if run.model:
        vocab = NGramModel.load(run.model).vocabulary
    elif args.vocab:
        vocab = Vocabulary.load(args.vocab)
    else:
        raise DomainError("detect needs --model or --vocab to know the vocabulary")
    params = run.watermark.partition(len(vocab))
    sink = _Output(run.output)
    try:
        for line in _read_lines(run.input):
            if not line.strip():
                continue
            if line.lstrip().startswith("{"):
                ids = [int(t) for t in json.loads(line)["tokens"]]
            elif args.format == "ids" or (args.format == "auto" and _looks_like_ids(line)):
                ids = _parse_ids(line)
            else:
                ids = vocab.encode(tokenize(line))
            bad = [t for t in ids if not 0 <= t < len(vocab)]
            if bad:
                raise DomainError(f"token id {bad[0]} outside vocabulary of size {len(vocab)}")
            rep = detect(params, ids, run.watermark.Z).to_json()
            rep["z"] = _json_float(rep["z"])
            sink.line(rep)
    finally:
        sink.close()
    return 0


def cmd_evaluate(args) -> int:
    run = resolve_config(args)
    model, vocab = load_model(run, args.vocab)
    prompts = _prompts(_read_lines(run.input), vocab, args.ids)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    for m in modes:
        if m not in MODES:
            raise DomainError(f"unknown mode {m!r}")
    res = run_corpus(run.watermark, model, prompts, modes, run.delta, run.seed, args.jobs, args.human_min_length)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_records(out / "records.jsonl", res.records)
        write_summary(out / "summary.json", res)
        write_scatter_csv(out / "scatter.csv", res.records)
        # sanity: the file must read back identically
        if read_records(out / "records.jsonl") != res.records:
            raise DomainError("record round-trip mismatch")
    sink = _Output(run.output)
    try:
        sink.line(res.summary_json())
    finally:
        sink.close()
    return 0


def cmd_simulate(args) -> int:
    if args.T < 2:
        raise DomainError("T must be >= 2")
    if args.N < 1:
        raise DomainError("N must be >= 1")
    report = simulation_report(args.T, args.N, args.dist, args.seed, args.lemma_runs)
    sink = _Output(args.output)
    try:
        sink.line(report)
    finally:
        sink.close()
    return 0


def cmd_tune(args) -> int:
    run = resolve_config(args)
    model, vocab = load_model(run, args.vocab)
    prompts = _prompts(_read_lines(run.input), vocab, args.ids)
    val, test = split_validation_test(prompts, args.validation_fraction, run.seed)
    if not val or not test:
        raise DomainError("too few prompts for a validation/test split")
    for g in args.grid_gamma:
        run.watermark.with_(gamma=g)  # validates every grid point up front
    report = tune_gamma(run.watermark, model, val, args.grid_gamma, run.mode, run.delta, run.seed, args.jobs, args.max_fnr)
    if report["best_gamma"] is not None:
        res = run_corpus(run.watermark.with_(gamma=report["best_gamma"]), model, test, (run.mode,), run.delta, run.seed, args.jobs)
        report["test"] = res.summary_json()[run.mode]
    report.update(n_validation=len(val), n_test=len(test))
    sink = _Output(run.output)
    try:
        sink.line(report)
    finally:
        sink.close()
    return 0


COMMANDS = {
    "train-lm": cmd_train_lm,
    "generate": cmd_generate,
    "detect": cmd_detect,
    "evaluate": cmd_evaluate,
    "simulate": cmd_simulate,
    "tune": cmd_tune,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DomainError, InfeasibleError, RemoteLogitError, ValueError, OSError) as exc:
        print(f"nswm {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
