"""Corpus-level evaluation: per-text records, detection rates, word-flip
attacks, unwatermarked reference samples and result files."""

from __future__ import annotations

import csv
import json
import math
import time
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .baselines import SoftParams, decode_adaptive_soft, decode_hard, decode_plain, decode_soft
from .config import WatermarkConfig
from .detector import DetectionReport, detect
from .lm import EOS_ID, LogitProvider, log_softmax
from .linear_decoder import decode_ns_linear
from .ns_decoder import decode_ns
from .partition import PartitionParams
from .search import DecodeResult

EVAL_MODES = ("none", "hard", "soft", "adaptive-soft", "ns", "ns-linear")


def decode(mode: str, cfg: WatermarkConfig, model: LogitProvider, prompt: Sequence[int], delta: float = 8.0) -> DecodeResult:
    if mode == "none":
        return decode_plain(cfg, model, prompt)
    if mode == "hard":
        return decode_hard(cfg, model, prompt)
    if mode == "soft":
        return decode_soft(SoftParams.from_config(cfg, delta, cfg.beam_k), model, prompt)
    if mode in ("adaptive-soft", "adaptive"):
        return decode_adaptive_soft(cfg, model, prompt)
    if mode == "ns":
        return decode_ns(cfg, model, prompt)
    if mode == "ns-linear":
        return decode_ns_linear(cfg, model, prompt)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass
class EvalRecord:
    prompt_id: int
    mode: str
    tokens: list[int]
    logprob: float
    eos: bool
    perplexity: float
    z: float
    watermarked: bool
    t_hat: int | None = None
    delta_used: float | None = None
    wall_time_ms: float = 0.0

    @property
    def token_count(self) -> int:
        """Tokens the log-probability covers (the EOS counts when emitted)."""
        return len(self.tokens) + int(self.eos)

    def to_json(self) -> str:
        d = asdict(self)
        d["z"] = _enc_float(self.z)
        d["perplexity"] = _enc_float(self.perplexity)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "EvalRecord":
        d = json.loads(line)
        d["z"] = _dec_float(d["z"])
        d["perplexity"] = _dec_float(d["perplexity"])
        return cls(**d)


def _enc_float(x: float):
    return x if math.isfinite(x) else repr(x)


def _dec_float(x) -> float:
    return float(x)


def perplexity(logprob: float, token_count: int) -> float:
    return math.exp(-logprob / token_count) if token_count else math.inf


def make_record(prompt_id: int, mode: str, result: DecodeResult, report: DetectionReport, wall_ms: float) -> EvalRecord:
    return EvalRecord(
        prompt_id=prompt_id,
        mode=mode,
        tokens=list(result.tokens),
        logprob=float(result.logprob),
        eos=result.eos,
        perplexity=perplexity(result.logprob, result.scored_length),
        z=float(report.z),
        watermarked=bool(report.is_watermarked),
        t_hat=result.info.get("t_hat"),
        delta_used=result.info.get("delta_used"),
        wall_time_ms=wall_ms,
    )


@dataclass(frozen=True)
class ConfusionSummary:
    FNR: float
    TPR: float
    FPR: float
    TNR: float

    def as_tuple(self) -> tuple:
        return (self.FNR, self.TPR, self.FPR, self.TNR)


def _flags(reports) -> list[bool]:
    return [r.is_watermarked if isinstance(r, DetectionReport) else bool(r) for r in reports]


def confusion_metrics(generated: Iterable, human: Iterable) -> ConfusionSummary:
    """Rates over detection reports (or plain booleans) of both classes."""
    gen, hum = _flags(generated), _flags(human)
    if not gen or not hum:
        raise ValueError("both the generated and the human class must be nonempty")
    tpr = sum(gen) / len(gen)
    fpr = sum(hum) / len(hum)
    return ConfusionSummary(1.0 - tpr, tpr, fpr, 1.0 - fpr)


# --- attacks -----------------------------------------------------------------


def green_positions(params: PartitionParams, tokens: Sequence[int]) -> list[int]:
    return [i for i in range(1, len(tokens)) if params.green_mask(tokens[i - 1])[tokens[i]]]


def post_edit_attack(
    params: PartitionParams,
    tokens: Sequence[int],
    flip_fraction: float,
    rng_seed: int = 0,
    successor_aware: bool = False,
) -> list[int]:
    """Replace ``floor(flip_fraction * (T - 1))`` green words with red ones.

    Positions are picked uniformly among the greens and the replacement is a
    uniform red token w.r.t. the (possibly already edited) predecessor.
    Plain mode may recolor the following pair either way. The
    ``successor_aware`` variant only uses replacements that keep the next
    pair's color, so each flip removes exactly one green; positions with no
    such replacement are skipped in favour of other greens.
    """
    if not 0 <= flip_fraction <= 1:
        raise ValueError("flip_fraction must be in [0, 1]")
    out = [int(t) for t in tokens]
    if out and out[-1] == EOS_ID:
        out.pop()
    T = len(out)
    n_flip = math.floor(flip_fraction * (T - 1)) if T >= 2 else 0
    if n_flip == 0:
        return out
    rng = np.random.default_rng(rng_seed)
    candidates = [int(i) for i in rng.permutation(green_positions(params, out))]
    flipped = 0
    for i in sorted(candidates[:n_flip]) if not successor_aware else candidates:
        if flipped >= n_flip:
            break
        if not params.green_mask(out[i - 1])[out[i]]:
            continue  # recolored by an earlier edit
        red = ~params.green_mask(out[i - 1])
        red[EOS_ID] = False
        if successor_aware and i + 1 < T:
            keep = params.green_mask(out[i])[out[i + 1]]
            ok = np.flatnonzero(red)
            ok = ok[[params.green_mask(int(r))[out[i + 1]] == keep for r in ok]]
        else:
            ok = np.flatnonzero(red)
        if len(ok) == 0:
            continue
        out[i] = int(rng.choice(ok))
        flipped += 1
    return out


# --- unwatermarked reference texts --------------------------------------------


def sample_text(
    model: LogitProvider,
    prompt: Sequence[int],
    rng: np.random.Generator,
    T_max: int = 100,
    min_length: int = 0,
) -> list[int]:
    """Ancestral sample from the model; EOS is suppressed before ``min_length``."""
    out: list[int] = []
    while len(out) < T_max:
        lp = log_softmax(np.asarray(model.logits(prompt, out), dtype=np.float64))
        if len(out) < max(1, min_length):
            lp[EOS_ID] = -np.inf
        p = np.exp(lp - lp.max())
        tok = int(rng.choice(len(p), p=p / p.sum()))
        if tok == EOS_ID:
            break
        out.append(tok)
    return out


def human_rng(seed: int, prompt_id: int) -> np.random.Generator:
    return np.random.default_rng([seed, prompt_id])


# --- corpus runs --------------------------------------------------------------


@dataclass
class CorpusResult:
    records: list[EvalRecord]
    human: list[DetectionReport]
    summaries: dict = field(default_factory=dict)

    def by_mode(self, mode: str) -> list[EvalRecord]:
        return [r for r in self.records if r.mode == mode]

    def mean_logprob(self, mode: str) -> float:
        return float(np.mean([r.logprob for r in self.by_mode(mode)]))

    def summary_json(self) -> dict:
        out = {}
        for mode, s in self.summaries.items():
            recs = self.by_mode(mode)
            out[mode] = {
                **asdict(s),
                "n": len(recs),
                "mean_logprob": float(np.mean([r.logprob for r in recs])),
                "mean_perplexity": float(np.mean([r.perplexity for r in recs])),
                "mean_length": float(np.mean([len(r.tokens) for r in recs])),
                "mean_wall_time_ms": float(np.mean([r.wall_time_ms for r in recs])),
            }
        return out


_WORKER: dict = {}


def _init_worker(model, cfg, modes, delta, seed, human_min_length):
    _WORKER.update(model=model, cfg=cfg, modes=modes, delta=delta, seed=seed, human_min_length=human_min_length)


def _eval_prompt(item):
    pid, prompt = item
    w = _WORKER
    cfg, model = w["cfg"], w["model"]
    params = cfg.partition(model.vocab_size)
    records = []
    for mode in w["modes"]:
        t0 = time.perf_counter()
        result = decode(mode, cfg, model, prompt, w["delta"])
        ms = (time.perf_counter() - t0) * 1000
        records.append(make_record(pid, mode, result, detect(params, result.tokens, cfg.Z), ms))
    human = sample_text(model, prompt, human_rng(w["seed"], pid), cfg.T_max, w["human_min_length"])
    return records, detect(params, human, cfg.Z)


def check_prompts(model: LogitProvider, prompts: Sequence[Sequence[int]]) -> None:
    if not prompts:
        raise ValueError("no prompts")
    V = model.vocab_size
    for i, p in enumerate(prompts):
        bad = [t for t in p if not 0 <= int(t) < V]
        if bad:
            raise ValueError(f"prompt {i}: token ids {bad[:3]} outside the model vocabulary (size {V})")


def run_corpus(
    cfg: WatermarkConfig,
    model: LogitProvider,
    prompts: Sequence[Sequence[int]],
    modes: Sequence[str] = ("ns",),
    delta: float = 8.0,
    seed: int = 0,
    jobs: int = 1,
    human_min_length: int = 0,
) -> CorpusResult:
    """Decode every prompt under every mode and score one unwatermarked
    sample per prompt as the human class. Output order is prompt order."""
    check_prompts(model, prompts)
    for m in modes:
        if m not in EVAL_MODES and m != "adaptive":
            raise ValueError(f"unknown mode {m!r}")
    items = [(i, [int(t) for t in p]) for i, p in enumerate(prompts)]
    init = (model, cfg, tuple(modes), delta, seed, human_min_length)
    if jobs > 1:
        with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=init) as pool:
            outs = list(pool.map(_eval_prompt, items, chunksize=max(1, len(items) // (4 * jobs))))
    else:
        _init_worker(*init)
        outs = [_eval_prompt(it) for it in items]
    records = [r for recs, _ in outs for r in recs]
    human = [h for _, h in outs]
    result = CorpusResult(records, human)
    for m in modes:
        result.summaries[m] = confusion_metrics([r.watermarked for r in result.by_mode(m)], human)
    return result


# --- persistence --------------------------------------------------------------


def write_records(path, records: Iterable[EvalRecord]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(r.to_json() + "\n")


def read_records(path) -> list[EvalRecord]:
    with open(path, encoding="utf-8") as f:
        return [EvalRecord.from_json(line) for line in f if line.strip()]


def write_summary(path, result: CorpusResult) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(result.summary_json(), f, indent=2, sort_keys=True)
        f.write("\n")


def write_scatter_csv(path, records: Iterable[EvalRecord]) -> None:
    """``mode,prompt_id,length,z`` rows for length-vs-z plots."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["mode", "prompt_id", "length", "z"])
        for r in records:
            w.writerow([r.mode, r.prompt_id, len(r.tokens), r.z])


def zscore_slope(records: Iterable[EvalRecord]) -> float:
    """Least-squares slope of z against length (texts with finite z only)."""
    pts = [(len(r.tokens), r.z) for r in records if math.isfinite(r.z)]
    x, y = np.array(pts, dtype=float).T
    return float(np.polyfit(x, y, 1)[0])


# --- grid search --------------------------------------------------------------


def tune_gamma(
    cfg: WatermarkConfig,
    model: LogitProvider,
    prompts: Sequence[Sequence[int]],
    gammas: Sequence[float],
    mode: str = "ns",
    delta: float = 8.0,
    seed: int = 0,
    jobs: int = 1,
    max_fnr: float = 0.0,
) -> dict:
    """Pick the gamma with the best mean log-probability among those whose
    FNR on ``prompts`` is at most ``max_fnr``."""
    rows = []
    for g in gammas:
        res = run_corpus(cfg.with_(gamma=g), model, prompts, (mode,), delta, seed, jobs)
        s = res.summaries[mode]
        rows.append({"gamma": g, "mean_logprob": res.mean_logprob(mode), **asdict(s)})
    ok = [r for r in rows if r["FNR"] <= max_fnr]
    best = max(ok, key=lambda r: r["mean_logprob"]) if ok else None
    return {"mode": mode, "grid": rows, "best_gamma": None if best is None else best["gamma"]}
