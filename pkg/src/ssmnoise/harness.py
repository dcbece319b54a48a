"""Evaluation metrics (perplexity, KL-from-clean, robustness ratio), sweep
orchestration over (selector, sigma, trial) grids, and report serialization.

Absolute perplexity of toy (random-weight) models is meaningless, so KL
divergence from the clean model's predictions is reported alongside PPL as
the degradation measure.
"""
from __future__ import annotations

import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .engine import model_forward, nll
from .hpd import HpdPlacement, apply_hpd
from .model_io import Checkpoint, TokenCorpus
from .numerics import softmax
from .perturb import NoiseSpec, TargetSelector, perturb_checkpoint

CSV_HEADER = "model,selector,dist,mode,sigma,trial,seed,hpd,ppl,kl,n_tokens"


@dataclass(frozen=True)
class EvalResult:
    ppl: float
    mean_nll: float
    kl_from_clean: float
    n_tokens: int
    trial: int = 0


@dataclass(frozen=True)
class RatioInput:
    ppl_clean_original: float
    ppl_noise_original: float
    ppl_noise_ours: float


@dataclass(frozen=True)
class SweepRow:
    model_id: str
    selector: str
    distribution: str
    mode: str
    sigma: float
    trial: int
    seed: int
    hpd: bool
    ppl: float
    kl: float
    n_tokens: int


@dataclass(frozen=True)
class SweepAggregate:
    selector: str
    sigma: float
    ppl_mean: float
    ppl_std: float
    kl_mean: float
    kl_std: float
    trials: int


@dataclass(frozen=True)
class SweepReport:
    rows: tuple[SweepRow, ...]

    def aggregates(self) -> tuple[SweepAggregate, ...]:
        groups: dict[tuple[str, float], list[SweepRow]] = {}
        for row in self.rows:
            groups.setdefault((row.selector, row.sigma), []).append(row)
        out = []
        for (selector, sigma), rows in groups.items():
            ppl = np.array([r.ppl for r in rows])
            kl = np.array([r.kl for r in rows])
            out.append(
                SweepAggregate(
                    selector=selector,
                    sigma=sigma,
                    ppl_mean=float(ppl.mean()),
                    ppl_std=float(ppl.std(ddof=1)) if len(rows) > 1 else 0.0,
                    kl_mean=float(kl.mean()),
                    kl_std=float(kl.std(ddof=1)) if len(rows) > 1 else 0.0,
                    trials=len(rows),
                )
            )
        return tuple(out)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for r in self.rows:
            buf.write(
                f"{r.model_id},{r.selector},{r.distribution},{r.mode},"
                f"{r.sigma:.17g},{r.trial},{r.seed},{int(r.hpd)},"
                f"{r.ppl:.17g},{r.kl:.17g},{r.n_tokens}\n"
            )
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "rows": [r.__dict__ for r in self.rows],
                "aggregates": [a.__dict__ for a in self.aggregates()],
            },
            indent=2,
            sort_keys=True,
        )


def window_starts(n_tokens: int, window: int, stride: int) -> list[int]:
    if window < 2:
        raise ConfigError(f"window must be >= 2, got {window}")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    starts = []
    s = 0
    while s + 1 < n_tokens:
        starts.append(s)
        s += stride
    return starts


def windowed_scores(forward_fn, tokens: np.ndarray, window: int, stride: int,
                    clean_fn=None) -> tuple[np.ndarray, np.ndarray]:
    """Per-position NLLs (and KL from a clean forward, when given) over
    sliding windows.  Each predicted position is scored exactly once; with
    overlapping windows only positions not already covered contribute.
    """
    nlls: list[float] = []
    kls: list[float] = []
    covered = 0  # highest target index already scored
    for s in window_starts(len(tokens), window, stride):
        chunk = tokens[s : s + window]
        if len(chunk) < 2:
            break
        logits = forward_fn(chunk)
        chunk_nll = nll(logits, chunk)
        clean_probs = None
        if clean_fn is not None:
            clean_probs = softmax(clean_fn(chunk))
            probs = softmax(logits)
        for j in range(len(chunk) - 1):
            target_index = s + j + 1
            if target_index <= covered:
                continue
            covered = target_index
            nlls.append(float(chunk_nll[j]))
            if clean_probs is not None:
                p = clean_probs[j]
                q = probs[j]
                kls.append(float(np.sum(p * (np.log(p) - np.log(q)))))
    return np.array(nlls), np.array(kls)


def perplexity(ckpt: Checkpoint, corpus: TokenCorpus, window: int = 512, stride: int = 512,
               clean_ckpt: Checkpoint | None = None, trial: int = 0) -> EvalResult:
    """Windowed perplexity (and mean KL from clean_ckpt when given)."""
    clean_fn = None if clean_ckpt is None else (lambda t: model_forward(clean_ckpt, t))
    nlls, kls = windowed_scores(
        lambda t: model_forward(ckpt, t), corpus.tokens, window, stride, clean_fn
    )
    mean_nll = float(nlls.mean())
    return EvalResult(
        ppl=float(np.exp(mean_nll)),
        mean_nll=mean_nll,
        kl_from_clean=float(kls.mean()) if kls.size else 0.0,
        n_tokens=int(nlls.size),
        trial=trial,
    )


def robustness_ratio(inputs: RatioInput) -> float:
    """Normalized recovery of noise-induced PPL degradation: 1 is full
    recovery to the clean baseline, 0 is no improvement over the noisy
    original.  Values outside [0, 1] are reported unclipped."""
    denom = inputs.ppl_noise_original - inputs.ppl_clean_original
    if denom == 0:
        raise ConfigError("degenerate ratio input: noisy PPL equals clean PPL")
    return 1.0 - (inputs.ppl_noise_ours - inputs.ppl_clean_original) / denom


def _grid_point(args):
    (ckpt, corpus, window, stride, selector, sigma, trial, template, clean) = args
    spec = replace(template, sigma=sigma, trial=trial)
    noisy = perturb_checkpoint(ckpt, selector, spec)
    return perplexity(noisy, corpus, window, stride, clean_ckpt=clean, trial=trial)


def sweep(ckpt: Checkpoint, corpus: TokenCorpus, sigmas, selectors, template: NoiseSpec,
          trials: int = 1, hpd: bool = False, window: int = 512, stride: int = 512,
          model_id: str = "model", workers: int = 1,
          placement: HpdPlacement | None = None) -> SweepReport:
    """Evaluate every (selector, sigma, trial) grid point.

    sigma = 0 rows reuse the single clean evaluation.  Results assemble in
    grid order and are independent of the worker count (noise lanes are keyed
    by tensor name and trial, not execution order).
    """
    sigmas = list(sigmas)
    selectors = list(selectors)
    if not sigmas or not selectors or trials < 1:
        raise ConfigError("sweep needs nonempty sigma/selector grids and trials >= 1")
    base = apply_hpd(ckpt, placement) if hpd else ckpt
    clean = perplexity(base, corpus, window, stride)

    grid = [
        (sel, sigma, trial)
        for sel in selectors
        for sigma in sigmas
        for trial in range(trials)
    ]
    noisy_points = [g for g in grid if g[1] != 0.0]
    jobs = [
        (base, corpus, window, stride, sel, sigma, trial, template, base)
        for (sel, sigma, trial) in noisy_points
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = dict(zip(noisy_points, pool.map(_grid_point, jobs, chunksize=1)))
    else:
        results = dict(zip(noisy_points, (_grid_point(job) for job in jobs)))

    rows = []
    for (sel, sigma, trial) in grid:
        if sigma == 0.0:
            res = replace(clean, trial=trial)
        else:
            res = results[(sel, sigma, trial)]
        rows.append(
            SweepRow(
                model_id=model_id,
                selector=sel.describe(),
                distribution=template.distribution,
                mode=template.mode,
                sigma=float(sigma),
                trial=trial,
                seed=template.seed,
                hpd=hpd,
                ppl=res.ppl,
                kl=res.kl_from_clean,
                n_tokens=res.n_tokens,
            )
        )
    return SweepReport(rows=tuple(rows))
