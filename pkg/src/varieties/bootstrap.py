"""Bootstrap significance machinery for metric triples, plus the paired t-test.

Two resampling tests over corpora N, NN, T and a metric function f:

* the total pairwise distance
      D_total = |f(N)-f(NN)| + |f(N)-f(T)| + |f(NN)-f(T)|
  is compared against resamples drawn from the pooled corpus (percentile
  p-value, all three samples drawn from the concatenation);

* the distance difference
      D_dif = |f(N)-f(K)| - |f(NN)-f(T)|,   K = the constrained variety
  closest to N on the original corpora, is resampled per-corpus and judged
  by its 95% confidence interval: min-end-point > 0 means p < 0.05.

Samples are drawn at sentence granularity (with replacement), growing until
the token target is reached; overshoot is allowed. All randomness flows
through numpy SeedSequence spawning, so results are reproducible and
independent of evaluation order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import betainc

from .corpus import Corpus

MetricFn = Callable[[Corpus], float]


@dataclass(frozen=True)
class BootstrapConfig:
    sample_tokens: int
    iterations: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.sample_tokens <= 0:
            raise ValueError("sample_tokens must be positive")


@dataclass(frozen=True)
class BootstrapResult:
    statistic: str
    observed: float
    series: tuple[float, ...]  # sorted ascending
    seed: int
    p_value: float | None = None
    p_is_upper_bound: bool = False
    ci: tuple[float, float] | None = None
    significant: bool | None = None
    k_label: str | None = None

    @property
    def iterations(self) -> int:
        return len(self.series)

    def p_text(self) -> str:
        if self.p_value is None:
            return ""
        return ("p < " if self.p_is_upper_bound else "p = ") + f"{self.p_value:g}"


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p_value: float


def d_total(fm: MetricFn, c_n: Corpus, c_nn: Corpus, c_t: Corpus) -> float:
    """Sum of pairwise metric distances between the three varieties."""
    f_n, f_nn, f_t = fm(c_n), fm(c_nn), fm(c_t)
    return abs(f_n - f_nn) + abs(f_n - f_t) + abs(f_nn - f_t)


def choose_k(fm: MetricFn, c_n: Corpus, c_nn: Corpus, c_t: Corpus) -> str:
    """The constrained variety closer to N on the original corpora; ties go
    to T."""
    f_n, f_nn, f_t = fm(c_n), fm(c_nn), fm(c_t)
    return "NN" if abs(f_n - f_nn) < abs(f_n - f_t) else "T"


class _SentencePool:
    """Sentence-granularity sampler over a fixed corpus."""

    def __init__(self, corpus: Corpus):
        self.sentences = corpus.sentences
        self.token_counts = np.array([s.token_count for s in corpus.sentences])
        if len(self.sentences) == 0:
            raise ValueError("cannot resample an empty corpus")
        self.mean_tokens = float(self.token_counts.mean())

    def draw(self, rng: np.random.Generator, target_tokens: int) -> Corpus:
        """Grow a sample with replacement until its token count reaches the
        target (overshoot allowed)."""
        picked: list[np.ndarray] = []
        got = 0
        while got < target_tokens:
            need = target_tokens - got
            batch_size = max(8, int(need / self.mean_tokens * 1.2) + 1)
            batch = rng.integers(0, len(self.sentences), size=batch_size)
            cumulative = got + np.cumsum(self.token_counts[batch])
            cut = int(np.searchsorted(cumulative, target_tokens, side="left"))
            if cut < batch_size:
                picked.append(batch[: cut + 1])
                got = int(cumulative[cut])
            else:
                picked.append(batch)
                got = int(cumulative[-1])
        indices = np.concatenate(picked)
        return Corpus(
            sentences=tuple(self.sentences[i] for i in indices),
            provenance="bootstrap-sample",
        )


def _percentile_p(series: np.ndarray, observed: float) -> tuple[float, bool]:
    """Fraction of resamples >= observed; when none reach it, report the
    value as an upper bound (p < 1/iterations) instead of zero."""
    exceed = int((series >= observed).sum())
    if exceed == 0:
        return 1.0 / len(series), True
    return exceed / len(series), False


def test_d_total(
    fm: MetricFn,
    c_n: Corpus,
    c_nn: Corpus,
    c_t: Corpus,
    config: BootstrapConfig,
) -> BootstrapResult:
    """Percentile bootstrap for D_total: all three per-iteration samples are
    drawn from the pooled corpus, so the resample series estimates the null
    of exchangeable varieties."""
    observed = d_total(fm, c_n, c_nn, c_t)
    pool = _SentencePool(
        Corpus(
            sentences=c_n.sentences + c_nn.sentences + c_t.sentences,
            provenance="pooled",
        )
    )
    seeds = np.random.SeedSequence(config.seed).spawn(config.iterations)
    series = np.empty(config.iterations)
    for j in range(config.iterations):
        rng = np.random.default_rng(seeds[j])
        samples = [pool.draw(rng, config.sample_tokens) for _ in range(3)]
        series[j] = d_total(fm, samples[0], samples[1], samples[2])
    series.sort()
    p_value, upper_bound = _percentile_p(series, observed)
    return BootstrapResult(
        statistic="D_total",
        observed=observed,
        series=tuple(float(v) for v in series),
        seed=config.seed,
        p_value=p_value,
        p_is_upper_bound=upper_bound,
        significant=p_value < 0.05,
    )


def _nearest_rank(sorted_values: np.ndarray, percentile: float) -> float:
    """Nearest-rank percentile of an ascending array."""
    n = len(sorted_values)
    idx = max(0, math.ceil(percentile / 100.0 * n) - 1)
    return float(sorted_values[idx])


def test_d_dif(
    fm: MetricFn,
    c_n: Corpus,
    c_nn: Corpus,
    c_t: Corpus,
    config: BootstrapConfig,
) -> BootstrapResult:
    """Confidence-interval bootstrap for D_dif with per-corpus resampling.

    K is fixed once from the original corpora. The 95% interval spans the
    nearest-rank 2.5th and 97.5th percentiles; a min-end-point above zero
    flags NN-T proximity as significant (p < 0.05).
    """
    k_label = choose_k(fm, c_n, c_nn, c_t)
    c_k = c_nn if k_label == "NN" else c_t
    observed = abs(fm(c_n) - fm(c_k)) - abs(fm(c_nn) - fm(c_t))
    pools = {
        "N": _SentencePool(c_n),
        "NN": _SentencePool(c_nn),
        "T": _SentencePool(c_t),
    }
    seeds = np.random.SeedSequence(config.seed).spawn(config.iterations)
    series = np.empty(config.iterations)
    for j in range(config.iterations):
        rng = np.random.default_rng(seeds[j])
        f_vals = {
            name: fm(pool.draw(rng, config.sample_tokens))
            for name, pool in pools.items()
        }
        series[j] = abs(f_vals["N"] - f_vals[k_label]) - abs(
            f_vals["NN"] - f_vals["T"]
        )
    series.sort()
    lo = _nearest_rank(series, 2.5)
    hi = _nearest_rank(series, 97.5)
    return BootstrapResult(
        statistic="D_dif",
        observed=observed,
        series=tuple(float(v) for v in series),
        seed=config.seed,
        ci=(lo, hi),
        significant=lo > 0.0,
        k_label=k_label,
    )


def paired_ttest(series_a: Sequence[float], series_b: Sequence[float]) -> TTestResult:
    """Two-tailed paired t-test: t = mean(d) / (sd(d)/sqrt(n)), with the
    p-value from the regularized-incomplete-beta form of the t CDF."""
    a = np.asarray(series_a, dtype=float)
    b = np.asarray(series_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired series must be 1-D and of equal length")
    if len(a) < 2:
        raise ValueError("need at least 2 pairs")
    d = a - b
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        raise ValueError("differences have zero variance; t is undefined")
    n = len(d)
    t = float(d.mean() / (sd / math.sqrt(n)))
    df = n - 1
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return TTestResult(t=t, df=df, p_value=p)


def write_result_json(result: BootstrapResult, metric: str, path: str | Path) -> None:
    """Per-test JSON artifact (series omitted; observed, p/CI, flag, seed)."""
    payload: dict = {
        "metric": metric,
        "statistic": result.statistic,
        "observed": result.observed,
        "iterations": result.iterations,
        "seed": result.seed,
        "significant": result.significant,
    }
    if result.p_value is not None:
        payload["p_value"] = result.p_value
        payload["p_is_upper_bound"] = result.p_is_upper_bound
    if result.ci is not None:
        payload["ci"] = [result.ci[0], result.ci[1]]
    if result.k_label is not None:
        payload["k"] = result.k_label
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
