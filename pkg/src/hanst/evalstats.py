"""Metrics, the citation-score transform, significance tests, run
aggregation, and corpus-level citation statistics."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from itertools import permutations

import numpy as np
from scipy.special import betainc

from .corpus import RawDocument
from .errors import (
    AlignmentError,
    ConfigurationError,
    DegenerateInputError,
    UndefinedMetricError,
    UndefinedTestError,
)


# ---------------------------------------------------------------------------
# prediction records
# ---------------------------------------------------------------------------

@dataclass
class PredictionRecord:
    """One model output for one example in one run."""

    id: str
    gold: float
    pred: float
    prob: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.prob is not None and not 0.0 <= self.prob <= 1.0:
            raise ConfigurationError(f"probability must be in [0, 1], got {self.prob}")

    def to_json(self) -> dict:
        return {"id": self.id, "gold": self.gold, "pred": self.pred,
                "prob": self.prob, "seed": self.seed}

    @classmethod
    def from_json(cls, obj: dict) -> "PredictionRecord":
        return cls(id=obj["id"], gold=obj["gold"], pred=obj["pred"],
                   prob=obj.get("prob"), seed=obj.get("seed"))


def save_predictions(records: list[PredictionRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")


def load_predictions(path) -> list[PredictionRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(PredictionRecord.from_json(json.loads(line)))
    return records


# ---------------------------------------------------------------------------
# citation-score transform
# ---------------------------------------------------------------------------

def citation_score(n: int) -> float:
    """Natural log of (citations + 1)."""
    if n < 0:
        raise DegenerateInputError(f"citation count must be non-negative, got {n}")
    return math.log1p(n)


def inverse_citation_score(score: float) -> int:
    """Round-trips citation_score exactly on integers up to 10**6."""
    return max(0, round(math.expm1(score)))


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _aligned(golds, preds) -> tuple[np.ndarray, np.ndarray]:
    g = np.asarray(golds, dtype=np.float64)
    p = np.asarray(preds, dtype=np.float64)
    if g.shape != p.shape:
        raise AlignmentError(f"golds {g.shape} vs preds {p.shape}")
    if g.size == 0:
        raise UndefinedMetricError("empty inputs")
    return g, p


def mse(golds, preds) -> float:
    g, p = _aligned(golds, preds)
    return float(np.mean((g - p) ** 2))


def mae(golds, preds) -> float:
    g, p = _aligned(golds, preds)
    return float(np.mean(np.abs(g - p)))


def accuracy(golds, preds) -> float:
    g, p = _aligned(golds, preds)
    return float(np.mean(g == p))


def r2_score(golds, preds) -> float:
    """1 minus MSE over the population variance of the golds.

    Exactly 0 for the constant gold-mean predictor, exactly 1 for perfect
    predictions; negative when worse than predicting the mean.
    """
    g, p = _aligned(golds, preds)
    if g.size < 2:
        raise UndefinedMetricError("r2 needs at least 2 examples")
    variance = float(np.mean((g - np.mean(g)) ** 2))
    if variance == 0.0:
        raise UndefinedMetricError("r2 undefined for zero-variance golds")
    return 1.0 - float(np.mean((g - p) ** 2)) / variance


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank range."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i: j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def auc_roc(golds, probs) -> float:
    """Probability a random positive outranks a random negative; ties get
    half credit. Computed from average ranks (Mann-Whitney form)."""
    g, p = _aligned(golds, probs)
    pos = g == 1
    n_pos = int(pos.sum())
    n_neg = len(g) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("auc needs both classes in the golds")
    ranks = _average_ranks(p)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


# ---------------------------------------------------------------------------
# correlation
# ---------------------------------------------------------------------------

def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float((xc * xc).sum()) * float((yc * yc).sum()))
    return float((xc * yc).sum()) / denom


def spearman_rho(x, y) -> tuple[float, float]:
    """Rank correlation with a two-sided p-value.

    p is exact (full permutation enumeration) for n <= 8 and a Student-t
    approximation above.
    """
    x, y = _aligned(x, y)
    n = len(x)
    if n < 3:
        raise UndefinedMetricError("spearman needs at least 3 pairs")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise UndefinedMetricError("spearman undefined for a constant vector")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rho = _pearson(rx, ry)
    if n <= 8:
        threshold = abs(rho) - 1e-12
        hits = 0
        total = 0
        for perm in permutations(ry):
            total += 1
            if abs(_pearson(rx, np.array(perm))) >= threshold:
                hits += 1
        p = hits / total
    else:
        if abs(rho) >= 1.0:
            p = 0.0
        else:
            t2 = rho * rho * (n - 2) / (1.0 - rho * rho)
            df = n - 2
            p = float(betainc(df / 2.0, 0.5, df / (df + t2)))
    return rho, p


# ---------------------------------------------------------------------------
# significance tests
# ---------------------------------------------------------------------------

@dataclass
class SignificanceResult:
    test_kind: str
    statistic: float
    p_value: float
    system_a: str
    system_b: str
    n: int

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ConfigurationError(f"p-value out of range: {self.p_value}")

    def to_json(self) -> dict:
        return {"test_kind": self.test_kind, "statistic": self.statistic,
                "p_value": self.p_value, "system_a": self.system_a,
                "system_b": self.system_b, "n": self.n}


def mcnemar_exact(golds, preds_a, preds_b, system_a: str = "A",
                  system_b: str = "B") -> SignificanceResult:
    """Two-sided exact binomial test on discordant prediction pairs."""
    g = np.asarray(golds)
    a = np.asarray(preds_a)
    b = np.asarray(preds_b)
    if not (g.shape == a.shape == b.shape):
        raise AlignmentError(f"golds {g.shape}, A {a.shape}, B {b.shape}")
    a_right = a == g
    b_right = b == g
    n_ab = int(np.sum(a_right & ~b_right))
    n_ba = int(np.sum(~a_right & b_right))
    m = n_ab + n_ba
    k = min(n_ab, n_ba)
    if m == 0:
        p = 1.0
    else:
        # exact integer tail: 2 * P(Bin(m, 1/2) <= k)
        tail = sum(math.comb(m, i) for i in range(k + 1))
        p = min(1.0, 2.0 * tail / 2 ** m)
    return SignificanceResult(test_kind="mcnemar-exact", statistic=float(k),
                              p_value=p, system_a=system_a, system_b=system_b,
                              n=len(g))


def _signed_rank_tail(ranks: np.ndarray, w: float) -> float:
    """P(W+ <= w) under the null (each rank positive with probability 1/2).

    Exact dynamic program over doubled ranks (doubling keeps .5 average
    ranks integral).
    """
    doubled = np.rint(ranks * 2).astype(int)
    total = int(doubled.sum())
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    for r in doubled:
        shifted = np.zeros(total + 1, dtype=object)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    limit = int(math.floor(w * 2 + 1e-9))
    favorable = int(sum(counts[: limit + 1]))
    return favorable / 2 ** len(ranks)


def wilcoxon_signed_rank(errors_a, errors_b, system_a: str = "A",
                         system_b: str = "B") -> SignificanceResult:
    """Two-sided paired test on per-example error differences.

    Zero differences are dropped; tied magnitudes share average ranks. The
    p-value is exact (rank-sum enumeration) for n <= 25 and a tie-corrected
    normal approximation above.
    """
    a, b = _aligned(errors_a, errors_b)
    diffs = a - b
    diffs = diffs[diffs != 0.0]
    n = len(diffs)
    if n == 0:
        raise UndefinedTestError("all differences are zero")
    if n < 6:
        raise UndefinedTestError(f"need at least 6 non-zero differences, got {n}")
    ranks = _average_ranks(np.abs(diffs))
    w_pos = float(ranks[diffs > 0].sum())
    w_neg = float(ranks[diffs < 0].sum())
    statistic = min(w_pos, w_neg)
    if n <= 25:
        p = min(1.0, 2.0 * _signed_rank_tail(ranks, statistic))
    else:
        _, tie_sizes = np.unique(np.abs(diffs), return_counts=True)
        mean_w = n * (n + 1) / 4.0
        var_w = n * (n + 1) * (2 * n + 1) / 24.0 - float(((tie_sizes ** 3 - tie_sizes)).sum()) / 48.0
        z = (statistic - mean_w) / math.sqrt(var_w)
        p = min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))
    return SignificanceResult(test_kind="wilcoxon-signed-rank", statistic=statistic,
                              p_value=p, system_a=system_a, system_b=system_b, n=n)


# ---------------------------------------------------------------------------
# run aggregation
# ---------------------------------------------------------------------------

def vote_aggregate(runs: list[list[PredictionRecord]], task: str) -> list[PredictionRecord]:
    """Combine per-run predictions example-wise: modal class for
    classification, mean score for regression."""
    if task not in ("classify", "regress"):
        raise ConfigurationError(f"task must be classify or regress, got {task!r}")
    if not runs:
        raise ConfigurationError("no runs to aggregate")
    if task == "classify" and len(runs) % 2 == 0:
        raise ConfigurationError(f"classification voting needs an odd run count, got {len(runs)}")
    base = {rec.id: rec for rec in runs[0]}
    order = [rec.id for rec in runs[0]]
    per_id: dict[str, list[PredictionRecord]] = {rid: [] for rid in order}
    for run in runs:
        ids = {rec.id for rec in run}
        if ids != set(order):
            missing = sorted(set(order) ^ ids)
            raise AlignmentError(f"runs cover different example sets; mismatched ids: {missing[:5]}")
        for rec in run:
            if rec.gold != base[rec.id].gold:
                raise AlignmentError(f"conflicting gold labels for example {rec.id!r}")
            per_id[rec.id].append(rec)
    combined = []
    for rid in order:
        recs = per_id[rid]
        if task == "classify":
            votes = Counter(int(r.pred) for r in recs)
            pred = float(max(votes, key=lambda c: (votes[c], c)))
        else:
            pred = float(np.mean([r.pred for r in recs]))
        combined.append(PredictionRecord(id=rid, gold=base[rid].gold, pred=pred,
                                         prob=None, seed=None))
    return combined


def mean_std(values: list[float]) -> tuple[float, float]:
    """Mean and sample standard deviation (n-1 denominator; 0 when n = 1)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise UndefinedMetricError("no values to aggregate")
    if np.all(arr == arr[0]):
        return float(arr[0]), 0.0
    return float(np.mean(arr)), float(np.std(arr, ddof=1))


def build_report(task: str, per_run_metrics: dict[str, list[float]],
                 significance: list[SignificanceResult] | None = None) -> dict:
    """Report schema: task, per-metric mean/std/per-run, significance list."""
    metrics = {}
    for name in sorted(per_run_metrics):
        values = [float(v) for v in per_run_metrics[name]]
        mean, std = mean_std(values)
        metrics[name] = {"mean": mean, "std": std, "per_run": values}
    return {
        "task": task,
        "metrics": metrics,
        "significance": [s.to_json() for s in (significance or [])],
    }


# ---------------------------------------------------------------------------
# corpus citation statistics
# ---------------------------------------------------------------------------

@dataclass
class CitationStats:
    group_means: dict[str, float]
    group_stds: dict[str, float]
    group_sizes: dict[str, int]
    rho: float
    p_value: float
    histogram: list[tuple[int, int, int, str]]   # (bin_start, bin_end, count, group)


def corpus_citation_stats(docs: list[RawDocument], truncate_at: int = 100,
                          bin_width: int = 5) -> CitationStats:
    """Group citation means/stds, right-truncated histograms, and the rank
    correlation between acceptance and citation count.

    Every document must carry both the acceptance flag and a citation count.
    """
    for doc in docs:
        if "accepted" not in doc.label or "citation_count" not in doc.label:
            raise DegenerateInputError(f"document {doc.id!r} lacks either label kind")
    groups = {"accepted": [d.citation_count for d in docs if d.accepted],
              "rejected": [d.citation_count for d in docs if not d.accepted]}
    for name, counts in groups.items():
        if not counts:
            raise DegenerateInputError(f"no documents in group {name!r}")
    means = {g: float(np.mean(v)) for g, v in groups.items()}
    stds = {g: float(np.std(v)) for g, v in groups.items()}
    sizes = {g: len(v) for g, v in groups.items()}
    flags = [1.0 if d.accepted else 0.0 for d in docs]
    cites = [float(d.citation_count) for d in docs]
    rho, p = spearman_rho(flags, cites)
    histogram = []
    for group, counts in groups.items():
        for start in range(0, truncate_at, bin_width):
            end = min(start + bin_width, truncate_at)
            hits = sum(1 for c in counts if start <= c < end)
            histogram.append((start, end, hits, group))
    return CitationStats(group_means=means, group_stds=stds, group_sizes=sizes,
                         rho=rho, p_value=p, histogram=histogram)


def histogram_csv_lines(stats: CitationStats) -> list[str]:
    lines = ["bin_start,bin_end,count,group"]
    for start, end, count, group in stats.histogram:
        lines.append(f"{start},{end},{count},{group}")
    return lines
