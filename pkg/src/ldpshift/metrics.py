"""Attack-effectiveness and detection metrics.

Two distribution-shift metrics share one convention trap worth spelling
out once: ``asg`` is the plain sum of per-bin CDF differences (no bin
width), while ``wasserstein1`` multiplies by the 1/m bin width so it is a
distance on the unit interval.  ASG of a full shift to the top bin is
therefore O(m), while the matching W1 is below 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import Histogram, cdf

__all__ = ["MetricResult", "asg", "sgr", "baseline_skew", "wasserstein1", "roc_auc"]


@dataclass(frozen=True)
class MetricResult:
    asg: float
    sgr: Optional[float]  # None when the baseline gain is degenerate
    w1: float


def _check_same_grid(a: Histogram, b: Histogram) -> None:
    if a.m != b.m:
        raise ValueError(f"histogram grids differ: {a.m} vs {b.m} bins")


def asg(x: Histogram, xa: Histogram) -> float:
    """Signed sum over bins of (cumulative truth - cumulative estimate).

    Positive when the estimate is shifted toward the top of the domain,
    negative when shifted toward the bottom.
    """
    _check_same_grid(x, xa)
    return float(np.sum(cdf(x) - cdf(xa)))


def baseline_skew(x: Histogram, beta: float) -> Histogram:
    """Input-domain distribution after a fraction beta report the maximum:
    (1-beta) X + beta e_m."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    if x.kind != "consistent":
        raise ValueError("baseline skew is defined on consistent histograms")
    f = (1.0 - beta) * x.f.copy()
    f[-1] += beta
    return Histogram(x.bins, f, kind="consistent")


def sgr(x: Histogram, xa_hat: Histogram, beta: float) -> Optional[float]:
    """Shift gain of the attack divided by the analytic gain of the
    baseline input skew.  1 means baseline-equivalent; 1/beta is the
    ceiling.  Returns None when the denominator is degenerate (beta = 0 or
    the truth already sits entirely in the top bin)."""
    if beta == 0.0:
        return None
    denom = asg(x, baseline_skew(x, beta))
    if denom == 0.0:
        return None
    return asg(x, xa_hat) / denom


def wasserstein1(a: Histogram, b: Histogram) -> float:
    """Discrete L1 Wasserstein distance on [0, 1]: mean absolute CDF gap
    times the 1/m bin width."""
    _check_same_grid(a, b)
    if np.any(a.f < 0) or np.any(b.f < 0):
        raise ValueError("wasserstein1 needs nonnegative histograms")
    if abs(float(a.f.sum()) - float(b.f.sum())) > 1e-6:
        raise ValueError("wasserstein1 needs equal total mass")
    return float(np.abs(cdf(a) - cdf(b)).sum()) / a.m


def roc_auc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Probability that a random positive outscores a random negative,
    ties counted half.  ``labels`` mark the positive class (clean runs
    when scoring detection p-values)."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be matching 1-d vectors")
    n_pos = int(y.sum())
    n_neg = int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("need both classes to compute AUC")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(s.size, dtype=np.float64)
    ranks[order] = np.arange(1, s.size + 1)
    # average ranks over ties
    sorted_s = s[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        if j > i:
            ranks[order[i : j + 1]] = 0.5 * (i + 1 + j + 1)
        i = j + 1
    rank_sum = float(ranks[y].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
