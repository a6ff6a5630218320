"""Zero-shot poisoning detection plus the MUD threshold baseline.

The zero-shot detector needs no ground truth: it estimates a distribution
from the submitted reports, re-synthesizes users from it, pushes them
through the same randomizer, and compares two groups of report-space
distances with a two-sample KS test.  Honest reports look like their own
resynthesis; crafted reports do not.

Report batches of different protocols are made comparable through a
normalized "support histogram" summary (per-protocol rule in
``report_summary``), with the Wasserstein distance taken between
summaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .core import BinSpec, Histogram, RngStream
from .metrics import roc_auc, wasserstein1
from .oracles import (
    GrrParams,
    GrrReports,
    HstParams,
    HstReports,
    OlhParams,
    OlhReports,
    OueParams,
    OueReports,
    Reports,
    ServerAssignment,
    SwReports,
    aggregate,
    grr_perturb,
    hst_perturb,
    hst_positive_support,
    olh_perturb,
    olh_support_counts,
    oue_perturb,
)
from .postprocess import norm_sub
from .sw import SwParams, build_transition, ems_reconstruct, report_cells, sw_perturb

__all__ = [
    "DetectionVerdict",
    "ReportSummary",
    "report_summary",
    "synthesize",
    "zero_shot_detect",
    "ks_two_sample",
    "reg_inc_beta",
    "mud_threshold",
    "mud_detect",
    "mud_support_count",
]

DETECT_ROUNDS = 10
DETECT_ALPHA = 0.002

AnyParams = Union[GrrParams, OueParams, OlhParams, HstParams, SwParams]


@dataclass(frozen=True)
class DetectionVerdict:
    g_ben: np.ndarray  # benchmark distances, one per round
    g_det: np.ndarray  # distances from the submitted reports, one per round
    ks_stat: float
    p_value: float
    polluted: bool

    def to_dict(self) -> dict:
        return {
            "g_ben": [float(v) for v in self.g_ben],
            "g_det": [float(v) for v in self.g_det],
            "ks_stat": self.ks_stat,
            "p_value": self.p_value,
            "polluted": self.polluted,
        }


@dataclass(frozen=True)
class ReportSummary:
    """Normalized support histogram of a report multiset."""

    grid: BinSpec
    s: np.ndarray

    def as_histogram(self) -> Histogram:
        return Histogram(self.grid, self.s, kind="consistent")


def report_summary(
    reports: Reports,
    params: AnyParams,
    *,
    assignment: ServerAssignment | None = None,
) -> ReportSummary:
    """Reduce a report batch to a distribution over bins/cells.

    GRR: frequency of each reported index.  OUE: per-position 1-bit rate.
    OLH: per-bin support rate (reports whose hash of the bin equals the
    reported value).  HST: per-bin positive-support rate in excess of the
    1/2 background (every report supports half the bins on average, so
    the raw rate is a flat 1/2 plus the signal; renormalizing the raw
    rate would wash the structure out).  SW: histogram of the report
    values over the output cells.  All renormalized to sum 1.
    """
    if isinstance(reports, GrrReports):
        counts = np.bincount(reports.values - 1, minlength=params.m).astype(np.float64)
    elif isinstance(reports, OueReports):
        counts = reports.bits.sum(axis=0, dtype=np.int64).astype(np.float64)
    elif isinstance(reports, OlhReports):
        counts = olh_support_counts(reports, params).astype(np.float64)
    elif isinstance(reports, HstReports):
        rate = hst_positive_support(reports, params).astype(np.float64) / reports.n
        counts = np.maximum(rate - 0.5, 0.0)
    elif isinstance(reports, SwReports):
        counts = np.bincount(report_cells(reports, params), minlength=params.n_cells).astype(np.float64)
    else:
        raise TypeError(f"unknown report type {type(reports)}")
    total = counts.sum()
    if total <= 0:
        # degenerate but legal (e.g. all-zero OUE vectors); fall back to uniform
        return ReportSummary(BinSpec(counts.size), np.full(counts.size, 1.0 / counts.size))
    return ReportSummary(BinSpec(counts.size), counts / total)


def estimate_distribution(
    reports: Reports,
    params: AnyParams,
    *,
    transition: np.ndarray | None = None,
) -> Histogram:
    """Consistent distribution estimate from reports: aggregation plus
    Norm-Sub for CFOs, EMS for SW."""
    if isinstance(reports, SwReports):
        return ems_reconstruct(reports, params, transition=transition)
    return norm_sub(aggregate(reports, params))


def synthesize(
    reports: Reports,
    params: AnyParams,
    t: int,
    rng: RngStream,
    *,
    transition: np.ndarray | None = None,
) -> np.ndarray:
    """Estimate the distribution behind the reports and draw t users from
    it: bin indices for CFOs, grid-center values for SW."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    est = estimate_distribution(reports, params, transition=transition)
    if t == 0:
        return np.empty(0, dtype=np.float64 if isinstance(params, SwParams) else np.int64)
    gen = rng.generator
    drawn = gen.choice(est.m, size=t, p=est.f)
    if isinstance(params, SwParams):
        return (drawn + 0.5) / est.m
    return drawn.astype(np.int64) + 1


def _perturb_synthetic(samples: np.ndarray, params: AnyParams, rng: RngStream) -> Reports:
    """Honest randomizer pass over synthesized users (fresh seeds/vectors)."""
    if isinstance(params, GrrParams):
        return grr_perturb(samples, params, rng)
    if isinstance(params, OueParams):
        return oue_perturb(samples, params, rng)
    if isinstance(params, OlhParams):
        return olh_perturb(samples, params, rng)
    if isinstance(params, HstParams):
        return hst_perturb(samples, params, rng)
    if isinstance(params, SwParams):
        return sw_perturb(samples, params, rng)
    raise TypeError(f"unknown params {type(params)}")


def zero_shot_detect(
    reports: Reports,
    params: AnyParams,
    rng: RngStream,
    *,
    rounds: int = DETECT_ROUNDS,
    alpha: float = DETECT_ALPHA,
    assignment: ServerAssignment | None = None,
    transition: np.ndarray | None = None,
) -> DetectionVerdict:
    """Benchmark-free pollution test on a report batch.

    Builds one synthetic population X from the reports' own estimate, then
    for each round perturbs X into X2, re-synthesizes X2's estimate into a
    population and perturbs it into X3.  The benchmark distances
    W1(X2, X3) carry pure protocol randomness; the detection distances
    W1(reports, X2) additionally carry whatever the reports did not
    inherit from a valid input distribution.  A two-sample KS test between
    the groups yields the p-value; pollution is declared below alpha.
    """
    if rounds < 2:
        raise ValueError("need at least 2 rounds for a two-sample test")
    n = reports.n
    base_summary = report_summary(reports, params, assignment=assignment).as_histogram()
    x = synthesize(reports, params, n, rng.substream(0), transition=transition)
    g_ben = np.empty(rounds)
    g_det = np.empty(rounds)
    for i in range(rounds):
        sub = rng.substream(i + 1)
        x2 = _perturb_synthetic(x, params, sub.substream(0))
        s2 = report_summary(x2, params).as_histogram()
        x2_samples = synthesize(x2, params, n, sub.substream(1), transition=transition)
        x3 = _perturb_synthetic(x2_samples, params, sub.substream(2))
        s3 = report_summary(x3, params).as_histogram()
        g_ben[i] = wasserstein1(s2, s3)
        g_det[i] = wasserstein1(base_summary, s2)
    stat, p = ks_two_sample(g_det, g_ben)
    return DetectionVerdict(g_ben=g_ben, g_det=g_det, ks_stat=stat, p_value=p, polluted=p < alpha)


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov test.

    S is the sup-norm gap between the empirical CDFs; the p-value is the
    asymptotic 2 exp(-2 S^2 mn/(m+n)), clamped into [0, 1].
    """
    xs = np.sort(np.asarray(a, dtype=np.float64))
    ys = np.sort(np.asarray(b, dtype=np.float64))
    m, n = xs.size, ys.size
    if m == 0 or n == 0:
        raise ValueError("both samples must be nonempty")
    grid = np.concatenate([xs, ys])
    f_a = np.searchsorted(xs, grid, side="right") / m
    f_b = np.searchsorted(ys, grid, side="right") / n
    stat = float(np.abs(f_a - f_b).max())
    effective = (m * n) / (m + n)  # integer products keep this symmetric in (m, n)
    p = 2.0 * math.exp(-2.0 * stat * stat * effective)
    return stat, min(1.0, p)


# ---------------------------------------------------------------------------
# regularized incomplete beta (continued fraction)

_BETA_EPS = 1e-15
_BETA_MAX_ITERS = 500


def reg_inc_beta(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta function I(x; a, b).

    Continued-fraction evaluation (modified Lentz) with the usual symmetry
    switch at x > (a+1)/(a+b+2) for fast convergence everywhere.
    """
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"x must be in [0, 1], got {x}")
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    if x > (a + 1.0) / (a + b + 2.0):
        return 1.0 - reg_inc_beta(1.0 - x, b, a)
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    return math.exp(ln_front) * _beta_cf(x, a, b) / a


def _beta_cf(x: float, a: float, b: float) -> float:
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAX_ITERS + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_EPS:
            return h
    raise ArithmeticError(f"incomplete beta did not converge for x={x}, a={a}, b={b}")


# ---------------------------------------------------------------------------
# MUD baseline detector


def mud_threshold(
    protocol: str,
    epsilon: float,
    n: int,
    *,
    g: int | None = None,
    bound: float = 0.01,
) -> float:
    """Alarm threshold on the top-bin support count.

    The null model is a population whose members all hold the top bin:
    the support count is then Bin(n, x) with x the probability an honest
    report of the top bin supports it, and tau is the smallest count whose
    upper tail I(x; tau, n-tau+1) falls below the bound.

    OUE uses the closed form sqrt((n/4)/bound) + n/2.  OLH uses
    x = e^eps/(e^eps+g-1), which reduces to the nominal 1/2 at
    g = e^eps + 1 and coincides with HST's x = e^eps/(e^eps+1) at g = 2.
    GRR is rejected: a fake GRR value is a single index either way, so the
    count carries no signal.
    """
    if n < 1:
        raise ValueError("n must be positive")
    e = math.exp(epsilon)
    if protocol == "oue":
        return math.sqrt((n / 4.0) / bound) + n / 2.0
    if protocol == "olh":
        g_eff = g if g else max(2, int(math.floor(e + 1.0)))
        x = e / (e + g_eff - 1)
    elif protocol == "hst":
        x = e / (e + 1.0)
    elif protocol == "grr":
        raise ValueError("MUD does not work for GRR")
    else:
        raise ValueError(f"unknown protocol {protocol!r}")
    return float(_smallest_tail_tau(x, n, bound))


def _smallest_tail_tau(x: float, n: int, bound: float) -> int:
    """Smallest tau with P[Bin(n, x) >= tau] = I(x; tau, n-tau+1) <= bound."""
    lo, hi = 1, n + 1  # tail at tau = n+1 is 0 <= bound
    while lo < hi:
        mid = (lo + hi) // 2
        tail = reg_inc_beta(x, mid, n - mid + 1) if mid <= n else 0.0
        if tail <= bound:
            hi = mid
        else:
            lo = mid + 1
    return lo


def mud_support_count(reports: Reports, params: AnyParams) -> int:
    """Reports supporting the top bin: OUE bit m set; OLH hash of m equals
    the value; HST sign * vector[m] positive."""
    if isinstance(reports, OueReports):
        return int(reports.bits[:, params.m - 1].sum(dtype=np.int64))
    if isinstance(reports, OlhReports):
        return int(olh_support_counts(reports, params)[params.m - 1])
    if isinstance(reports, HstReports):
        return int(hst_positive_support(reports, params)[params.m - 1])
    raise TypeError(f"MUD does not apply to {type(reports).__name__}")


def mud_detect(
    reports: Reports,
    params: AnyParams,
    *,
    g: int | None = None,
    bound: float = 0.01,
) -> bool:
    """Alarm when the top-bin support count exceeds the MUD threshold."""
    if isinstance(reports, GrrReports):
        raise ValueError("MUD does not work for GRR")
    if isinstance(reports, OueReports):
        protocol = "oue"
    elif isinstance(reports, OlhReports):
        protocol = "olh"
        g = params.g
    elif isinstance(reports, HstReports):
        protocol = "hst"
    else:
        raise TypeError(f"MUD does not apply to {type(reports).__name__}")
    tau = mud_threshold(protocol, params.epsilon, reports.n, g=g, bound=bound)
    return mud_support_count(reports, params) > tau
