"""Closed-form expected attack gain for local-hashing oracles, before any
consistency post-processing.

The analysis works on a support-indicator model of local hashing: a report
supports the reporter's own bin with probability p = e^eps/(e^eps+g-1) and
any other bin with probability q = 1/(e^eps+g-1); frequencies are read off
as (count - n q) / (n (p - q)).  An idealized attacker's report supports
only the top bin (user setting) or the top bin plus background support on
the rest (server setting).  ``simulate_expected_asg`` draws from exactly
this model, so the Monte Carlo is the sanity check that the closed forms
are what they claim to be, not a re-derivation.

Sign convention: ``expected_asg`` is positive for a rightward shift, like
``metrics.asg``.  The hash-range monotonicity statement (attack gain grows
with g) holds for the *cumulative-change sum* ``expected_shift_sum``,
which is the negated ASG; see ``expected_shift_sum``'s docstring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Histogram, RngStream

__all__ = [
    "TheoryInput",
    "expected_freq_change",
    "expected_asg",
    "expected_shift_sum",
    "simulate_expected_asg",
]


@dataclass(frozen=True)
class TheoryInput:
    """Problem instance: true distribution, attack fraction, budget, hash
    range, and who picks the hash."""

    x: Histogram
    beta: float
    epsilon: float
    g: int
    setting: str  # "user" | "server"

    def __post_init__(self) -> None:
        if self.g < 2:
            raise ValueError("hash range must be at least 2")
        if self.setting not in ("user", "server"):
            raise ValueError(f"unknown setting {self.setting!r}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must be in [0, 1]")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def p(self) -> float:
        e = math.exp(self.epsilon)
        return e / (e + self.g - 1)

    @property
    def q(self) -> float:
        return 1.0 / (math.exp(self.epsilon) + self.g - 1)


def expected_freq_change(i: int, inp: TheoryInput, *, paper_form: bool = False) -> float:
    """Expected estimator change E(f_hat_i - f_i) for 1-indexed bin i.

    User setting, off-target bins: -beta f_i - beta q/(p-q); the
    ``paper_form`` flag swaps the second term for -beta/(g-2), which agrees
    only when g = e^eps + 1 and blows up at g = 2.
    Server setting, off-target bins: -beta f_i (assigned hashes make the
    fake's off-target support match the honest background exactly).
    Top bin, both settings: beta/(p-q) - beta f_m - beta/((p-q) g).
    """
    m = inp.x.m
    if not 1 <= i <= m:
        raise ValueError(f"bin index {i} outside [1..{m}]")
    f_i = float(inp.x.f[i - 1])
    beta, p, q, g = inp.beta, inp.p, inp.q, inp.g
    if i == m:
        return beta / (p - q) - beta * f_i - beta / ((p - q) * g)
    if inp.setting == "server":
        return -beta * f_i
    if paper_form:
        if g == 2:
            raise ValueError("the g-2 form is singular at g = 2")
        return -beta * f_i - beta / (g - 2)
    return -beta * f_i - beta * q / (p - q)


def expected_shift_sum(inp: TheoryInput, *, paper_form: bool = False) -> float:
    """Sum over v of the cumulative expected frequency change,
    sum_v sum_{i<=v} E(df_i).

    This is the quantity whose derivative in g is positive: a larger hash
    range lets the idealized attacker concentrate support higher, so the
    cumulative change grows with g in both settings.  It equals
    -expected_asg (the estimate's cumulative mass drops below the truth's
    under a rightward shift, making this sum negative)."""
    m = inp.x.m
    deltas = np.array([expected_freq_change(i, inp, paper_form=paper_form) for i in range(1, m + 1)])
    return float(np.cumsum(deltas).sum())


def expected_asg(inp: TheoryInput, *, paper_form: bool = False) -> float:
    """Expected ASG of the idealized attack before post-processing,
    positive for a rightward shift."""
    return -expected_shift_sum(inp, paper_form=paper_form)


def simulate_expected_asg(
    inp: TheoryInput,
    n: int,
    trials: int,
    rng: RngStream,
) -> tuple[float, float]:
    """Monte Carlo of the support-indicator model; returns (mean ASG,
    standard error of the mean) over seeded trials.

    Per trial, support counts are binomial draws: honest users with true
    bin i support it w.p. p and every other bin w.p. q; fake users always
    support the top bin, plus (server setting only) background support
    w.p. q elsewhere.  Frequencies use the (count - n q)/(n (p - q))
    normalization of the model.
    """
    m = inp.x.m
    beta, p, q = inp.beta, inp.p, inp.q
    n_f = int(np.floor(beta * n + 0.5))
    n_g = n - n_f
    gen = rng.generator
    truth_cdf = np.cumsum(inp.x.f)
    asgs = np.empty(trials)
    for t in range(trials):
        per_bin = gen.multinomial(n_g, inp.x.f)
        own = gen.binomial(per_bin, p)
        other = gen.binomial(n_g - per_bin, q)
        counts = (own + other).astype(np.float64)
        counts[m - 1] += n_f
        if inp.setting == "server" and n_f > 0:
            extra = gen.binomial(n_f, q, size=m - 1)
            counts[: m - 1] += extra
        f_hat = (counts - n * q) / (n * (p - q))
        asgs[t] = float((truth_cdf - np.cumsum(f_hat)).sum())
    mean = float(asgs.mean())
    stderr = float(asgs.std(ddof=1) / np.sqrt(trials)) if trials > 1 else float("nan")
    return mean, stderr
