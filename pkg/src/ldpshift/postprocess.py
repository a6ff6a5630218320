"""Norm-Sub consistency projection.

Raw LDP estimates can be negative and need not sum to one.  Norm-Sub
shifts every frequency by a common alpha and clips at zero, with alpha
chosen so the clipped vector sums to exactly one:

    sum_i max(h_i + alpha, 0) = 1.
"""

from __future__ import annotations

import numpy as np

from .core import Histogram

__all__ = ["norm_sub"]

_BISECT_TOL = 1e-12
_MAX_ITERS = 200


def norm_sub(h: Histogram) -> Histogram:
    """Project a raw histogram onto the probability simplex.

    alpha is found by bisection on S(alpha) = sum_i max(h_i + alpha, 0),
    which is continuous, nondecreasing and piecewise linear, so the root
    bracket [-max(h)-1, 1-min(h)] always contains a solution.
    """
    f = np.asarray(h.f, dtype=np.float64)
    if not np.all(np.isfinite(f)):
        raise ValueError("norm_sub needs finite frequencies")
    lo = -float(f.max()) - 1.0
    hi = 1.0 - float(f.min())
    for _ in range(_MAX_ITERS):
        mid = 0.5 * (lo + hi)
        s = float(np.maximum(f + mid, 0.0).sum())
        if abs(s - 1.0) <= _BISECT_TOL:
            break
        if s < 1.0:
            lo = mid
        else:
            hi = mid
    else:
        mid = 0.5 * (lo + hi)
    out = np.maximum(f + mid, 0.0)
    total = out.sum()
    if total <= 0.0:  # cannot happen for the bracket above; keep a hard guard
        raise ArithmeticError("norm_sub failed to find a positive solution")
    return Histogram(h.bins, out / total, kind="consistent")
