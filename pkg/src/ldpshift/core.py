"""Shared domain types: bins, histograms, datasets, and seeded randomness.

Everything downstream (randomizers, attacks, detection) operates on values
normalized into [0, 1], binned into ``m`` equal-width bins.  Bins are
1-indexed at every public interface; bin ``i`` covers ``[(i-1)/m, i/m)``
with the last bin closed at 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

__all__ = [
    "BinSpec",
    "Histogram",
    "Dataset",
    "PrivacyBudget",
    "RngStream",
    "bin_of",
    "empirical_histogram",
    "cdf",
    "sample_gaussian_dataset",
    "normalize_ingested",
    "read_values",
    "load_dataset",
    "save_dataset",
]

_SUM_TOL = 1e-9


@dataclass(frozen=True)
class BinSpec:
    """Equal-width binning of [0, 1] into ``m`` bins (1-indexed)."""

    m: int

    def __post_init__(self) -> None:
        if self.m < 2:
            raise ValueError(f"need at least 2 bins, got m={self.m}")

    def centers(self) -> np.ndarray:
        return (np.arange(self.m) + 0.5) / self.m


@dataclass(frozen=True)
class Histogram:
    """Frequency vector over a BinSpec.

    ``kind`` distinguishes raw LDP estimates (may be negative, need not sum
    to one) from consistent distributions on the simplex.
    """

    bins: BinSpec
    f: np.ndarray
    kind: str = "consistent"  # "raw" | "consistent"

    def __post_init__(self) -> None:
        f = np.asarray(self.f, dtype=np.float64)
        object.__setattr__(self, "f", f)
        if f.shape != (self.bins.m,):
            raise ValueError(f"frequency vector has shape {f.shape}, expected ({self.bins.m},)")
        if not np.all(np.isfinite(f)):
            raise ValueError("histogram contains non-finite entries")
        if self.kind == "consistent":
            if np.any(f < -_SUM_TOL):
                raise ValueError("consistent histogram has negative frequencies")
            if abs(float(f.sum()) - 1.0) > _SUM_TOL:
                raise ValueError(f"consistent histogram sums to {f.sum()}, expected 1")
        elif self.kind != "raw":
            raise ValueError(f"unknown histogram kind {self.kind!r}")

    @property
    def m(self) -> int:
        return self.bins.m


@dataclass(frozen=True)
class Dataset:
    """Normalized user values, one per user, each in [0, 1]."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("dataset must be a nonempty 1-d vector")
        if not np.all(np.isfinite(v)):
            raise ValueError("dataset contains non-finite values")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("dataset values must lie in [0, 1]")

    @property
    def n(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float

    def __post_init__(self) -> None:
        if not (self.epsilon > 0.0 and np.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be positive and finite, got {self.epsilon}")


class RngStream:
    """Deterministic random stream with hierarchical substreams.

    A stream is identified by a 64-bit master seed plus a tuple key.  Two
    streams built from the same (seed, key) yield bit-identical draw
    sequences, and substreams with distinct keys are statistically
    independent, so trials can run in any order (or in parallel) without
    changing results.
    """

    def __init__(self, seed: int, key: tuple[int, ...] = ()) -> None:
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        self._gen: np.random.Generator | None = None

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
            self._gen = np.random.Generator(np.random.PCG64(ss))
        return self._gen

    def substream(self, *key: int) -> "RngStream":
        return RngStream(self.seed, self.key + tuple(key))

    def __repr__(self) -> str:  # pragma: no cover
        return f"RngStream(seed={self.seed}, key={self.key})"


def bin_of(x, bins: BinSpec):
    """Map values in [0, 1] to 1-indexed bins; 1.0 lands in the last bin.

    Accepts a scalar or an array and returns the same shape.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError("value outside [0, 1]")
    idx = np.floor(arr * bins.m).astype(np.int64) + 1
    idx = np.minimum(idx, bins.m)
    if np.isscalar(x) or arr.ndim == 0:
        return int(idx)
    return idx


def empirical_histogram(data: Dataset, bins: BinSpec) -> Histogram:
    """Exact histogram of the data: counts per bin divided by n."""
    idx = bin_of(data.values, bins)
    counts = np.bincount(idx - 1, minlength=bins.m).astype(np.float64)
    return Histogram(bins, counts / data.n, kind="consistent")


def cdf(h: Histogram) -> np.ndarray:
    """Cumulative sums of the frequency vector, one entry per bin."""
    return np.cumsum(h.f)


def sample_gaussian_dataset(n: int, mu: float, sigma: float, rng: RngStream) -> Dataset:
    """Draw n Gaussian samples and linearly map them onto [0, 1].

    The map uses the sample min/max, so the normalized data always spans
    the full unit interval.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    raw = rng.generator.normal(mu, sigma, size=int(n))
    if n == 1:
        return Dataset(np.zeros(1))
    return Dataset(_minmax(raw))


def normalize_ingested(values: Iterable[float]) -> Dataset:
    """Affine-map raw values onto [0, 1] via their min/max."""
    arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError("need at least two values to normalize")
    if not np.all(np.isfinite(arr)):
        raise ValueError("input contains non-finite values")
    if arr.max() == arr.min():
        raise ValueError("cannot normalize a constant column (max equals min)")
    return Dataset(_minmax(arr))


def _minmax(arr: np.ndarray) -> np.ndarray:
    lo, hi = float(arr.min()), float(arr.max())
    out = (arr - lo) / (hi - lo)
    # guard rounding at the top edge
    return np.clip(out, 0.0, 1.0)


def read_values(path: str | Path) -> np.ndarray:
    """Read one decimal value per line (single-column CSV accepted).

    Blank lines are ignored; values are returned unnormalized.
    """
    vals = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            tok = line.strip().rstrip(",")
            if not tok:
                continue
            try:
                vals.append(float(tok))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not a number: {line.strip()!r}") from None
    if not vals:
        raise ValueError(f"{path}: no values found")
    return np.asarray(vals, dtype=np.float64)


def load_dataset(path: str | Path) -> Dataset:
    """Read an already-normalized dataset (values must lie in [0, 1])."""
    return Dataset(read_values(path))


def save_dataset(path: str | Path, data: Dataset) -> None:
    with open(path, "w") as fh:
        for v in data.values:
            fh.write(f"{v:.17g}\n")
