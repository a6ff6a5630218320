"""Categorical frequency oracles: GRR, OUE, OLH, and HST.

Each oracle provides a per-user randomizer and an unbiased aggregation
back to bin frequencies.  OLH and HST exist in two settings that differ in
who picks the per-user hash seed / public vector:

* ``user``   - each user draws their own (reports are self-contained),
* ``server`` - the server assigns them up front (a ``ServerAssignment``),
  which also constrains what an attacker controlling a user may send.

Report batches are stored columnar (numpy arrays) for speed; a JSON-lines
serialization is provided for golden transcripts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import IO, Optional, Union

import numpy as np

from .core import BinSpec, Dataset, Histogram, RngStream, bin_of
from .hashing import hash_map, hash_u64, hst_seed_stats, hst_vector, support_counts

__all__ = [
    "GrrParams",
    "OueParams",
    "OlhParams",
    "HstParams",
    "ServerAssignment",
    "GrrReports",
    "OueReports",
    "OlhReports",
    "HstReports",
    "SwReports",
    "Reports",
    "hash_map",
    "hst_vector",
    "default_g",
    "grr_perturb",
    "grr_aggregate",
    "oue_perturb",
    "oue_aggregate",
    "olh_perturb",
    "olh_aggregate",
    "hst_perturb",
    "hst_aggregate",
    "collect",
    "merge_reports",
    "ldp_max_ratio",
    "write_reports_jsonl",
    "read_reports_jsonl",
]


def default_g(epsilon: float) -> int:
    """Hash range floor(e^eps + 1); stays 2 down to eps = 0."""
    return max(2, int(math.floor(math.exp(epsilon) + 1.0)))


@dataclass(frozen=True)
class GrrParams:
    """Generalized randomized response over m bins."""

    m: int
    epsilon: float

    def __post_init__(self) -> None:
        if self.m < 2:
            raise ValueError("GRR needs at least 2 bins")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def p(self) -> float:
        e = math.exp(self.epsilon)
        return e / (e + self.m - 1)

    @property
    def q(self) -> float:
        return 1.0 / (math.exp(self.epsilon) + self.m - 1)


@dataclass(frozen=True)
class OueParams:
    """Optimal unary encoding: keep the hot bit with prob 1/2, set cold
    bits with prob 1/(e^eps + 1)."""

    m: int
    epsilon: float

    def __post_init__(self) -> None:
        if self.m < 2:
            raise ValueError("OUE needs at least 2 bins")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def p(self) -> float:
        return 0.5

    @property
    def q(self) -> float:
        return 1.0 / (math.exp(self.epsilon) + 1.0)


@dataclass(frozen=True)
class OlhParams:
    """Local hashing into [1..g] followed by randomized response."""

    m: int
    epsilon: float
    g: int = 0  # 0 means "use default_g(epsilon)"

    def __post_init__(self) -> None:
        if self.m < 2:
            raise ValueError("OLH needs at least 2 bins")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.g == 0:
            object.__setattr__(self, "g", default_g(self.epsilon))
        if self.g < 2:
            raise ValueError(f"hash range must be at least 2, got g={self.g}")

    @property
    def p(self) -> float:
        e = math.exp(self.epsilon)
        return e / (e + self.g - 1)

    @property
    def q(self) -> float:
        return 1.0 / (math.exp(self.epsilon) + self.g - 1)


@dataclass(frozen=True)
class HstParams:
    """Random +-1 projection with a scaled, sign-flipped report."""

    m: int
    epsilon: float

    def __post_init__(self) -> None:
        if self.m < 2:
            raise ValueError("HST needs at least 2 bins")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def c(self) -> float:
        e = math.exp(self.epsilon)
        return (e + 1.0) / (e - 1.0)

    @property
    def p_keep(self) -> float:
        e = math.exp(self.epsilon)
        return e / (e + 1.0)


@dataclass(frozen=True)
class ServerAssignment:
    """Per-user 64-bit seeds drawn by the server before collection."""

    seeds: np.ndarray

    def __post_init__(self) -> None:
        s = np.ascontiguousarray(self.seeds, dtype=np.uint64)
        object.__setattr__(self, "seeds", s)
        if s.ndim != 1:
            raise ValueError("assignment seeds must be a 1-d vector")

    @property
    def n(self) -> int:
        return int(self.seeds.size)

    @staticmethod
    def draw(n: int, rng: RngStream) -> "ServerAssignment":
        seeds = rng.generator.integers(0, 2**63, size=n, dtype=np.uint64)
        return ServerAssignment(seeds)


# ---------------------------------------------------------------------------
# report batches


@dataclass
class GrrReports:
    values: np.ndarray  # int64 in [1, m]

    @property
    def n(self) -> int:
        return int(self.values.size)


@dataclass
class OueReports:
    bits: np.ndarray  # uint8, shape (n, m)

    @property
    def n(self) -> int:
        return int(self.bits.shape[0])


@dataclass
class OlhReports:
    seeds: np.ndarray  # uint64, shape (n,)
    values: np.ndarray  # int64 in [1, g]

    @property
    def n(self) -> int:
        return int(self.values.size)


@dataclass
class HstReports:
    """Signed magnitude +-c per user, stored as signs in {+1, -1}.

    Public vectors are explicit (user setting, attacker may craft any
    vector) or seed-derived (server setting).  Exactly one of ``vectors``
    and ``seeds`` is set.
    """

    signs: np.ndarray  # int8 in {+1, -1}
    vectors: Optional[np.ndarray] = None  # int8, shape (n, m)
    seeds: Optional[np.ndarray] = None  # uint64, shape (n,)

    def __post_init__(self) -> None:
        if (self.vectors is None) == (self.seeds is None):
            raise ValueError("exactly one of vectors/seeds must be provided")

    @property
    def n(self) -> int:
        return int(self.signs.size)


@dataclass
class SwReports:
    values: np.ndarray  # float64 in [-b, 1+b]

    @property
    def n(self) -> int:
        return int(self.values.size)


Reports = Union[GrrReports, OueReports, OlhReports, HstReports, SwReports]


def merge_reports(a: Reports, b: Reports) -> Reports:
    """Concatenate two report batches of the same variant."""
    if type(a) is not type(b):
        raise ValueError(f"cannot merge {type(a).__name__} with {type(b).__name__}")
    if isinstance(a, GrrReports):
        return GrrReports(np.concatenate([a.values, b.values]))
    if isinstance(a, OueReports):
        return OueReports(np.concatenate([a.bits, b.bits], axis=0))
    if isinstance(a, OlhReports):
        return OlhReports(np.concatenate([a.seeds, b.seeds]), np.concatenate([a.values, b.values]))
    if isinstance(a, HstReports):
        signs = np.concatenate([a.signs, b.signs])
        if a.vectors is not None and b.vectors is not None:
            return HstReports(signs, vectors=np.concatenate([a.vectors, b.vectors], axis=0))
        if a.seeds is not None and b.seeds is not None:
            return HstReports(signs, seeds=np.concatenate([a.seeds, b.seeds]))
        # mixed storage: materialize both sides
        va = a.vectors if a.vectors is not None else hst_vector(a.seeds, _vec_width(b))
        vb = b.vectors if b.vectors is not None else hst_vector(b.seeds, _vec_width(a))
        return HstReports(signs, vectors=np.concatenate([va, vb], axis=0))
    if isinstance(a, SwReports):
        return SwReports(np.concatenate([a.values, b.values]))
    raise TypeError(f"unknown report type {type(a)}")


def _vec_width(r: HstReports) -> int:
    if r.vectors is None:
        raise ValueError("cannot infer vector width")
    return int(r.vectors.shape[1])


# ---------------------------------------------------------------------------
# GRR


def grr_perturb(x_b, params: GrrParams, rng: RngStream) -> GrrReports:
    """Keep each input with prob p, else report a uniform other index."""
    xs = np.atleast_1d(np.asarray(x_b, dtype=np.int64))
    _check_bins(xs, params.m)
    gen = rng.generator
    n = xs.size
    keep = gen.random(n) < params.p
    # uniform over the m-1 other indices: draw in [1, m-1] and skip the true one
    other = gen.integers(1, params.m, size=n, dtype=np.int64)
    other = other + (other >= xs)
    return GrrReports(np.where(keep, xs, other))


def grr_aggregate(reports: GrrReports, params: GrrParams) -> Histogram:
    if not isinstance(reports, GrrReports):
        raise TypeError("grr_aggregate needs GrrReports")
    if reports.n == 0:
        raise ValueError("no reports to aggregate")
    _check_bins(reports.values, params.m)
    n = reports.n
    counts = np.bincount(reports.values - 1, minlength=params.m).astype(np.float64)
    f = (counts - n * params.q) / (n * (params.p - params.q))
    return Histogram(BinSpec(params.m), f, kind="raw")


# ---------------------------------------------------------------------------
# OUE


def oue_perturb(x_b, params: OueParams, rng: RngStream) -> OueReports:
    """One-hot encode, then flip: hot bit kept w.p. 1/2, cold bits set
    w.p. 1/(e^eps + 1)."""
    xs = np.atleast_1d(np.asarray(x_b, dtype=np.int64))
    _check_bins(xs, params.m)
    gen = rng.generator
    n = xs.size
    bits = (gen.random((n, params.m)) < params.q).astype(np.uint8)
    hot = gen.random(n) < 0.5
    bits[np.arange(n), xs - 1] = hot
    return OueReports(bits)


def oue_aggregate(reports: OueReports, params: OueParams) -> Histogram:
    if not isinstance(reports, OueReports):
        raise TypeError("oue_aggregate needs OueReports")
    if reports.n == 0:
        raise ValueError("no reports to aggregate")
    if reports.bits.shape[1] != params.m:
        raise ValueError(f"report vectors have length {reports.bits.shape[1]}, expected {params.m}")
    n = reports.n
    ones = reports.bits.sum(axis=0, dtype=np.int64).astype(np.float64)
    f = (ones - n * params.q) / (n * (0.5 - params.q))
    return Histogram(BinSpec(params.m), f, kind="raw")


# ---------------------------------------------------------------------------
# OLH


def olh_perturb(
    x_b,
    params: OlhParams,
    rng: RngStream,
    *,
    assignment: ServerAssignment | None = None,
) -> OlhReports:
    """Hash the bin into [1..g] under a per-user seed, then apply
    randomized response on the hash value.

    With no assignment each user draws a fresh seed (user setting); with
    one, seeds come from the server.
    """
    xs = np.atleast_1d(np.asarray(x_b, dtype=np.int64))
    _check_bins(xs, params.m)
    gen = rng.generator
    n = xs.size
    if assignment is None:
        seeds = gen.integers(0, 2**63, size=n, dtype=np.uint64)
    else:
        if assignment.n != n:
            raise ValueError(f"assignment covers {assignment.n} users, need {n}")
        seeds = assignment.seeds
    x_h = (hash_u64(seeds, xs.astype(np.uint64)) % np.uint64(params.g)).astype(np.int64) + 1
    keep = gen.random(n) < params.p
    other = gen.integers(1, params.g, size=n, dtype=np.int64)
    other = other + (other >= x_h)
    return OlhReports(seeds, np.where(keep, x_h, other))


def olh_support_counts(reports: OlhReports, params: OlhParams) -> np.ndarray:
    """C(B_i) = number of reports whose hash of candidate bin i equals the
    reported value."""
    if np.any(reports.values < 1) or np.any(reports.values > params.g):
        raise ValueError("OLH report value outside [1..g]")
    return support_counts(reports.seeds, reports.values, params.m, params.g)


def olh_aggregate(reports: OlhReports, params: OlhParams) -> Histogram:
    if not isinstance(reports, OlhReports):
        raise TypeError("olh_aggregate needs OlhReports")
    if reports.n == 0:
        raise ValueError("no reports to aggregate")
    n = reports.n
    c = olh_support_counts(reports, params).astype(np.float64)
    f = (c - n / params.g) / (n * (params.p - 1.0 / params.g))
    return Histogram(BinSpec(params.m), f, kind="raw")


# ---------------------------------------------------------------------------
# HST


def hst_perturb(
    x_b,
    params: HstParams,
    rng: RngStream,
    *,
    assignment: ServerAssignment | None = None,
) -> HstReports:
    """Project onto the x_b-th coordinate of a +-1 public vector and report
    +-c with the sign kept w.p. e^eps/(e^eps + 1).

    User setting (no assignment): each user draws a fresh vector, carried
    explicitly in the report.  Server setting: vectors are derived from the
    assigned seeds and only the signed value travels.
    """
    xs = np.atleast_1d(np.asarray(x_b, dtype=np.int64))
    _check_bins(xs, params.m)
    gen = rng.generator
    n = xs.size
    if assignment is None:
        vectors = np.where(gen.random((n, params.m)) < 0.5, 1, -1).astype(np.int8)
        coord = vectors[np.arange(n), xs - 1].astype(np.int64)
    else:
        if assignment.n != n:
            raise ValueError(f"assignment covers {assignment.n} users, need {n}")
        coord = _seed_coord(assignment.seeds, xs, params.m)
    keep = gen.random(n) < params.p_keep
    signs = np.where(keep, coord, -coord).astype(np.int8)
    if assignment is None:
        return HstReports(signs, vectors=vectors)
    return HstReports(signs, seeds=assignment.seeds)


def _seed_coord(seeds: np.ndarray, xs: np.ndarray, m: int) -> np.ndarray:
    h = hash_u64(seeds, xs.astype(np.uint64))
    return np.where(h & np.uint64(1), 1, -1).astype(np.int64)


def hst_aggregate(reports: HstReports, params: HstParams) -> Histogram:
    """Mean over users of (signed value) x (public vector), which has
    expected contribution exactly 1 on the reporter's own bin."""
    if not isinstance(reports, HstReports):
        raise TypeError("hst_aggregate needs HstReports")
    if reports.n == 0:
        raise ValueError("no reports to aggregate")
    if not np.all(np.abs(reports.signs) == 1):
        raise ValueError("HST signs must be +-1 (signed value +-c)")
    n = reports.n
    if reports.vectors is not None:
        if reports.vectors.shape != (n, params.m):
            raise ValueError("HST vector shape mismatch")
        signed_sum = (reports.signs.astype(np.int64)[:, None] * reports.vectors.astype(np.int64)).sum(axis=0)
    else:
        signed_sum, _ = hst_seed_stats(reports.seeds, reports.signs.astype(np.int64), params.m)
    f = params.c * signed_sum.astype(np.float64) / n
    return Histogram(BinSpec(params.m), f, kind="raw")


def hst_positive_support(reports: HstReports, params: HstParams) -> np.ndarray:
    """Per-bin count of reports with sign * vector[i] > 0."""
    if reports.vectors is not None:
        prod = reports.signs.astype(np.int64)[:, None] * reports.vectors.astype(np.int64)
        return (prod > 0).sum(axis=0)
    _, pos = hst_seed_stats(reports.seeds, reports.signs.astype(np.int64), params.m)
    return pos


# ---------------------------------------------------------------------------
# end-to-end honest collection

CfoParams = Union[GrrParams, OueParams, OlhParams, HstParams]


def collect(
    data: Dataset,
    params: CfoParams,
    rng: RngStream,
    *,
    setting: str = "user",
) -> tuple[Reports, ServerAssignment | None]:
    """Bin every user's value and run the protocol's randomizer.

    In the server setting the returned assignment must be retained: it is
    needed for aggregation (HST) and it constrains attacker-controlled
    users.
    """
    if setting not in ("user", "server"):
        raise ValueError(f"unknown setting {setting!r}")
    bins = bin_of(data.values, BinSpec(params.m))
    needs_assignment = isinstance(params, (OlhParams, HstParams)) and setting == "server"
    assignment = ServerAssignment.draw(data.n, rng.substream(0)) if needs_assignment else None
    prng = rng.substream(1)
    if isinstance(params, GrrParams):
        return grr_perturb(bins, params, prng), None
    if isinstance(params, OueParams):
        return oue_perturb(bins, params, prng), None
    if isinstance(params, OlhParams):
        return olh_perturb(bins, params, prng, assignment=assignment), assignment
    if isinstance(params, HstParams):
        return hst_perturb(bins, params, prng, assignment=assignment), assignment
    raise TypeError(f"unknown params {type(params)}")


def aggregate(reports: Reports, params: CfoParams) -> Histogram:
    """Dispatch to the protocol's aggregation."""
    if isinstance(params, GrrParams):
        return grr_aggregate(reports, params)
    if isinstance(params, OueParams):
        return oue_aggregate(reports, params)
    if isinstance(params, OlhParams):
        return olh_aggregate(reports, params)
    if isinstance(params, HstParams):
        return hst_aggregate(reports, params)
    raise TypeError(f"unknown params {type(params)}")


# ---------------------------------------------------------------------------
# privacy accounting


def ldp_max_ratio(params) -> float:
    """Worst-case Pr[out|x] / Pr[out|x'] over inputs and concrete outputs,
    evaluated analytically from the randomizer's constants.

    An eps-LDP randomizer must return at most e^eps.
    """
    if isinstance(params, GrrParams):
        return params.p / params.q
    if isinstance(params, OueParams):
        # vectors differing in two coordinates: hot->cold and cold->hot
        q = params.q
        return max((0.5 / q) * ((1 - q) / 0.5), (0.5 / (1 - q)) * (q / 0.5), 1.0)
    if isinstance(params, OlhParams):
        # seed is input-independent; conditioned on it the value is GRR on [g]
        return params.p / params.q
    if isinstance(params, HstParams):
        # conditioned on the public vector, the report is a binary flip
        return params.p_keep / (1 - params.p_keep)
    # SW handled in the sw module (continuous densities)
    from .sw import SwParams

    if isinstance(params, SwParams):
        return params.p / params.q
    raise TypeError(f"unknown params {type(params)}")


# ---------------------------------------------------------------------------
# serialization (golden transcripts)


def write_reports_jsonl(reports: Reports, fh: IO[str]) -> None:
    if isinstance(reports, GrrReports):
        for v in reports.values:
            fh.write(json.dumps({"protocol": "grr", "value": int(v)}) + "\n")
    elif isinstance(reports, OueReports):
        for row in reports.bits:
            fh.write(json.dumps({"protocol": "oue", "bits": [int(b) for b in row]}) + "\n")
    elif isinstance(reports, OlhReports):
        for s, v in zip(reports.seeds, reports.values):
            fh.write(json.dumps({"protocol": "olh", "seed": int(s), "value": int(v)}) + "\n")
    elif isinstance(reports, HstReports):
        if reports.vectors is not None:
            for s, vec in zip(reports.signs, reports.vectors):
                fh.write(json.dumps({"protocol": "hst", "sign": int(s), "vector": [int(c) for c in vec]}) + "\n")
        else:
            for s, seed in zip(reports.signs, reports.seeds):
                fh.write(json.dumps({"protocol": "hst", "sign": int(s), "vector_seed": int(seed)}) + "\n")
    elif isinstance(reports, SwReports):
        for v in reports.values:
            fh.write(json.dumps({"protocol": "sw", "value": float(v)}) + "\n")
    else:
        raise TypeError(f"unknown report type {type(reports)}")


def read_reports_jsonl(fh: IO[str]) -> Reports:
    rows = [json.loads(line) for line in fh if line.strip()]
    if not rows:
        raise ValueError("empty transcript")
    kind = rows[0]["protocol"]
    if any(r["protocol"] != kind for r in rows):
        raise ValueError("mixed report variants in transcript")
    if kind == "grr":
        return GrrReports(np.array([r["value"] for r in rows], dtype=np.int64))
    if kind == "oue":
        return OueReports(np.array([r["bits"] for r in rows], dtype=np.uint8))
    if kind == "olh":
        return OlhReports(
            np.array([r["seed"] for r in rows], dtype=np.uint64),
            np.array([r["value"] for r in rows], dtype=np.int64),
        )
    if kind == "hst":
        signs = np.array([r["sign"] for r in rows], dtype=np.int8)
        if "vector" in rows[0]:
            return HstReports(signs, vectors=np.array([r["vector"] for r in rows], dtype=np.int8))
        return HstReports(signs, seeds=np.array([r["vector_seed"] for r in rows], dtype=np.uint64))
    if kind == "sw":
        return SwReports(np.array([r["value"] for r in rows], dtype=np.float64))
    raise ValueError(f"unknown protocol tag {kind!r}")


def _check_bins(xs: np.ndarray, m: int) -> None:
    if xs.size and (xs.min() < 1 or xs.max() > m):
        raise ValueError(f"bin index outside [1..{m}]")
