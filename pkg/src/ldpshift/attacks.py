"""Distribution-shift attacks: the baseline plus per-protocol crafted
reports, and the single-trial attack pipeline.

All crafted reports are structurally valid protocol outputs (correct
variant, value ranges) even when statistically anomalous; in the server
setting attackers are constrained to their assigned seeds/vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .core import BinSpec, Dataset, Histogram, RngStream, bin_of, empirical_histogram
from .hashing import best_pool_seed, hash_u64
from .metrics import asg, baseline_skew, sgr
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
    collect,
    grr_perturb,
    hst_perturb,
    merge_reports,
    olh_perturb,
    oue_perturb,
)
from .postprocess import norm_sub
from .sw import SwParams, build_transition, coarsen, ems_reconstruct, sw_perturb

__all__ = [
    "PROTOCOLS",
    "SW_RANGES",
    "AttackSpec",
    "TrialRecord",
    "baseline_attack",
    "baseline_skew",
    "attack_grr",
    "attack_oue",
    "attack_oue_pad",
    "attack_hst",
    "attack_olh_user",
    "attack_olh_server",
    "attack_sw",
    "crafted_attack",
    "poisoned_collection",
    "run_attacked_trial",
    "make_params",
    "n_fake",
]

PROTOCOLS = ("grr", "oue", "oue-pad", "olh", "hst", "sw")
SW_RANGES = ("rightmost-bin", "high-third", "above-one", "full-high")

AnyParams = Union[GrrParams, OueParams, OlhParams, HstParams, SwParams]


@dataclass(frozen=True)
class AttackSpec:
    """What to attack and how hard.

    ``setting`` applies to OLH/HST only; ``sw_range`` selects the SW
    injection region; ``strategy`` is "crafted" (protocol-specific fake
    reports) or "baseline" (honest perturbations of the maximum input).
    """

    protocol: str
    beta: float
    setting: Optional[str] = None
    strategy: str = "crafted"
    sw_range: Optional[str] = None

    def __post_init__(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if self.strategy not in ("crafted", "baseline"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.protocol in ("olh", "hst"):
            if self.setting not in ("user", "server"):
                raise ValueError(f"{self.protocol} needs setting 'user' or 'server'")
        elif self.setting not in (None, "user"):
            raise ValueError(f"{self.protocol} has no server setting")
        if self.protocol == "sw" and self.strategy == "crafted":
            if self.sw_range not in SW_RANGES:
                raise ValueError(f"sw attack needs sw_range in {SW_RANGES}")


def n_fake(beta: float, n: int) -> int:
    """Number of attacker-controlled users: round(beta * n), half up."""
    return int(np.floor(beta * n + 0.5))


@dataclass
class TrialRecord:
    """Everything produced by one seeded attacked trial."""

    protocol: str
    setting: Optional[str]
    strategy: str
    epsilon: float
    beta: float
    n: int
    truth: Histogram
    estimate: Histogram
    asg: float
    sgr: Optional[float]
    seed_key: tuple[int, ...] = field(default_factory=tuple)
    sw_range: Optional[str] = None


# ---------------------------------------------------------------------------
# fake-report constructors


def baseline_attack(
    params: AnyParams,
    n_f: int,
    rng: RngStream,
    *,
    assignment: ServerAssignment | None = None,
) -> Reports:
    """n_f honest perturbations of the maximum input (top bin, or 1.0 for
    SW).  Indistinguishable from genuine users holding that value."""
    if n_f < 0:
        raise ValueError("n_f must be nonnegative")
    if isinstance(params, SwParams):
        return sw_perturb(np.ones(n_f), params, rng)
    tops = np.full(n_f, params.m, dtype=np.int64)
    if isinstance(params, GrrParams):
        return grr_perturb(tops, params, rng)
    if isinstance(params, OueParams):
        return oue_perturb(tops, params, rng)
    if isinstance(params, OlhParams):
        return olh_perturb(tops, params, rng, assignment=assignment)
    if isinstance(params, HstParams):
        return hst_perturb(tops, params, rng, assignment=assignment)
    raise TypeError(f"unknown params {type(params)}")


def attack_grr(params: GrrParams, n_f: int) -> GrrReports:
    """Every fake report names the top bin outright."""
    return GrrReports(np.full(n_f, params.m, dtype=np.int64))


def attack_oue(params: OueParams, n_f: int) -> OueReports:
    """Fake bit vectors with only the top position set."""
    bits = np.zeros((n_f, params.m), dtype=np.uint8)
    bits[:, params.m - 1] = 1
    return OueReports(bits)


def oue_pad_width(params: OueParams) -> int:
    """Extra 1-bits that make a fake report's popcount match the expected
    popcount of an honest report: floor((m-1)/(e^eps+1) - 1/2)."""
    return int(math.floor((params.m - 1) / (math.exp(params.epsilon) + 1.0) - 0.5))


def attack_oue_pad(params: OueParams, n_f: int, rng: RngStream) -> OueReports:
    """Stealthier OUE attack: top bit plus l random distinct padding bits.

    Degenerates to the plain attack when the pad width is nonpositive.
    """
    l = oue_pad_width(params)
    if l <= 0:
        return attack_oue(params, n_f)
    bits = np.zeros((n_f, params.m), dtype=np.uint8)
    bits[:, params.m - 1] = 1
    gen = rng.generator
    for j in range(n_f):
        pad = gen.choice(params.m - 1, size=l, replace=False)
        bits[j, pad] = 1
    return OueReports(bits)


def attack_hst(
    params: HstParams,
    setting: str,
    n_f: int,
    rng: RngStream,
    *,
    assignment_seeds: np.ndarray | None = None,
) -> HstReports:
    """User setting: pick the vector [-1, ..., -1, +1] and report +c, so
    every fake contributes +c to the top bin and -c elsewhere.  Server
    setting: the vector is assigned, so report c * s[m] to force a +c
    contribution on the top bin only in expectation."""
    if setting == "user":
        vectors = np.full((n_f, params.m), -1, dtype=np.int8)
        vectors[:, params.m - 1] = 1
        return HstReports(np.ones(n_f, dtype=np.int8), vectors=vectors)
    if setting == "server":
        if assignment_seeds is None:
            raise ValueError("server-setting HST attack needs the assigned seeds")
        if assignment_seeds.size != n_f:
            raise ValueError(f"need {n_f} assigned seeds, got {assignment_seeds.size}")
        top = hash_u64(assignment_seeds, np.uint64(params.m))
        signs = np.where(top & np.uint64(1), 1, -1).astype(np.int8)
        return HstReports(signs, seeds=np.ascontiguousarray(assignment_seeds, dtype=np.uint64))
    raise ValueError(f"unknown setting {setting!r}")


def attack_olh_user(
    params: OlhParams,
    n_f: int,
    rng: RngStream,
    pool_size: int = 1000,
) -> OlhReports:
    """Each fake user samples pool_size candidate seeds and reports the
    (seed, value) pair with value = hash(seed, m) whose preimage has the
    largest mean bin index (ties: lowest seed).  The reported value always
    supports the top bin; the selection pressure pushes the rest of the
    preimage toward the high end."""
    if pool_size < 1:
        raise ValueError("pool_size must be at least 1")
    if n_f == 0:
        return OlhReports(np.empty(0, dtype=np.uint64), np.empty(0, dtype=np.int64))
    pools = rng.generator.integers(0, 2**63, size=(n_f, pool_size), dtype=np.uint64)
    seeds = best_pool_seed(pools, params.m, params.g)
    values = (hash_u64(seeds, np.uint64(params.m)) % np.uint64(params.g)).astype(np.int64) + 1
    return OlhReports(seeds, values)


def attack_olh_server(params: OlhParams, assignment_seeds: np.ndarray, n_f: int) -> OlhReports:
    """Constrained to the assigned hash: report value = hash(seed, m)."""
    if assignment_seeds is None or assignment_seeds.size != n_f:
        raise ValueError(f"need {n_f} assigned seeds")
    seeds = np.ascontiguousarray(assignment_seeds, dtype=np.uint64)
    values = (hash_u64(seeds, np.uint64(params.m)) % np.uint64(params.g)).astype(np.int64) + 1
    return OlhReports(seeds, values)


_SW_RANGE_BOUNDS = {
    "high-third": lambda b: (1.0 + 2.0 * b / 3.0, 1.0 + b),
    "above-one": lambda b: (1.0, 1.0 + b),
    "full-high": lambda b: (1.0 - b, 1.0 + b),
}


def attack_sw(params: SwParams, sw_range: str, n_f: int, rng: RngStream) -> SwReports:
    """Inject values uniformly into a high-end region of the output domain."""
    if sw_range == "rightmost-bin":
        edges = params.cell_edges()
        lo, hi = float(edges[-2]), float(edges[-1])
    else:
        try:
            lo, hi = _SW_RANGE_BOUNDS[sw_range](params.b)
        except KeyError:
            raise ValueError(f"unknown sw_range {sw_range!r}") from None
    vals = rng.generator.uniform(lo, hi, size=n_f)
    return SwReports(np.clip(vals, -params.b, 1.0 + params.b))


def crafted_attack(
    params: AnyParams,
    spec: AttackSpec,
    n_f: int,
    rng: RngStream,
    *,
    assignment_seeds: np.ndarray | None = None,
    pool_size: int = 1000,
) -> Reports:
    """Dispatch to the protocol-specific fake-report constructor."""
    if isinstance(params, GrrParams):
        return attack_grr(params, n_f)
    if isinstance(params, OueParams):
        if spec.protocol == "oue-pad":
            return attack_oue_pad(params, n_f, rng)
        return attack_oue(params, n_f)
    if isinstance(params, HstParams):
        return attack_hst(params, spec.setting, n_f, rng, assignment_seeds=assignment_seeds)
    if isinstance(params, OlhParams):
        if spec.setting == "server":
            return attack_olh_server(params, assignment_seeds, n_f)
        return attack_olh_user(params, n_f, rng, pool_size=pool_size)
    if isinstance(params, SwParams):
        return attack_sw(params, spec.sw_range, n_f, rng)
    raise TypeError(f"unknown params {type(params)}")


# ---------------------------------------------------------------------------
# single-trial pipeline


def make_params(protocol: str, epsilon: float, m_o: int, m_s: int = 512, g: int = 0) -> AnyParams:
    if protocol == "grr":
        return GrrParams(m_o, epsilon)
    if protocol in ("oue", "oue-pad"):
        return OueParams(m_o, epsilon)
    if protocol == "olh":
        return OlhParams(m_o, epsilon, g)
    if protocol == "hst":
        return HstParams(m_o, epsilon)
    if protocol == "sw":
        return SwParams(epsilon, m_s)
    raise ValueError(f"unknown protocol {protocol!r}")


def poisoned_collection(
    data: Dataset,
    spec: AttackSpec,
    epsilon: float,
    rng: RngStream,
    *,
    m_o: int = 32,
    m_s: int = 512,
    pool_size: int = 1000,
) -> tuple[Reports, ServerAssignment | None]:
    """Collect one poisoned report batch: the first n - n_f users report
    honestly, the rest are attacker-controlled (appended last, which is
    presentation only: aggregation is order-invariant)."""
    n = data.n
    n_f = n_fake(spec.beta, n)
    n_g = n - n_f
    params = make_params(spec.protocol, epsilon, m_o, m_s)
    fake_rng = rng.substream(2)

    if isinstance(params, SwParams):
        honest = sw_perturb(data.values[:n_g], params, rng.substream(1))
        if spec.strategy == "baseline":
            fake = baseline_attack(params, n_f, fake_rng)
        else:
            fake = crafted_attack(params, spec, n_f, fake_rng)
        reports = merge_reports(honest, fake) if n_f else honest
        return reports, None

    setting = spec.setting or "user"
    if setting == "server":
        assignment = ServerAssignment.draw(n, rng.substream(0))
        honest_assign = ServerAssignment(assignment.seeds[:n_g])
        fake_seeds = assignment.seeds[n_g:]
    else:
        assignment = None
        honest_assign = None
        fake_seeds = None
    bins = bin_of(data.values[:n_g], BinSpec(params.m))
    honest = _perturb_bins(bins, params, rng.substream(1), honest_assign)
    if spec.strategy == "baseline":
        fake_assign = ServerAssignment(fake_seeds) if fake_seeds is not None else None
        fake = baseline_attack(params, n_f, fake_rng, assignment=fake_assign)
    else:
        fake = crafted_attack(
            params, spec, n_f, fake_rng, assignment_seeds=fake_seeds, pool_size=pool_size
        )
    reports = merge_reports(honest, fake) if n_f else honest
    return reports, assignment


def run_attacked_trial(
    data: Dataset,
    spec: AttackSpec,
    epsilon: float,
    rng: RngStream,
    *,
    m_o: int = 32,
    m_s: int = 512,
    pool_size: int = 1000,
    transition: np.ndarray | None = None,
    return_reports: bool = False,
):
    """Run one poisoned collection end to end.

    The estimate is made consistent (Norm-Sub for CFOs, EMS coarsened to
    the m_o evaluation grid for SW) before ASG/SGR are computed against
    the full-population truth.
    """
    params = make_params(spec.protocol, epsilon, m_o, m_s)
    eval_bins = BinSpec(m_o)
    truth = empirical_histogram(data, eval_bins)
    reports, assignment = poisoned_collection(
        data, spec, epsilon, rng, m_o=m_o, m_s=m_s, pool_size=pool_size
    )
    if isinstance(params, SwParams):
        fine = ems_reconstruct(reports, params, transition=transition)
        estimate = coarsen(fine, eval_bins)
    else:
        estimate = norm_sub(aggregate(reports, params))

    asg_val = asg(truth, estimate)
    sgr_val = sgr(truth, estimate, spec.beta)
    record = TrialRecord(
        protocol=spec.protocol,
        setting=spec.setting,
        strategy=spec.strategy,
        epsilon=epsilon,
        beta=spec.beta,
        n=data.n,
        truth=truth,
        estimate=estimate,
        asg=asg_val,
        sgr=sgr_val,
        seed_key=rng.key,
        sw_range=spec.sw_range,
    )
    if return_reports:
        return record, reports, assignment
    return record


def _perturb_bins(bins: np.ndarray, params, rng: RngStream, assignment: ServerAssignment | None):
    if isinstance(params, GrrParams):
        return grr_perturb(bins, params, rng)
    if isinstance(params, OueParams):
        return oue_perturb(bins, params, rng)
    if isinstance(params, OlhParams):
        return olh_perturb(bins, params, rng, assignment=assignment)
    if isinstance(params, HstParams):
        return hst_perturb(bins, params, rng, assignment=assignment)
    raise TypeError(f"unknown params {type(params)}")
