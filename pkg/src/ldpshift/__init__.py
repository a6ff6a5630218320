"""Poisoning-robustness workbench for numerical LDP protocols.

Implements the GRR/OUE/OLH/HST frequency oracles and the Square Wave
mechanism with EMS reconstruction, distribution-shift attacks against each
(in user and server settings), the ASG/SGR shift metrics with the analytic
expected-gain theory for local hashing, and a zero-shot statistical
detector with the MUD threshold baseline.
"""

from .core import (
    BinSpec,
    Dataset,
    Histogram,
    PrivacyBudget,
    RngStream,
    bin_of,
    cdf,
    empirical_histogram,
    normalize_ingested,
    sample_gaussian_dataset,
)
from .oracles import (
    GrrParams,
    HstParams,
    OlhParams,
    OueParams,
    ServerAssignment,
    collect,
    hash_map,
    hst_vector,
)
from .postprocess import norm_sub
from .metrics import MetricResult, asg, baseline_skew, roc_auc, sgr, wasserstein1
from .sw import SwParams, build_transition, coarsen, ems_reconstruct, sw_params, sw_perturb
from .attacks import AttackSpec, TrialRecord, baseline_attack, run_attacked_trial
from .theory import TheoryInput, expected_asg, expected_freq_change, simulate_expected_asg
from .detect import (
    DetectionVerdict,
    ks_two_sample,
    mud_detect,
    mud_threshold,
    reg_inc_beta,
    report_summary,
    synthesize,
    zero_shot_detect,
)
from .harness import ExperimentConfig, cmd_attack, cmd_detect, cmd_theory

__version__ = "0.1.0"
