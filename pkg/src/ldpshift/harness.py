"""Experiment orchestration: seeded sweeps over protocols, budgets, and
attack fractions, with JSON-lines record emission.

Every record carries the config hash, master seed, and trial index needed
to reproduce it exactly; summaries are recomputed from the records so the
two can never drift apart.  Trials derive independent substreams from
(master seed, cell index, trial index), which makes results identical
under any scheduling order, including the optional process pool.
"""

from __future__ import annotations

import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .attacks import (
    PROTOCOLS,
    SW_RANGES,
    AttackSpec,
    make_params,
    n_fake,
    poisoned_collection,
    run_attacked_trial,
)
from .core import BinSpec, Dataset, Histogram, RngStream, empirical_histogram, sample_gaussian_dataset
from .detect import zero_shot_detect
from .metrics import roc_auc
from .sw import SwParams, build_transition
from .theory import TheoryInput, expected_asg, expected_shift_sum, simulate_expected_asg

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "Cell",
    "cmd_attack",
    "cmd_detect",
    "cmd_theory",
    "build_dataset",
    "records_summary",
    "detect_summary",
]

# substream tags
_DATASET = 0
_CELLS = 1


class ConfigError(ValueError):
    """Raised for invalid experiment configurations."""


@dataclass(frozen=True)
class Cell:
    """One point of the sweep cross-product."""

    protocol: str
    setting: Optional[str]
    epsilon: float
    beta: float
    strategy: str = "crafted"
    sw_range: Optional[str] = None

    def label(self) -> str:
        name = self.protocol if self.setting is None else f"{self.protocol}-{self.setting}"
        extra = f",range={self.sw_range}" if self.sw_range else ""
        return f"{name},eps={self.epsilon},beta={self.beta},{self.strategy}{extra}"

    def spec(self) -> AttackSpec:
        return AttackSpec(
            protocol=self.protocol,
            beta=self.beta,
            setting=self.setting,
            strategy=self.strategy,
            sw_range=self.sw_range if self.protocol == "sw" and self.strategy == "crafted" else None,
        )


@dataclass
class ExperimentConfig:
    dataset: dict
    protocols: list[str]
    epsilons: list[float]
    betas: list[float]
    trials: int
    m_o: int = 32
    m_s: int = 512
    seed: int = 1
    alpha: float = 0.002
    detect_rounds: int = 10
    strategy: str = "crafted"
    sw_range: str = "above-one"
    pool_size: int = 1000
    workers: int = 1

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not self.protocols:
            raise ConfigError("protocol list is empty")
        if not self.epsilons or not self.betas:
            raise ConfigError("epsilon and beta lists must be nonempty")
        for eps in self.epsilons:
            if not eps > 0:
                raise ConfigError(f"epsilon must be positive, got {eps}")
        for beta in self.betas:
            if not 0.0 <= beta <= 1.0:
                raise ConfigError(f"beta must be in [0, 1], got {beta}")
        for name in self.protocols:
            _parse_protocol(name)
        if self.sw_range not in SW_RANGES:
            raise ConfigError(f"sw_range must be one of {SW_RANGES}")
        if self.strategy not in ("crafted", "baseline"):
            raise ConfigError(f"strategy must be crafted or baseline, got {self.strategy!r}")

    def cells(self) -> list[Cell]:
        out = []
        for name in self.protocols:
            protocol, setting = _parse_protocol(name)
            for eps in self.epsilons:
                for beta in self.betas:
                    out.append(
                        Cell(
                            protocol=protocol,
                            setting=setting,
                            epsilon=eps,
                            beta=beta,
                            strategy=self.strategy,
                            sw_range=self.sw_range if protocol == "sw" else None,
                        )
                    )
        return out

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "protocols": list(self.protocols),
            "epsilons": [float(e) for e in self.epsilons],
            "betas": [float(b) for b in self.betas],
            "trials": self.trials,
            "m_o": self.m_o,
            "m_s": self.m_s,
            "seed": self.seed,
            "alpha": self.alpha,
            "detect_rounds": self.detect_rounds,
            "strategy": self.strategy,
            "sw_range": self.sw_range,
            "pool_size": self.pool_size,
        }

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _parse_protocol(name: str) -> tuple[str, Optional[str]]:
    """Accept 'olh-user' / 'hst-server' style names or bare protocol names."""
    if name in ("grr", "oue", "oue-pad", "sw"):
        return name, None
    for proto in ("olh", "hst"):
        if name == proto:
            raise ConfigError(f"{proto} needs a setting: use {proto}-user or {proto}-server")
        for setting in ("user", "server"):
            if name == f"{proto}-{setting}":
                return proto, setting
    raise ConfigError(f"unknown protocol {name!r} (choose from grr, oue, oue-pad, olh-user, olh-server, hst-user, hst-server, sw)")


def build_dataset(config: ExperimentConfig) -> Dataset:
    """Materialize the configured dataset (deterministic in the seed)."""
    ds = config.dataset
    kind = ds.get("type")
    rng = RngStream(config.seed, (_DATASET,))
    if kind == "gaussian":
        return sample_gaussian_dataset(
            int(ds.get("n", 100_000)), float(ds.get("mu", 0.0)), float(ds.get("sigma", 10.0)), rng
        )
    if kind == "uniform":
        n = int(ds.get("n", 100_000))
        return Dataset(rng.generator.random(n))
    if kind == "file":
        from .core import load_dataset

        return load_dataset(ds["path"])
    raise ConfigError(f"unknown dataset type {kind!r}")


# ---------------------------------------------------------------------------
# attack sweeps

_WORKER_STATE: dict = {}


def _init_worker(values: np.ndarray, config_dict: dict) -> None:  # pragma: no cover - subprocess
    _WORKER_STATE["data"] = Dataset(values)
    _WORKER_STATE["config"] = config_dict


def _attack_trial_task(args) -> dict:
    cell_idx, trial, seed, cell, m_o, m_s, pool_size = args
    data = _WORKER_STATE["data"]
    rng = RngStream(seed, (_CELLS, cell_idx, trial))
    rec = run_attacked_trial(
        data, cell.spec(), cell.epsilon, rng, m_o=m_o, m_s=m_s, pool_size=pool_size
    )
    return {
        "kind": "trial",
        "cell": cell.label(),
        "protocol": cell.protocol,
        "setting": cell.setting,
        "strategy": cell.strategy,
        "sw_range": cell.sw_range,
        "epsilon": cell.epsilon,
        "beta": cell.beta,
        "trial": trial,
        "seed": seed,
        "seed_key": [_CELLS, cell_idx, trial],
        "asg": rec.asg,
        "sgr": rec.sgr,
        "estimate": [float(v) for v in rec.estimate.f],
    }


def cmd_attack(config: ExperimentConfig, progress=None) -> tuple[list[dict], dict]:
    """Full cross-product attack sweep; returns (records, summary)."""
    data = build_dataset(config)
    cells = config.cells()
    tasks = [
        (ci, t, config.seed, cell, config.m_o, config.m_s, config.pool_size)
        for ci, cell in enumerate(cells)
        for t in range(config.trials)
    ]
    records = _run_tasks(_attack_trial_task, tasks, data, config, progress)
    summary = records_summary(records, config)
    return records, summary


def records_summary(records: list[dict], config: ExperimentConfig) -> dict:
    """Per-cell mean/stderr of ASG and SGR, recomputed from the records."""
    cells: dict[str, list[dict]] = {}
    for rec in records:
        cells.setdefault(rec["cell"], []).append(rec)
    out = []
    for label, recs in cells.items():
        asgs = np.array([r["asg"] for r in recs])
        sgrs = np.array([r["sgr"] for r in recs if r["sgr"] is not None])
        entry = {
            "cell": label,
            "trials": len(recs),
            "mean_asg": float(asgs.mean()),
            "stderr_asg": float(asgs.std(ddof=1) / np.sqrt(asgs.size)) if asgs.size > 1 else None,
        }
        if sgrs.size:
            entry["mean_sgr"] = float(sgrs.mean())
            entry["stderr_sgr"] = float(sgrs.std(ddof=1) / np.sqrt(sgrs.size)) if sgrs.size > 1 else None
        else:
            entry["mean_sgr"] = None
            entry["stderr_sgr"] = None
        out.append(entry)
    return {"kind": "summary", "command": "attack", "config_hash": config.hash(), "seed": config.seed, "cells": out}


# ---------------------------------------------------------------------------
# detection sweeps


def _detect_trial_task(args) -> dict:
    cell_idx, trial, seed, cell, m_o, m_s, pool_size, rounds, alpha = args
    data = _WORKER_STATE["data"]
    rng = RngStream(seed, (_CELLS, cell_idx, trial))
    attacked = trial % 2 == 0  # even trials attacked, odd trials clean
    if attacked:
        spec = cell.spec()
    else:
        spec = AttackSpec(protocol=cell.protocol, beta=0.0, setting=cell.setting,
                          strategy="baseline", sw_range=None)
    reports, assignment = poisoned_collection(
        data, spec, cell.epsilon, rng.substream(0), m_o=m_o, m_s=m_s, pool_size=pool_size
    )
    params = make_params(cell.protocol, cell.epsilon, m_o, m_s)
    verdict = zero_shot_detect(
        reports, params, rng.substream(1), rounds=rounds, alpha=alpha, assignment=assignment
    )
    return {
        "kind": "detect_trial",
        "cell": cell.label(),
        "protocol": cell.protocol,
        "setting": cell.setting,
        "sw_range": cell.sw_range,
        "epsilon": cell.epsilon,
        "beta": cell.beta,
        "trial": trial,
        "seed": seed,
        "seed_key": [_CELLS, cell_idx, trial],
        "label": "attacked" if attacked else "clean",
        **verdict.to_dict(),
    }


def cmd_detect(config: ExperimentConfig, progress=None) -> tuple[list[dict], dict]:
    """Half-attacked/half-clean detection sweep with per-cell AUC."""
    if config.trials % 2 != 0:
        raise ConfigError("detection needs an even trial count (half attacked, half clean)")
    data = build_dataset(config)
    cells = config.cells()
    tasks = [
        (ci, t, config.seed, cell, config.m_o, config.m_s, config.pool_size,
         config.detect_rounds, config.alpha)
        for ci, cell in enumerate(cells)
        for t in range(config.trials)
    ]
    records = _run_tasks(_detect_trial_task, tasks, data, config, progress)
    summary = detect_summary(records, config)
    return records, summary


def detect_summary(records: list[dict], config: ExperimentConfig) -> dict:
    """AUC of p-value scores per cell; clean runs are the positive class."""
    cells: dict[str, list[dict]] = {}
    for rec in records:
        cells.setdefault(rec["cell"], []).append(rec)
    out = []
    for label, recs in cells.items():
        scores = [r["p_value"] for r in recs]
        labels = [r["label"] == "clean" for r in recs]
        alarms = sum(1 for r in recs if r["polluted"] and r["label"] == "attacked")
        false_alarms = sum(1 for r in recs if r["polluted"] and r["label"] == "clean")
        out.append(
            {
                "cell": label,
                "trials": len(recs),
                "auc": roc_auc(scores, labels),
                "alarms_attacked": alarms,
                "alarms_clean": false_alarms,
            }
        )
    return {"kind": "summary", "command": "detect", "config_hash": config.hash(), "seed": config.seed, "cells": out}


# ---------------------------------------------------------------------------
# theory table


def cmd_theory(
    epsilons: Iterable[float],
    g_list: Iterable[int],
    beta: float,
    *,
    m_o: int = 32,
    n: int = 100_000,
    trials: int = 200,
    seed: int = 1,
    settings: Iterable[str] = ("user", "server"),
    truth: Histogram | None = None,
) -> tuple[list[dict], dict]:
    """Analytic vs Monte-Carlo expected gain for local-hashing oracles."""
    if truth is None:
        truth = Histogram(BinSpec(m_o), np.full(m_o, 1.0 / m_o), kind="consistent")
    records = []
    row_idx = 0
    for setting in settings:
        for eps in epsilons:
            for g in g_list:
                inp = TheoryInput(x=truth, beta=beta, epsilon=eps, g=int(g), setting=setting)
                analytic = expected_asg(inp)
                shift_sum = expected_shift_sum(inp)
                rng = RngStream(seed, (_CELLS, row_idx))
                mc_mean, mc_stderr = simulate_expected_asg(inp, n, trials, rng)
                records.append(
                    {
                        "kind": "theory_row",
                        "setting": setting,
                        "epsilon": float(eps),
                        "g": int(g),
                        "beta": float(beta),
                        "n": n,
                        "trials": trials,
                        "analytic_asg": analytic,
                        "analytic_shift_sum": shift_sum,
                        "mc_asg": mc_mean,
                        "mc_stderr": mc_stderr,
                        "ratio": mc_mean / analytic if analytic != 0 else None,
                    }
                )
                row_idx += 1
    summary = {"kind": "summary", "command": "theory", "seed": seed, "rows": len(records)}
    return records, summary


# ---------------------------------------------------------------------------
# scheduling


def _run_tasks(task_fn, tasks, data: Dataset, config: ExperimentConfig, progress) -> list[dict]:
    if config.workers <= 1:
        _init_worker(data.values, config.to_dict())
        results = []
        for i, task in enumerate(tasks):
            results.append(task_fn(task))
            if progress and (i + 1) % 25 == 0:
                progress(f"{i + 1}/{len(tasks)} trials")
        return results
    with ProcessPoolExecutor(
        max_workers=config.workers,
        initializer=_init_worker,
        initargs=(data.values, config.to_dict()),
    ) as pool:
        results = list(pool.map(task_fn, tasks, chunksize=4))
    return results
