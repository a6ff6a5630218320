"""Command-line entry point.

Subcommands: ``attack``, ``detect``, ``theory``, ``synth``, ``ingest``.
A JSON config file can seed any run; explicit flags override it.  Records
go to --out (or stdout) as JSON lines followed by one summary object;
progress and diagnostics go to stderr.  Exit code 0 on success, 1 on
configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .core import RngStream, normalize_ingested, read_values, sample_gaussian_dataset, save_dataset
from .harness import ConfigError, ExperimentConfig, cmd_attack, cmd_detect, cmd_theory


def _add_shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=str, help="JSON config file; flags override its fields")
    p.add_argument("--protocol", nargs="+", dest="protocols",
                   help="protocols: grr oue oue-pad olh hst sw (olh/hst need --setting or -user/-server suffix)")
    p.add_argument("--setting", choices=["user", "server"],
                   help="applied to bare olh/hst protocol names")
    p.add_argument("--eps", nargs="+", type=float, dest="epsilons", help="privacy budgets")
    p.add_argument("--beta", nargs="+", type=float, dest="betas", help="malicious fractions")
    p.add_argument("--trials", type=int, help="trials per cell")
    p.add_argument("--bins", type=int, dest="m_o", help="evaluation bins (default 32)")
    p.add_argument("--sw-bins", type=int, dest="m_s", help="SW aggregation bins (default 512)")
    p.add_argument("--seed", type=int, help="master seed (default 1)")
    p.add_argument("--dataset", type=str, help="dataset file path (default: synthetic gaussian)")
    p.add_argument("--gaussian-n", type=int, help="synthetic dataset size (default 100000)")
    p.add_argument("--strategy", choices=["crafted", "baseline"], help="attack strategy")
    p.add_argument("--sw-range", choices=["rightmost-bin", "high-third", "above-one", "full-high"])
    p.add_argument("--alpha", type=float, help="detection significance level (default 0.002)")
    p.add_argument("--detect-m", type=int, dest="detect_rounds", help="reconstruction rounds (default 10)")
    p.add_argument("--workers", type=int, help="process pool size (default 1)")
    p.add_argument("--out", type=str, help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldpshift",
                                     description="Poisoning robustness workbench for numerical LDP protocols")
    sub = parser.add_subparsers(dest="command", required=True)

    p_attack = sub.add_parser("attack", help="attack sweep: per-trial ASG/SGR records")
    _add_shared(p_attack)

    p_detect = sub.add_parser("detect", help="zero-shot detection sweep with per-cell AUC")
    _add_shared(p_detect)

    p_theory = sub.add_parser("theory", help="analytic vs Monte-Carlo expected gain table")
    p_theory.add_argument("--eps", nargs="+", type=float, dest="epsilons", default=[0.5, 1.0])
    p_theory.add_argument("--g-list", nargs="+", type=int, default=[2, 4, 8])
    p_theory.add_argument("--beta", type=float, default=0.05)
    p_theory.add_argument("--setting", nargs="+", choices=["user", "server"], default=["user", "server"])
    p_theory.add_argument("--bins", type=int, dest="m_o", default=32)
    p_theory.add_argument("--n", type=int, default=100_000)
    p_theory.add_argument("--trials", type=int, default=200)
    p_theory.add_argument("--seed", type=int, default=1)
    p_theory.add_argument("--out", type=str)

    p_synth = sub.add_parser("synth", help="write a normalized synthetic gaussian dataset")
    p_synth.add_argument("--n", type=int, default=100_000)
    p_synth.add_argument("--mu", type=float, default=0.0)
    p_synth.add_argument("--sigma", type=float, default=10.0)
    p_synth.add_argument("--seed", type=int, default=1)
    p_synth.add_argument("--out", type=str, required=True)

    p_ingest = sub.add_parser("ingest", help="normalize a raw single-column file onto [0, 1]")
    p_ingest.add_argument("input", type=str)
    p_ingest.add_argument("--out", type=str, required=True)

    return parser


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    base: dict = {}
    if args.config:
        with open(args.config) as fh:
            base = json.load(fh)
    protocols = args.protocols if args.protocols is not None else base.get("protocols")
    if protocols is None:
        raise ConfigError("no protocols given (use --protocol or a config file)")
    if args.setting:
        protocols = [
            f"{p}-{args.setting}" if p in ("olh", "hst") else p for p in protocols
        ]
    if args.dataset:
        dataset = {"type": "file", "path": args.dataset}
    elif "dataset" in base:
        dataset = base["dataset"]
    else:
        dataset = {"type": "gaussian", "n": args.gaussian_n or 100_000, "mu": 0.0, "sigma": 10.0}

    def pick(flag, key, default):
        val = getattr(args, flag, None)
        if val is not None:
            return val
        return base.get(key, default)

    return ExperimentConfig(
        dataset=dataset,
        protocols=protocols,
        epsilons=pick("epsilons", "epsilons", [1.0]),
        betas=pick("betas", "betas", [0.05]),
        trials=pick("trials", "trials", 10),
        m_o=pick("m_o", "m_o", 32),
        m_s=pick("m_s", "m_s", 512),
        seed=pick("seed", "seed", 1),
        alpha=pick("alpha", "alpha", 0.002),
        detect_rounds=pick("detect_rounds", "detect_rounds", 10),
        strategy=pick("strategy", "strategy", "crafted"),
        sw_range=pick("sw_range", "sw_range", "above-one"),
        workers=pick("workers", "workers", 1),
    )


def _emit(records: list[dict], summary: dict, out: str | None) -> None:
    fh = open(out, "w") if out else sys.stdout
    try:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
        fh.write(json.dumps(summary) + "\n")
    finally:
        if out:
            fh.close()


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    progress = lambda msg: print(msg, file=sys.stderr)  # noqa: E731
    try:
        if args.command == "attack":
            config = _experiment_config(args)
            records, summary = cmd_attack(config, progress=progress)
            _emit(records, summary, args.out)
        elif args.command == "detect":
            config = _experiment_config(args)
            records, summary = cmd_detect(config, progress=progress)
            _emit(records, summary, args.out)
        elif args.command == "theory":
            records, summary = cmd_theory(
                args.epsilons,
                args.g_list,
                args.beta,
                m_o=args.m_o,
                n=args.n,
                trials=args.trials,
                seed=args.seed,
                settings=args.setting,
            )
            _emit(records, summary, args.out)
        elif args.command == "synth":
            data = sample_gaussian_dataset(args.n, args.mu, args.sigma, RngStream(args.seed, (0,)))
            save_dataset(args.out, data)
            print(f"wrote {data.n} values to {args.out}", file=sys.stderr)
        elif args.command == "ingest":
            data = normalize_ingested(read_values(args.input))
            save_dataset(args.out, data)
            print(f"wrote {data.n} normalized values to {args.out}", file=sys.stderr)
        else:  # pragma: no cover - argparse enforces the choices
            raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
