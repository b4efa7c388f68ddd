"""Command-line entry point: ``wiprates <command> [--config PATH] [--seed S] [--out DIR] [--jobs K]``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional

import numpy as np

from ..decomp import NoDecay
from ..dynsys import ContractError, ReturnOverflow
from ..otmetrics import InequalityViolation, SizeMismatch
from ..pathspace import EmpiricalPathMeasure, NotPSD, PiecewisePath, read_paths_csv, write_paths_csv
from .config import ConfigError, ExperimentConfig, load_config
from .experiment import ExperimentError, build_model, decompose, run_rate_experiment, simulate_cell

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

_SOLVER_ERRORS = (ExperimentError, NoDecay, NotPSD, ReturnOverflow, InequalityViolation, SizeMismatch)


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment configuration")
    common.add_argument("--seed", type=_u64, help="base seed; replicates use seed, seed+1, ...")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")

    parser = argparse.ArgumentParser(prog="wiprates", description="Rates in the weak invariance principle")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("decompose", parents=[common], help="emit the decomposition as JSON")
    sim = sub.add_parser("simulate", parents=[common], help="write process and Brownian path CSVs")
    sim.add_argument("--n", type=int, action="append", help="restrict to these n (repeatable)")
    dist = sub.add_parser("distance", parents=[common], help="distances between two path CSVs")
    dist.add_argument("first")
    dist.add_argument("second")
    dist.add_argument("--n", type=int, default=None, help="n recorded in the output")
    sub.add_parser("rates", parents=[common], help="run the full rate experiment")
    sub.add_parser("selftest", parents=[common], help="run the oracle checks")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = ExperimentConfig.from_dict(
            {**cfg.to_dict(), "seeds": [(args.seed + i) % 2**64 for i in range(len(cfg.seeds))]}
        )
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    return cfg


def _emit(text: str, out: Optional[str], name: str) -> None:
    if out is None:
        sys.stdout.write(text + "\n")
        return
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, name), "w") as fh:
        fh.write(text + "\n")
    print(os.path.join(out, name))


def _cmd_decompose(args) -> int:
    cfg = _config(args)
    dec, model = decompose(cfg)
    if dec is None:
        text = json.dumps({"sigma": model.sigma.tolist(), "note": "zero observable"})
    else:
        record = json.loads(dec.to_json())
        record["limit_sigma"] = np.asarray(model.sigma).tolist()
        record["centring_shift"] = list(model.shift)
        text = json.dumps(record)
    _emit(text, args.out, "decomposition.json")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    cfg = _config(args)
    out = args.out or cfg.out
    if out is None:
        raise ConfigError("simulate needs --out or an 'out' entry in the config")
    os.makedirs(out, exist_ok=True)
    model = build_model(cfg)
    seed = cfg.seeds[0]
    grid = np.linspace(0.0, 1.0, cfg.d + 1)
    for n in args.n or cfg.n_grid:
        process, brownian = simulate_cell(cfg, model, n, seed)
        for label, vals in (("process", process), ("brownian", brownian)):
            path = os.path.join(out, f"{label}_n{n}_seed{seed}.csv")
            with open(path, "w") as fh:
                write_paths_csv([PiecewisePath(grid, v) for v in vals], fh)
            print(path)
    return EXIT_OK


def _cmd_distance(args) -> int:
    from ..otmetrics import cost_matrix, distance_record, prokhorov_cost, wasserstein1_cost

    with open(args.first) as fh:
        mu = EmpiricalPathMeasure(read_paths_csv(fh))
    with open(args.second) as fh:
        nu = EmpiricalPathMeasure(read_paths_csv(fh))
    if len(mu) != len(nu):
        raise SizeMismatch(f"{len(mu)} paths against {len(nu)}")
    cost = cost_matrix(mu, nu)
    nodes = mu.paths[0].nodes.size - 1
    record = distance_record(args.n, len(mu), nodes, wasserstein1_cost(cost), prokhorov_cost(cost), args.seed)
    _emit(record, args.out, "distance.json")
    return EXIT_OK


def _cmd_rates(args) -> int:
    cfg = _config(args)
    report = run_rate_experiment(cfg, jobs=args.jobs, out=args.out)
    for metric in cfg.metrics:
        for c in report.summary(metric):
            print(f"{metric} n={c.n:>6d} median={c.median:.6f} iqr=[{c.q25:.6f}, {c.q75:.6f}]")
        fit = report.fits[metric]
        if fit["slope"] is not None:
            lo, hi = fit["ci95"]
            print(f"{metric} slope={fit['slope']:.4f} +/- {fit['stderr']:.4f} (95% CI [{lo:.4f}, {hi:.4f}])")
        theory = fit["theory"]
        if theory["exponent"] is not None:
            print(f"{metric} bound exponent {theory['exponent']:.4f}, log power {theory['log_power']:.4f}")
    if report.output_dir:
        print(report.output_dir)
    return EXIT_OK


def _cmd_selftest(args) -> int:
    from .selftest import run_selftest

    seed = args.seed if args.seed is not None else 0
    ok = run_selftest(seed=seed, stream=sys.stdout)
    return EXIT_OK if ok else EXIT_SOLVER


_COMMANDS = {
    "decompose": _cmd_decompose,
    "simulate": _cmd_simulate,
    "distance": _cmd_distance,
    "rates": _cmd_rates,
    "selftest": _cmd_selftest,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ContractError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _SOLVER_ERRORS as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
