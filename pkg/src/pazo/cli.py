"""Command line entry point: ``pazo run|sweep|accountant|gamma``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from .config import ConfigError, parse_config
from .metrics import gamma_similarity
from .privacy import CalibrationError, NoFiniteBound, PrivacySpec, accountant_epsilon, calibrate_sigma
from .sweep import build_problem, cell_epsilons, read_runlog, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_CALIBRATION, EXIT_DIVERGED = 0, 2, 3, 4


def _load(path: str):
    cfg = parse_config(path)
    env_seed = os.environ.get("PAZO_SEED")
    if env_seed is not None:
        try:
            cfg = cfg.with_seeds([int(env_seed)])
        except ValueError:
            raise ConfigError(f"PAZO_SEED must be an integer, got {env_seed!r}") from None
    return cfg


def _exit_code(result) -> int:
    if "fail" in result.statuses:
        return EXIT_CALIBRATION
    if "diverged" in result.statuses:
        return EXIT_DIVERGED
    return EXIT_OK


def _print_rows(rows):
    for row in rows:
        print(" ".join(f"{k}={v}" for k, v in row.items()))


def cmd_sweep(args, first_only: bool = False) -> int:
    cfg = _load(args.config)
    eps = cell_epsilons(cfg)[:1] if first_only else None
    result = run_sweep(cfg, out_dir=args.out, epsilons=eps)
    _print_rows(result.rows)
    return _exit_code(result)


def cmd_accountant(args) -> int:
    if (args.sigma is None) == (args.epsilon is None):
        print("error: give exactly one of --sigma or --epsilon", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.sigma is not None:
            eps = accountant_epsilon(args.sigma, args.b, args.n, args.T, args.delta)
            spec = PrivacySpec(eps, args.delta, args.C, args.sigma, args.b, args.n, args.T, args.q)
        else:
            sigma = calibrate_sigma(args.epsilon, args.delta, args.b, args.n, args.T)
            spec = PrivacySpec(args.epsilon, args.delta, args.C, sigma, args.b, args.n, args.T, args.q)
    except (CalibrationError, NoFiniteBound) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(spec.as_line())
    return EXIT_OK


def cmd_gamma(args) -> int:
    cfg = _load(args.config)
    rows = read_runlog(args.trajectory)
    problem, split = build_problem(cfg, int(rows[0]["seed"]))
    report = gamma_similarity(problem, [np.asarray(r["x"]) for r in rows], split.private, split.public)
    for row, value in zip(rows, report.values):
        print(f"iteration={row['iteration']} gap={value!r}")
    print(f"gamma={report.gamma!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pazo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("run", "train the first epsilon of a config for every seed"),
                            ("sweep", "train every (epsilon, seed) cell of a config")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config")
        p.add_argument("--out", default=None, help="output directory (default: run.output_dir)")

    p = sub.add_parser("accountant", help="sigma -> epsilon or epsilon -> sigma")
    p.add_argument("--sigma", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--b", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--q", type=int, default=1)

    p = sub.add_parser("gamma", help="measure gamma along a logged trajectory")
    p.add_argument("config")
    p.add_argument("--trajectory", required=True, help="JSONL run log")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            return cmd_sweep(args, first_only=True)
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "accountant":
            return cmd_accountant(args)
        return cmd_gamma(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
