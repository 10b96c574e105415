"""Sweep runner: (epsilon x seed) cells, JSONL run logs, CSV summaries."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, serialize
from .core import RngStream
from .privacy import CalibrationError, NoFiniteBound, PrivacySpec, calibrate_sigma, non_private_spec
from .problems import (QuadraticProblem, SplitIds, load_csv_dataset, make_logistic_split, make_quadratic,
                       split_csv_dataset)
from .records import RunRecord
from .optimizers import run_training

log = logging.getLogger(__name__)

NON_PRIVATE = ("sgd", "mezo")
SUMMARY_COLUMNS = ("algorithm", "epsilon", "seed", "sigma", "final_accuracy", "final_loss", "gamma", "status")
TIMING_COLUMNS = ("algorithm", "iterations", "mean_s_per_iter", "private_forward", "public_forward_backward",
                  "private_backward")
MIN_TIMING_ITERS = 20


def _quadratic_split(cfg: ExperimentConfig, seed: int):
    p, s = cfg.problem, cfg.split
    spec = s.to_split_spec(seed)
    if spec.shift_kind == "class_imbalance":
        raise ValueError("class_imbalance needs a classification problem")
    n1, n2 = spec.n_private, spec.n_private + spec.n_public
    total = n2 + spec.n_test
    problem = make_quadratic(p.dim, p.mu, p.L, total, p.center_spread, spec.seed)
    if spec.shift_kind == "mean_shift" and spec.shift_param:
        # move the public centers a fixed distance along a random unit direction
        w = RngStream(spec.seed, "quadratic-shift").normal(p.dim)
        centers = problem.centers.copy()
        centers[n1:n2] += float(spec.shift_param) * w / np.linalg.norm(w)
        problem = QuadraticProblem(problem.A, centers, problem.eigenvalues)
    return problem, SplitIds(np.arange(0, n1), np.arange(n1, n2), np.arange(n2, total))


def build_problem(cfg: ExperimentConfig, seed: int):
    """Problem and split ids for one cell; the data seed follows ``seed`` unless fixed."""
    p = cfg.problem
    if p.kind == "quadratic":
        return _quadratic_split(cfg, seed)
    spec = cfg.split.to_split_spec(seed)
    if p.kind == "csv":
        feats, labels = load_csv_dataset(p.path, header=p.header)
        return split_csv_dataset(feats, labels, spec, mu_reg=p.mu_reg)
    return make_logistic_split(p.dim, spec, separation=p.separation, mu_reg=p.mu_reg,
                               intrinsic_dim=p.intrinsic_dim, condition=p.condition,
                               ambient_noise=p.ambient_noise)


def cell_spec(cfg: ExperimentConfig, epsilon: float | None) -> PrivacySpec:
    """Calibrated privacy spec for one epsilon; raises CalibrationError when unreachable."""
    pr, n, T = cfg.privacy, cfg.split.n_private, cfg.run.T
    q = getattr(cfg.algorithm_config(), "q", 1)
    if cfg.algorithm in NON_PRIVATE:
        return non_private_spec(pr.batch_b, n, T, q)
    try:
        sigma = calibrate_sigma(epsilon, cfg.delta, pr.batch_b, n, T)
    except NoFiniteBound as exc:
        raise CalibrationError(str(exc)) from None
    return PrivacySpec(epsilon, cfg.delta, pr.clip_C, sigma, pr.batch_b, n, T, q)


def cell_epsilons(cfg: ExperimentConfig) -> tuple:
    """Non-private references run once per seed with epsilon = inf."""
    return (math.inf,) if cfg.algorithm in NON_PRIVATE else cfg.privacy.epsilons


def runlog_path(out_dir: Path, algorithm: str, epsilon: float, seed: int) -> Path:
    return Path(out_dir) / "runs" / f"{algorithm}_eps{epsilon:g}_seed{seed}.jsonl"


def run_cell(cfg: ExperimentConfig, epsilon: float, seed: int, out_dir: Path | None = None) -> RunRecord:
    """Calibrate, train and (optionally) log one (epsilon, seed) cell."""
    snapshot = {"config": serialize(cfg), "epsilon": epsilon, "seed": seed}
    try:
        spec = cell_spec(cfg, None if math.isinf(epsilon) else epsilon)
    except CalibrationError as exc:
        log.error("calibration failed for epsilon=%g: %s", epsilon, exc)
        return RunRecord(cfg.algorithm, math.nan, epsilon, seed, status="fail", config=snapshot)
    problem, split = build_problem(cfg, seed)

    handle = None
    if out_dir is not None:
        path = runlog_path(out_dir, cfg.algorithm, epsilon, seed)
        path.parent.mkdir(parents=True, exist_ok=True)
        handle = path.open("w")

    def write(ck):
        if handle is None:
            return
        row = {"algorithm": cfg.algorithm, "epsilon": epsilon, "seed": seed, "sigma": spec.sigma, **ck.to_dict()}
        handle.write(json.dumps(row) + "\n")
        handle.flush()

    try:
        record = run_training(problem, split, cfg.algorithm, cfg.algorithm_config(), spec, cfg.run.T,
                              eval_every=cfg.run.eval_every, seed=seed, on_checkpoint=write,
                              sampling=cfg.run.sampling)
    finally:
        if handle is not None:
            handle.close()
    record.config = snapshot
    return record


def _num(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return repr(float(value)) if isinstance(value, float) else str(value)


def summary_rows(records) -> list[dict]:
    rows = []
    for r in records:
        ok = r.status != "fail" and r.checkpoints
        rows.append({
            "algorithm": r.algorithm,
            "epsilon": _num(float(r.epsilon)),
            "seed": str(r.seed),
            "sigma": _num(r.sigma),
            "final_accuracy": _num(r.final.test_accuracy) if ok else "",
            "final_loss": _num(r.final.test_loss) if ok else "",
            "gamma": _num(r.gamma) if ok else "",
            "status": r.status,
        })
    rows.sort(key=lambda row: (row["algorithm"], float(row["epsilon"]), int(row["seed"])))
    return rows


def timing_report(records) -> list[dict]:
    """Mean seconds per iteration and mean operation counts, one row per algorithm."""
    by_algo: dict[str, list[RunRecord]] = {}
    for r in records:
        by_algo.setdefault(r.algorithm, []).append(r)
    rows = []
    for algo in sorted(by_algo):
        secs = [s for r in by_algo[algo] for s in r.step_seconds]
        ops = np.array([o.as_tuple() for r in by_algo[algo] for o in r.ops], dtype=np.float64).reshape(-1, 3)
        if len(secs) < MIN_TIMING_ITERS:
            log.warning("%s: only %d timed iterations (want >= %d)", algo, len(secs), MIN_TIMING_ITERS)
        mean_ops = ops.mean(axis=0) if len(ops) else np.full(3, math.nan)
        rows.append({
            "algorithm": algo,
            "iterations": len(secs),
            "mean_s_per_iter": float(np.mean(secs)) if secs else math.nan,
            "private_forward": float(mean_ops[0]),
            "public_forward_backward": float(mean_ops[1]),
            "private_backward": float(mean_ops[2]),
        })
    return rows


def write_csv(path: Path, columns, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


@dataclass
class SweepResult:
    records: list[RunRecord] = field(default_factory=list)
    rows: list[dict] = field(default_factory=list)
    timing: list[dict] = field(default_factory=list)

    @property
    def statuses(self) -> set[str]:
        return {r.status for r in self.records}


def run_sweep(cfg: ExperimentConfig, out_dir: str | Path | None = None, epsilons=None) -> SweepResult:
    """Every (epsilon, seed) cell; writes ``summary.csv``, ``timing.csv``, ``config.txt`` and run logs.

    The summary holds no wall-clock values so reruns give byte-identical files;
    timing goes to ``timing.csv``.
    """
    out = Path(cfg.run.output_dir if out_dir is None else out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(serialize(cfg))
    result = SweepResult()
    for eps in (cell_epsilons(cfg) if epsilons is None else epsilons):
        for seed in cfg.run.seeds:
            record = run_cell(cfg, eps, seed, out)
            log.info("%s eps=%g seed=%d sigma=%.4g status=%s", cfg.algorithm, eps, seed, record.sigma, record.status)
            result.records.append(record)
    result.rows = summary_rows(result.records)
    result.timing = timing_report([r for r in result.records if r.status != "fail"])
    write_csv(out / "summary.csv", SUMMARY_COLUMNS, result.rows)
    write_csv(out / "timing.csv", TIMING_COLUMNS, result.timing)
    return result


def read_runlog(path: str | Path) -> list[dict]:
    rows = []
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    if not rows:
        raise ValueError(f"{path}: empty run log")
    return rows
