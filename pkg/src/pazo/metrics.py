"""Gamma-similarity, evaluation and brute-force oracles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ParamVector, Problem


@dataclass(frozen=True)
class GammaReport:
    """Per-checkpoint distance between full public and private gradients."""

    values: tuple[float, ...]

    @property
    def gamma(self) -> float:
        return max(self.values, default=0.0)


def gradient_gap(problem: Problem, x: ParamVector, private_ids, public_ids) -> float:
    """``|| grad f_public(x) - grad f_private(x) ||`` with full-set mean gradients."""
    return float(np.linalg.norm(problem.mean_grad(x, public_ids) - problem.mean_grad(x, private_ids)))


def gamma_similarity(problem: Problem, trajectory, private_ids, public_ids) -> GammaReport:
    private_ids = np.asarray(private_ids, dtype=np.intp)
    public_ids = np.asarray(public_ids, dtype=np.intp)
    if private_ids.size == 0 or public_ids.size == 0:
        raise ValueError("gamma_similarity needs non-empty private and public id sets")
    return GammaReport(tuple(gradient_gap(problem, np.asarray(x), private_ids, public_ids) for x in trajectory))


def evaluate(problem: Problem, x: ParamVector, ids) -> tuple[float, float | None]:
    """Mean loss over ``ids`` and, for classifiers, the accuracy."""
    ids = np.asarray(ids, dtype=np.intp)
    if ids.size == 0:
        raise ValueError("evaluate needs at least one id")
    return problem.mean_loss(x, ids), problem.accuracy(x, ids)


def bruteforce_projection(G: np.ndarray, v: ParamVector, tol: float = 1e-10) -> ParamVector:
    """Orthogonal projection ``G G^T v`` onto the span of orthonormal columns ``G``."""
    G = np.asarray(G, dtype=np.float64)
    gram = G.T @ G
    if np.max(np.abs(gram - np.eye(G.shape[1])), initial=0.0) > tol:
        raise ValueError("bruteforce_projection requires orthonormal columns")
    return G @ (G.T @ np.asarray(v, dtype=np.float64))
