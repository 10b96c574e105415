"""Sphere sampling and (clipped) two-point function-difference estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import NumericError, ParamVector, Problem, RngStream

DEFAULT_LAMBDA = 1e-2


@dataclass(frozen=True)
class SphereSpec:
    ambient_dim: int
    radius: float

    def __post_init__(self):
        if self.ambient_dim < 1:
            raise ValueError("ambient_dim must be >= 1")
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    @classmethod
    def full(cls, d: int) -> "SphereSpec":
        """The usual ``sqrt(d)`` sphere."""
        return cls(d, math.sqrt(d))

    @classmethod
    def aligned(cls, d: int) -> "SphereSpec":
        """Radius ``d**0.25``, which makes the estimate's squared norm match the gradient's."""
        return cls(d, d ** 0.25)


@dataclass(frozen=True)
class TwoPointQuery:
    lam: float
    clip_C: float
    direction: ParamVector

    def __post_init__(self):
        if not self.lam > 0 or not self.clip_C > 0:
            raise ValueError("lambda and clip_C must be positive")


def sample_sphere(spec: SphereSpec, rng: RngStream) -> ParamVector:
    """Uniform draw from the sphere of radius ``spec.radius`` in ``R^d``."""
    while True:
        g = rng.normal(spec.ambient_dim)
        norm = np.linalg.norm(g)
        if norm > 0:
            return (g / norm) * spec.radius


def sample_direction(spec: SphereSpec, rng: RngStream, kind: str = "sphere") -> ParamVector:
    """Perturbation direction; ``kind="gaussian"`` draws ``N(0, (r^2/d) I)`` instead.

    Both choices share the second moment ``E[u u^T] = (r^2/d) I``.
    """
    if kind == "sphere":
        return sample_sphere(spec, rng)
    if kind == "gaussian":
        return rng.normal(spec.ambient_dim) * (spec.radius / math.sqrt(spec.ambient_dim))
    raise ValueError(f"unknown direction kind {kind!r}")


def clip_scalar(v: float, C: float) -> float:
    """Hard clamp to ``[-C, C]``."""
    if not C > 0:
        raise ValueError("clip threshold must be positive")
    return float(np.clip(v, -C, C))


def clip_values(v: np.ndarray, C: float) -> np.ndarray:
    return np.clip(v, -C, C)


def two_point_deltas(problem: Problem, x: ParamVector, direction: ParamVector, lam: float, ids) -> np.ndarray:
    """Per-sample ``(f(x + lam u) - f(x - lam u)) / (2 lam)`` over ``ids``.

    Costs one batched forward pass per probe.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    plus = problem.losses(x + lam * direction, ids)
    minus = problem.losses(x - lam * direction, ids)
    for name, vals in (("x + lambda*u", plus), ("x - lambda*u", minus)):
        if not np.all(np.isfinite(vals)):
            raise NumericError(f"non-finite loss at probe {name}")
    return (plus - minus) / (2.0 * lam)


def two_point_delta(problem: Problem, x: ParamVector, direction: ParamVector, lam: float, sample_id: int) -> float:
    return float(two_point_deltas(problem, x, direction, lam, np.array([sample_id]))[0])


def clipped_batch_delta(problem: Problem, x: ParamVector, direction: ParamVector, lam: float, batch, C: float) -> float:
    """Mean over ``batch`` of the clipped two-point deltas; ``|result| <= C``."""
    batch = np.asarray(batch, dtype=np.intp)
    if batch.size == 0:
        raise ValueError("clipped_batch_delta needs a non-empty batch")
    return float(np.mean(clip_values(two_point_deltas(problem, x, direction, lam, batch), C)))


def mc_smoothed_gradient(problem: Problem, x: ParamVector, lam: float, radius: float, n_draws: int,
                         rng: RngStream, ids=None, return_samples: bool = False):
    """Monte Carlo average of ``g_lam(x) = delta(u) * u`` over fresh sphere draws.

    ``ids`` defaults to every sample, i.e. the estimate targets the smoothed
    full objective. With ``return_samples`` the per-draw estimates are returned
    too (shape ``(n_draws, d)``), for variance-aware tolerances.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    ids = np.arange(problem.n_samples) if ids is None else np.asarray(ids, dtype=np.intp)
    spec = SphereSpec(problem.dim, radius)
    U = np.stack([sample_sphere(spec, rng) for _ in range(n_draws)])
    plus = mean_loss_at(problem, x[None, :] + lam * U, ids)
    minus = mean_loss_at(problem, x[None, :] - lam * U, ids)
    samples = ((plus - minus) / (2.0 * lam))[:, None] * U
    mean = samples.mean(axis=0)
    return (mean, samples) if return_samples else mean


def mean_loss_at(problem: Problem, X: np.ndarray, ids) -> np.ndarray:
    """Mean loss over ``ids`` at each row of ``X``."""
    fast = getattr(problem, "mean_loss_many", None)
    if fast is not None:
        return fast(X, ids)
    return np.array([problem.mean_loss(row, ids) for row in X])
