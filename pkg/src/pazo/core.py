"""Shared types: parameter vectors, labeled random streams and the Problem interface."""

from __future__ import annotations

import hashlib
from abc import ABC, abstractmethod
from typing import Sequence

import numpy as np

ParamVector = np.ndarray  # dense float64 vector of shape (d,)


class NumericError(ArithmeticError):
    """A loss, gradient or update became non-finite."""


def as_param_vector(values, dim: int | None = None) -> ParamVector:
    """Validate and copy ``values`` into a finite float64 vector."""
    x = np.array(values, dtype=np.float64).reshape(-1)
    if dim is not None and x.shape[0] != dim:
        raise ValueError(f"expected a vector of dimension {dim}, got {x.shape[0]}")
    if x.shape[0] == 0:
        raise ValueError("parameter vectors must have dim >= 1")
    if not np.all(np.isfinite(x)):
        raise NumericError("parameter vector contains NaN or Inf")
    return x


def _derive_key(seed: int, label: str) -> int:
    digest = hashlib.blake2b(f"{seed}:{label}".encode(), digest_size=16).digest()
    return int.from_bytes(digest, "little")


class RngStream:
    """Counter-based random stream identified by ``(seed, stream_label)``.

    Draws come from a Philox generator keyed by a hash of the seed and the label,
    so two streams with different labels never overlap and a stream with a given
    identity always replays the same sequence. Streams are single-owner: hand a
    consumer a :meth:`child` instead of sharing one.
    """

    def __init__(self, seed: int, stream_label: str = "root"):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_label = stream_label
        self._gen = np.random.Generator(np.random.Philox(key=_derive_key(self.seed, stream_label)))

    def child(self, label: str) -> "RngStream":
        return RngStream(self.seed, f"{self.stream_label}/{label}")

    def normal(self, size=None) -> np.ndarray | float:
        return self._gen.standard_normal(size)

    def uniform(self, size=None):
        return self._gen.random(size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, pool: Sequence[int] | np.ndarray, size: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(np.asarray(pool), size=size, replace=replace)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_label={self.stream_label!r})"


def gaussian_standard(rng: RngStream, n: int) -> ParamVector:
    """Return ``n`` i.i.d. standard normal draws from ``rng``."""
    if n < 1:
        raise ValueError("gaussian_standard: empty request, n must be >= 1")
    return rng.normal(int(n))


class Problem(ABC):
    """Per-sample objective ``f(x; sample)`` with analytic per-sample gradients.

    Subclasses implement the batched :meth:`losses` and :meth:`grads`; the
    single-sample accessors are derived from them.
    """

    dim: int
    n_samples: int
    smoothness_L: float | None = None
    lipschitz_M: float | None = None
    is_classifier: bool = False

    @abstractmethod
    def losses(self, x: ParamVector, ids) -> np.ndarray:
        """Per-sample losses for every id in ``ids``."""

    @abstractmethod
    def grads(self, x: ParamVector, ids) -> np.ndarray:
        """Per-sample gradients, shape ``(len(ids), dim)``."""

    def eval_one(self, x: ParamVector, sample_id: int) -> float:
        return float(self.losses(x, np.array([sample_id]))[0])

    def grad_one(self, x: ParamVector, sample_id: int) -> ParamVector:
        return self.grads(x, np.array([sample_id]))[0]

    def mean_loss(self, x: ParamVector, ids) -> float:
        return float(np.mean(self.losses(x, ids)))

    def mean_grad(self, x: ParamVector, ids) -> ParamVector:
        return self.grads(x, ids).mean(axis=0)

    def accuracy(self, x: ParamVector, ids) -> float | None:
        return None
