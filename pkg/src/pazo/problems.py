"""Built-in desk-scale objectives and public/private split generators."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ParamVector, Problem, RngStream

SHIFT_KINDS = ("none", "class_imbalance", "mean_shift")


class QuadraticProblem(Problem):
    """``f(x; i) = 0.5 (x - c_i)^T A (x - c_i)`` with a shared SPD matrix ``A``."""

    def __init__(self, A: np.ndarray, centers: np.ndarray, eigenvalues: np.ndarray):
        self.A = np.asarray(A, dtype=np.float64)
        self.centers = np.asarray(centers, dtype=np.float64)
        self.eigenvalues = np.asarray(eigenvalues, dtype=np.float64)
        self.n_samples, self.dim = self.centers.shape
        self.smoothness_L = float(self.eigenvalues.max())
        self.mu = float(self.eigenvalues.min())

    def losses(self, x, ids):
        r = x[None, :] - self.centers[np.asarray(ids, dtype=np.intp)]
        return 0.5 * np.einsum("ij,ij->i", r @ self.A, r)

    def grads(self, x, ids):
        r = x[None, :] - self.centers[np.asarray(ids, dtype=np.intp)]
        return r @ self.A

    def mean_loss_many(self, X: np.ndarray, ids) -> np.ndarray:
        """Mean loss over ``ids`` at every row of ``X`` (expanded quadratic form)."""
        C = self.centers[np.asarray(ids, dtype=np.intp)]
        cbar = C.mean(axis=0)
        const = 0.5 * np.mean(np.einsum("ij,ij->i", C @ self.A, C))
        XA = X @ self.A
        return 0.5 * np.einsum("ij,ij->i", XA, X) - XA @ cbar + const

    def minimizer(self, ids) -> ParamVector:
        """Exact minimizer of the mean loss over ``ids`` (the mean center)."""
        return self.centers[np.asarray(ids, dtype=np.intp)].mean(axis=0)


def make_quadratic(d: int, mu: float, L: float, n_samples: int, center_spread: float, seed: int) -> QuadraticProblem:
    """Random quadratic with eigenvalues log-uniform in ``[mu, L]``.

    The largest eigenvalue is pinned to ``L`` and the smallest to ``mu`` so the
    reported smoothness constant is exact. ``mu == L`` gives ``A = mu * I``
    without any rounding from a rotation.
    """
    if not 0 < mu <= L:
        raise ValueError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    if d < 1 or n_samples < 1:
        raise ValueError("d and n_samples must be positive")
    rng = RngStream(seed, "quadratic")
    if mu == L:
        eig = np.full(d, float(L))
        A = float(L) * np.eye(d)
    else:
        eig = np.exp(rng.uniform(d) * (math.log(L) - math.log(mu)) + math.log(mu))
        eig[0] = L
        if d > 1:
            eig[-1] = mu
        Q, R = np.linalg.qr(rng.normal((d, d)))
        Q = Q * np.sign(np.diag(R))
        A = (Q * eig) @ Q.T
        A = 0.5 * (A + A.T)
    center = rng.normal(d)
    centers = center[None, :] + center_spread * rng.normal((n_samples, d))
    return QuadraticProblem(A, centers, eig)


class LogisticProblem(Problem):
    """Binary logistic loss ``log(1 + exp(-y x^T z)) + mu_reg/2 ||x||^2``.

    Labels are stored in {0, 1} and mapped to {-1, +1} internally.
    """

    is_classifier = True

    def __init__(self, features: np.ndarray, labels: np.ndarray, mu_reg: float = 0.0):
        self.features = np.asarray(features, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        if set(np.unique(self.labels)) - {0, 1}:
            raise ValueError("labels must be in {0, 1}")
        self.signs = 2.0 * self.labels - 1.0
        self.mu_reg = float(mu_reg)
        self.n_samples, self.dim = self.features.shape
        sq = np.einsum("ij,ij->i", self.features, self.features)
        self.smoothness_L = float(sq.max()) / 4.0 + self.mu_reg
        self.lipschitz_M = float(np.sqrt(sq.max())) if self.mu_reg == 0 else None

    def _margins(self, x, ids):
        ids = np.asarray(ids, dtype=np.intp)
        return self.signs[ids] * (self.features[ids] @ x), ids

    def losses(self, x, ids):
        m, _ = self._margins(x, ids)
        return np.logaddexp(0.0, -m) + 0.5 * self.mu_reg * float(x @ x)

    def grads(self, x, ids):
        m, ids = self._margins(x, ids)
        # d/dm log(1 + e^{-m}) = -sigmoid(-m)
        w = -self.signs[ids] * _sigmoid(-m)
        return w[:, None] * self.features[ids] + self.mu_reg * x[None, :]

    def accuracy(self, x, ids):
        ids = np.asarray(ids, dtype=np.intp)
        pred = (self.features[ids] @ x > 0).astype(np.int64)
        return float(np.mean(pred == self.labels[ids]))


def _sigmoid(t):
    return np.where(t >= 0, 1.0 / (1.0 + np.exp(-np.abs(t))), np.exp(-np.abs(t)) / (1.0 + np.exp(-np.abs(t))))


@dataclass(frozen=True)
class SplitSpec:
    """Sizes of the private/public/test splits and the public-data shift.

    ``shift_param`` is the mean-shift magnitude for ``mean_shift`` and the
    class-size ratio ``(class0, class1)`` for ``class_imbalance``. When
    ``public_fraction`` is set it overrides ``n_public`` with
    ``round(public_fraction * n_private)``.
    """

    n_private: int = 2000
    n_public: int = 80
    n_test: int = 1000
    shift_kind: str = "none"
    shift_param: float | tuple[float, float] = 0.0
    seed: int = 0
    public_fraction: float | None = None

    def __post_init__(self):
        if self.public_fraction is not None:
            if not 0 < self.public_fraction < 1:
                raise ValueError("public_fraction must lie in (0, 1)")
            object.__setattr__(self, "n_public", int(round(self.public_fraction * self.n_private)))
        if self.shift_kind not in SHIFT_KINDS:
            raise ValueError(f"shift_kind must be one of {SHIFT_KINDS}, got {self.shift_kind!r}")
        if min(self.n_private, self.n_public, self.n_test) < 1:
            raise ValueError("split counts must all be >= 1")
        if self.shift_kind == "class_imbalance":
            r = tuple(float(v) for v in self.shift_param)
            if len(r) != 2 or min(r) < 0 or max(r) <= 0:
                raise ValueError("class_imbalance needs two nonnegative ratios, not both zero")
            object.__setattr__(self, "shift_param", r)
        elif self.shift_kind == "mean_shift" and float(self.shift_param) < 0:
            raise ValueError("mean_shift magnitude must be >= 0")


@dataclass(frozen=True)
class SplitIds:
    private: np.ndarray
    public: np.ndarray
    test: np.ndarray
    meta: dict = field(default_factory=dict)


def _class_counts(n: int, ratio: tuple[float, float]) -> tuple[int, int]:
    n1 = int(round(n * ratio[1] / (ratio[0] + ratio[1])))
    return n - n1, n1


def make_logistic_split(d: int, split: SplitSpec, separation: float = 1.0, mu_reg: float = 1e-3,
                        intrinsic_dim: int | None = None, condition: float = 1.0, ambient_noise: float = 0.0):
    """Two Gaussian class clouds with any shift applied to the public subset only.

    Features are ``s(y) * m + B diag(sqrt(lam)) n + ambient_noise * e`` with
    ``s(y) = -1, +1``, ``B`` a random orthonormal ``d x r`` basis
    (``r = intrinsic_dim``), ``lam`` log-spaced from 1 down to ``1/condition``
    and ``m`` a class-mean vector of norm ``separation`` inside ``span(B)``.
    The defaults give isotropic unit-variance clouds.

    Under ``mean_shift(a)`` the public class means become ``s(y) * (m + a *
    separation * w)`` with ``w`` a unit vector in ``span(B)`` orthogonal to
    ``m``: the public decision direction is rotated by ``atan(a)``. Under
    ``class_imbalance`` the public class sizes follow the given ratio; private
    and test splits stay balanced.
    """
    r = d if intrinsic_dim is None else int(intrinsic_dim)
    if not 1 <= r <= d:
        raise ValueError(f"intrinsic_dim must lie in [1, {d}]")
    if condition < 1:
        raise ValueError("condition must be >= 1")
    rng = RngStream(split.seed, "logistic")
    Q, _ = np.linalg.qr(rng.normal((d, d)))
    basis = Q[:, :r]
    lam = np.exp(np.linspace(0.0, -math.log(condition), r))
    c = rng.normal(r)
    c /= np.linalg.norm(c)
    direction = basis @ c
    o = rng.normal(r)
    o -= (o @ c) * c
    ortho = basis @ (o / np.linalg.norm(o)) if r > 1 else np.zeros(d)
    mean = separation * direction

    def draw(n, ratio=(1.0, 1.0), shift=0.0, stream="x"):
        n0, n1 = _class_counts(n, ratio)
        labels = np.concatenate([np.zeros(n0, np.int64), np.ones(n1, np.int64)])
        child = rng.child(stream)
        labels = labels[child.permutation(n)]
        m = mean + shift * separation * ortho
        noise = (child.normal((n, r)) * np.sqrt(lam)) @ basis.T
        if ambient_noise:
            noise = noise + ambient_noise * child.normal((n, d))
        return (2.0 * labels - 1.0)[:, None] * m[None, :] + noise, labels

    pub_ratio, pub_shift = (1.0, 1.0), 0.0
    if split.shift_kind == "class_imbalance":
        pub_ratio = split.shift_param
    elif split.shift_kind == "mean_shift":
        pub_shift = float(split.shift_param)

    zp, yp = draw(split.n_private, stream="private")
    zq, yq = draw(split.n_public, ratio=pub_ratio, shift=pub_shift, stream="public")
    zt, yt = draw(split.n_test, stream="test")
    if len(np.unique(yq)) < 2 and split.shift_kind != "class_imbalance":
        raise ValueError("degenerate public split: it contains a single class")

    problem = LogisticProblem(np.vstack([zp, zq, zt]), np.concatenate([yp, yq, yt]), mu_reg=mu_reg)
    n1, n2 = split.n_private, split.n_private + split.n_public
    ids = SplitIds(
        private=np.arange(0, n1),
        public=np.arange(n1, n2),
        test=np.arange(n2, n2 + split.n_test),
        meta={"direction": direction, "shift_direction": ortho},
    )
    return problem, ids


def load_csv_dataset(path: str | Path, header: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Read rows of comma-separated reals whose last column is a 0/1 label."""
    feats, labels = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            try:
                values = [float(c) for c in row]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in values):
                raise ValueError(f"{path}:{lineno}: non-finite entry")
            if len(values) < 2:
                raise ValueError(f"{path}:{lineno}: need at least one feature and a label")
            if values[-1] not in (0.0, 1.0):
                raise ValueError(f"{path}:{lineno}: label must be 0 or 1, got {values[-1]}")
            if feats and len(values) - 1 != len(feats[0]):
                raise ValueError(f"{path}:{lineno}: expected {len(feats[0]) + 1} columns")
            feats.append(values[:-1])
            labels.append(int(values[-1]))
    if not feats:
        raise ValueError(f"{path}: no data rows")
    return np.asarray(feats), np.asarray(labels, dtype=np.int64)


def split_csv_dataset(features, labels, split: SplitSpec, mu_reg: float = 1e-3):
    """Randomly partition a real dataset into private/public/test ids.

    Only ``none`` and ``class_imbalance`` shifts are meaningful for real data.
    """
    if split.shift_kind == "mean_shift":
        raise ValueError("mean_shift is only available for synthetic data")
    n = len(labels)
    total = split.n_private + split.n_public + split.n_test
    if total > n:
        raise ValueError(f"split needs {total} rows, dataset has {n}")
    rng = RngStream(split.seed, "csv-split")
    order = rng.permutation(n)
    if split.shift_kind == "class_imbalance":
        n0, n1 = _class_counts(split.n_public, split.shift_param)
        c0 = [i for i in order if labels[i] == 0][:n0]
        c1 = [i for i in order if labels[i] == 1][:n1]
        if len(c0) < n0 or len(c1) < n1:
            raise ValueError("not enough samples per class for the requested imbalance")
        public = np.sort(np.array(c0 + c1, dtype=np.intp))
        rest = np.array([i for i in order if i not in set(public.tolist())], dtype=np.intp)
    else:
        public = np.sort(order[: split.n_public])
        rest = order[split.n_public:]
    private = np.sort(rest[: split.n_private])
    test = np.sort(rest[split.n_private: split.n_private + split.n_test])
    if len(np.unique(labels[public])) < 2 and split.shift_kind != "class_imbalance":
        raise ValueError("degenerate public split: it contains a single class")
    return LogisticProblem(features, labels, mu_reg=mu_reg), SplitIds(private, public, test)
