import sys
import warnings

import numpy as np
import pytest

from pazo.core import Problem
from pazo.privacy import PrivacySpec, non_private_spec
from pazo.problems import QuadraticProblem


class LinearProblem(Problem):
    """f(x; i) = w_i * a^T x + s_i, per-sample weights may be extreme."""

    def __init__(self, a, weights=None, shifts=None):
        self.a = np.asarray(a, dtype=np.float64)
        self.dim = self.a.shape[0]
        self.w = np.ones(1) if weights is None else np.asarray(weights, dtype=np.float64)
        self.s = np.zeros_like(self.w) if shifts is None else np.asarray(shifts, dtype=np.float64)
        self.n_samples = self.w.shape[0]

    def losses(self, x, ids):
        ids = np.asarray(ids, dtype=np.intp)
        return self.w[ids] * (self.a @ x) + self.s[ids]

    def grads(self, x, ids):
        ids = np.asarray(ids, dtype=np.intp)
        return self.w[ids][:, None] * self.a[None, :]


class ZeroProblem(Problem):
    """Constant zero loss; isolates the noise part of an update."""

    def __init__(self, dim, n=8):
        self.dim, self.n_samples = dim, n

    def losses(self, x, ids):
        return np.zeros(len(ids))

    def grads(self, x, ids):
        return np.zeros((len(ids), self.dim))


def half_norm_problem(d, n=1):
    """f(x; i) = 0.5 ||x||^2 for every sample."""
    return QuadraticProblem(np.eye(d), np.zeros((n, d)), np.ones(d))


def quiet_spec(**kw):
    """PrivacySpec without the delta >= 1/n warning."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return PrivacySpec(**kw)


@pytest.fixture
def exact_spec():
    """sigma = 0, C = inf: no clipping, no noise."""
    return non_private_spec(batch_b=1, dataset_n=10, rounds_T=1)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
