"""Gaussian-mechanism noise, (epsilon, delta) accounting and sigma calibration.

The accountant composes the Renyi DP of the Poisson-subsampled Gaussian
mechanism over ``T`` rounds and converts to ``(epsilon, delta)`` by minimising
over a fixed order grid. Two conversions are available:

* ``"classic"``: ``eps = rdp + log(1/delta) / (alpha - 1)``
* ``"improved"`` (default): ``eps = rdp + log1p(-1/alpha) - (log(delta) + log(alpha)) / (alpha - 1)``,
  valid for every ``alpha > 1`` and never looser than the classic bound.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import special

from .core import RngStream

# 1.25, 1.5, ..., 64.0 plus a sparse tail of large orders; the tail only matters
# for very large sigma, where the best order grows like sigma * sqrt(2 log(1/delta)).
ORDERS = tuple(1.0 + 0.25 * i for i in range(1, 253)) + (96.0, 128.0, 256.0, 512.0, 1024.0, 2048.0, 4096.0, 8192.0)
SIGMA_RANGE = (1e-2, 1e4)


class CalibrationError(ValueError):
    """No noise multiplier in the search range meets the privacy target."""


class NoFiniteBound(ValueError):
    """The Renyi orders give no finite epsilon (noise far too small)."""


@dataclass(frozen=True)
class PrivacySpec:
    """Privacy parameters bound together with the accountant.

    ``sigma = 0`` is accepted for non-private reference runs; exactly one of
    ``epsilon``/``sigma`` may be left as ``None`` until :func:`calibrate`.
    """

    epsilon: float | None
    delta: float
    clip_C: float
    sigma: float | None
    batch_b: int
    dataset_n: int
    rounds_T: int
    queries_q: int = 1

    def __post_init__(self):
        if self.epsilon is None and self.sigma is None:
            raise ValueError("at most one of epsilon and sigma may be unset")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.sigma is not None and self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.clip_C > 0:
            raise ValueError("clip_C must be positive")
        if not 1 <= self.batch_b <= self.dataset_n:
            raise ValueError(f"need 1 <= batch_b <= dataset_n, got b={self.batch_b}, n={self.dataset_n}")
        if self.rounds_T < 1 or self.queries_q < 1:
            raise ValueError("rounds_T and queries_q must be >= 1")
        if self.sigma and math.isinf(self.clip_C):
            raise ValueError("an infinite clip threshold gives unbounded noise; use sigma = 0")
        if self.delta >= 1.0 / self.dataset_n:
            warnings.warn(f"delta={self.delta} is not below 1/n={1.0 / self.dataset_n}", stacklevel=3)

    @property
    def sample_rate(self) -> float:
        return self.batch_b / self.dataset_n

    def is_complete(self) -> bool:
        return self.epsilon is not None and self.sigma is not None

    def as_line(self) -> str:
        keys = ("epsilon", "delta", "clip_C", "sigma", "batch_b", "dataset_n", "rounds_T", "queries_q")
        return " ".join(f"{k}={getattr(self, k)!r}" for k in keys)


def non_private_spec(batch_b: int, dataset_n: int, rounds_T: int, queries_q: int = 1) -> PrivacySpec:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return PrivacySpec(epsilon=math.inf, delta=0.5, clip_C=math.inf, sigma=0.0,
                           batch_b=batch_b, dataset_n=dataset_n, rounds_T=rounds_T, queries_q=queries_q)


def noise_std(spec: PrivacySpec, multiplicity: int = 1) -> float:
    """Std of ``(1/b) N(0, m C^2 sigma^2)``; zero when ``sigma == 0``."""
    if not spec.sigma:
        return 0.0
    return math.sqrt(multiplicity) * spec.clip_C * spec.sigma / spec.batch_b


def noise_for_query(spec: PrivacySpec, rng: RngStream) -> float:
    """Noise added to one zeroth-order query; variance ``q C^2 sigma^2 / b^2``."""
    return float(rng.normal()) * noise_std(spec, spec.queries_q)


def noise_for_selection(spec: PrivacySpec, k: int, rng: RngStream) -> float:
    """Noise added to each of the ``k + 1`` loss releases; variance ``(k+1) C^2 sigma^2 / b^2``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return float(rng.normal()) * noise_std(spec, k + 1)


# Renyi DP of the sampled Gaussian mechanism (sensitivity 1, noise multiplier sigma).

def _log_comb(n, k):
    return special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1)


def _log_a_int(q: float, sigma: float, alpha: int) -> float:
    i = np.arange(alpha + 1, dtype=np.float64)
    terms = _log_comb(alpha, i) + i * math.log(q) + (alpha - i) * math.log1p(-q) + (i * i - i) / (2 * sigma ** 2)
    return float(special.logsumexp(terms))


def _log_a_frac(q: float, sigma: float, alpha: float) -> float:
    # Split of A_alpha into integrals over (-inf, z0] and [z0, inf).
    z0 = sigma ** 2 * math.log(1 / q - 1) + 0.5
    n_terms = 128
    while n_terms <= 65536:
        i = np.arange(n_terms, dtype=np.float64)
        j = alpha - i
        coef = _log_comb(alpha, i)
        log_t0 = coef + i * math.log(q) + j * math.log1p(-q)
        log_t1 = coef + j * math.log(q) + i * math.log1p(-q)
        log_e0 = math.log(0.5) + _log_erfc((i - z0) / (math.sqrt(2) * sigma))
        log_e1 = math.log(0.5) + _log_erfc((z0 - j) / (math.sqrt(2) * sigma))
        s0 = log_t0 + (i * i - i) / (2 * sigma ** 2) + log_e0
        s1 = log_t1 + (j * j - j) / (2 * sigma ** 2) + log_e1
        total = special.logsumexp(np.concatenate([s0, s1]))
        tail = max(s0[-8:].max(), s1[-8:].max())
        if tail < total - 30 and s0[-1] < s0[-2] and s1[-1] < s1[-2]:
            return float(total)
        n_terms *= 2
    return math.inf


def _log_erfc(x):
    return math.log(2) + special.log_ndtr(-np.asarray(x) * math.sqrt(2))


def rdp_sampled_gaussian(q: float, sigma: float, alpha: float) -> float:
    """Renyi divergence bound of one Poisson-subsampled Gaussian release."""
    if q == 0:
        return 0.0
    if q == 1.0:
        return alpha / (2 * sigma ** 2)
    if math.isinf(alpha):
        return math.inf
    if float(alpha).is_integer():
        log_a = _log_a_int(q, sigma, int(alpha))
    else:
        log_a = _log_a_frac(q, sigma, alpha)
    return log_a / (alpha - 1)


@lru_cache(maxsize=4096)
def _rdp_curve(q: float, sigma: float) -> tuple[float, ...]:
    return tuple(rdp_sampled_gaussian(q, sigma, a) for a in ORDERS)


def rdp_to_epsilon(rdp, orders, delta: float, conversion: str = "improved") -> np.ndarray:
    """Per-order epsilon for the composed RDP curve ``rdp``."""
    rdp = np.asarray(rdp, dtype=np.float64)
    a = np.asarray(orders, dtype=np.float64)
    if conversion == "classic":
        return rdp + math.log(1 / delta) / (a - 1)
    if conversion == "improved":
        eps = rdp + np.log1p(-1 / a) - (math.log(delta) + np.log(a)) / (a - 1)
        return np.maximum(eps, 0.0)
    raise ValueError(f"unknown conversion {conversion!r}")


def accountant_epsilon(sigma: float, batch_b: int, dataset_n: int, rounds_T: int, delta: float,
                       conversion: str = "improved") -> float:
    """Smallest epsilon certified over the order grid for ``T`` Poisson-subsampled releases."""
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    if not 0 < batch_b <= dataset_n:
        raise ValueError("need 0 < b <= n")
    if rounds_T < 1:
        raise ValueError("rounds_T must be >= 1")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    rdp = np.asarray(_rdp_curve(batch_b / dataset_n, float(sigma)))
    eps = rdp_to_epsilon(rounds_T * rdp, ORDERS, delta, conversion)
    best = float(np.min(eps))
    if not math.isfinite(best):
        raise NoFiniteBound(f"no finite epsilon for sigma={sigma} at the available orders")
    return best


@lru_cache(maxsize=1024)
def calibrate_sigma(epsilon_target: float, delta: float, batch_b: int, dataset_n: int, rounds_T: int,
                    rel_tol: float = 1e-3) -> float:
    """Smallest noise multiplier (to ``rel_tol``) whose accounted epsilon is within target."""
    if not epsilon_target > 0:
        raise ValueError("epsilon_target must be > 0")

    def eps(s):
        try:
            return accountant_epsilon(s, batch_b, dataset_n, rounds_T, delta)
        except NoFiniteBound:
            return math.inf

    lo, hi = SIGMA_RANGE
    if eps(hi) > epsilon_target:
        raise CalibrationError(f"epsilon={epsilon_target} unreachable with sigma <= {hi}")
    if eps(lo) <= epsilon_target:
        return lo
    while hi / lo > 1 + rel_tol:
        mid = math.sqrt(lo * hi)
        if eps(mid) <= epsilon_target:
            hi = mid
        else:
            lo = mid
    return hi


def calibrate(spec: PrivacySpec) -> PrivacySpec:
    """Fill whichever of ``epsilon``/``sigma`` is missing."""
    if spec.sigma is None:
        sigma = calibrate_sigma(spec.epsilon, spec.delta, spec.batch_b, spec.dataset_n, spec.rounds_T)
        return replace(spec, sigma=sigma)
    if spec.epsilon is None:
        eps = accountant_epsilon(spec.sigma, spec.batch_b, spec.dataset_n, spec.rounds_T, spec.delta)
        return replace(spec, epsilon=eps)
    return spec
