"""DPZero, PAZO-M/P/S, DP-SGD and the non-private references.

Every step function takes an :class:`OptState` and returns a new one. The
state's random streams are single-owner: once a state has been stepped, use
the returned state only. Private sums are normalized by the nominal batch size
``spec.batch_b`` (Poisson sampling makes the realized size random), and the
noise scales follow the ``(1/b) N(0, m C^2 sigma^2)`` form.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import NumericError, ParamVector, Problem, RngStream
from .linalg import orthonormalize_columns
from .metrics import gradient_gap
from .privacy import PrivacySpec, noise_for_query, noise_for_selection, noise_std
from .records import Checkpoint, OpCount, RunRecord
from .sampling import DEFAULT_LAMBDA, SphereSpec, clip_values, sample_direction, sample_sphere

log = logging.getLogger(__name__)

ALGORITHMS = ("sgd", "mezo", "dpsgd", "dpzero", "pazo-m", "pazo-p", "pazo-pprime", "pazo-s")
DIVERGENCE_LOSS = 1e12


@dataclass(frozen=True)
class SGDConfig:
    eta: float = 0.1


@dataclass(frozen=True)
class DPSGDConfig:
    eta: float = 0.1


@dataclass(frozen=True)
class DPZeroConfig:
    eta: float = 0.01
    q: int = 1
    lam: float = DEFAULT_LAMBDA
    radius: float | None = None  # None: sqrt(d)
    direction: str = "sphere"


@dataclass(frozen=True)
class PazoMConfig:
    eta: float = 0.1
    alpha: float = 0.5
    q: int = 1
    lam: float = DEFAULT_LAMBDA
    public_batch_bprime: int = 16
    direction: str = "sphere"

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        if self.q < 1:
            raise ValueError("q must be >= 1")


@dataclass(frozen=True)
class PazoPConfig:
    eta: float = 0.5
    k: int = 3
    q: int = 1
    lam: float = DEFAULT_LAMBDA
    public_batch_bprime: int = 16
    orthonormalize: bool = True
    direction: str = "sphere"

    def __post_init__(self):
        if self.k < 1 or self.q < 1:
            raise ValueError("k and q must be >= 1")


@dataclass(frozen=True)
class PazoSConfig:
    eta: float = 0.1
    k: int = 3
    public_batch_bprime: int = 16
    perturb_scale: float = 0.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.perturb_scale < 0:
            raise ValueError("perturb_scale must be >= 0")


@dataclass(frozen=True)
class StepInfo:
    ops: OpCount
    selected: int | None = None
    effective_k: int | None = None


@dataclass(frozen=True)
class OptState:
    x: ParamVector
    t: int = 0
    rngs: dict = field(default_factory=dict, compare=False)
    info: StepInfo | None = field(default=None, compare=False)


STREAMS = ("perturbation", "noise", "batch")


def init_state(x0, seed: int) -> OptState:
    root = RngStream(seed, "run")
    x = np.array(x0, dtype=np.float64)
    return OptState(x=x, t=0, rngs={name: root.child(name) for name in STREAMS})


def _advance(state: OptState, x_new: ParamVector, info: StepInfo) -> OptState:
    if not np.all(np.isfinite(x_new)):
        raise NumericError(f"non-finite parameters after step {state.t}")
    return OptState(x=x_new, t=state.t + 1, rngs=state.rngs, info=info)


def _zo_estimate(problem: Problem, x, batch, spec: PrivacySpec, q: int, lam: float, draw, rngs) -> ParamVector:
    """Average over ``q`` queries of ``(clipped mean delta + noise) * v``.

    ``draw(rng)`` returns the full-dimensional perturbation ``v`` for one query.
    """
    g = np.zeros(problem.dim)
    for _ in range(q):
        v = draw(rngs["perturbation"])
        plus = problem.losses(x + lam * v, batch)
        minus = problem.losses(x - lam * v, batch)
        deltas = (plus - minus) / (2.0 * lam)
        if not np.all(np.isfinite(deltas)):
            raise NumericError("non-finite two-point difference")
        s = np.sum(clip_values(deltas, spec.clip_C)) / spec.batch_b
        z = noise_for_query(spec, rngs["noise"])
        g = g + (s + z) * v
    return g / q


def _sphere_draw(d: int, radius: float, kind: str):
    sphere = SphereSpec(d, radius)
    return lambda rng: sample_direction(sphere, rng, kind)


def dpzero_step(state: OptState, problem: Problem, private_batch, spec: PrivacySpec, q: int = 1,
                lam: float = DEFAULT_LAMBDA, eta: float = 0.01, radius: float | None = None,
                direction: str = "sphere") -> OptState:
    """Private two-point step with directions on the ``sqrt(d)`` sphere (or ``radius``)."""
    d = problem.dim
    r = math.sqrt(d) if radius is None else radius
    g = _zo_estimate(problem, state.x, private_batch, spec, q, lam, _sphere_draw(d, r, direction), state.rngs)
    return _advance(state, state.x - eta * g, StepInfo(OpCount(private_forward=2 * q)))


def pazo_m_step(state: OptState, problem: Problem, private_batch, public_batch, cfg: PazoMConfig,
                spec: PrivacySpec) -> OptState:
    """Mix a public batch gradient with the private estimate on the ``d**0.25`` sphere."""
    if len(public_batch) == 0:
        raise ValueError("pazo_m_step needs a non-empty public batch")
    d = problem.dim
    g_pub = problem.mean_grad(state.x, public_batch)
    g_zo = _zo_estimate(problem, state.x, private_batch, spec, cfg.q, cfg.lam,
                        _sphere_draw(d, d ** 0.25, cfg.direction), state.rngs)
    x_new = state.x - cfg.eta * (cfg.alpha * g_pub + (1 - cfg.alpha) * g_zo)
    return _advance(state, x_new, StepInfo(OpCount(private_forward=2 * cfg.q, public_forward_backward=1)))


def public_gradient_matrix(problem: Problem, x, public_batches) -> np.ndarray:
    return np.column_stack([problem.mean_grad(x, b) for b in public_batches])


def pazo_p_update(state: OptState, problem: Problem, private_batch, basis: np.ndarray, cfg: PazoPConfig,
                  spec: PrivacySpec, public_ops: int = 0) -> OptState:
    """Subspace step given an already (ortho)normalized ``d x k`` basis."""
    k = basis.shape[1]
    if k == 0:
        raise ValueError("public gradient basis has effective rank 0")
    sphere = SphereSpec(k, math.sqrt(k))

    def draw(rng):
        if cfg.direction == "gaussian":
            return basis @ rng.normal(k)
        return basis @ sample_sphere(sphere, rng)

    g = _zo_estimate(problem, state.x, private_batch, spec, cfg.q, cfg.lam, draw, state.rngs)
    info = StepInfo(OpCount(private_forward=2 * cfg.q, public_forward_backward=public_ops), effective_k=k)
    return _advance(state, state.x - cfg.eta * g, info)


def pazo_p_step(state: OptState, problem: Problem, private_batch, public_batches, cfg: PazoPConfig,
                spec: PrivacySpec) -> OptState:
    """Zeroth-order search restricted to the span of ``k`` public batch gradients."""
    if len(public_batches) != cfg.k:
        raise ValueError(f"expected {cfg.k} public batches, got {len(public_batches)}")
    G = public_gradient_matrix(problem, state.x, public_batches)
    basis = orthonormalize_columns(G, "orthonormal" if cfg.orthonormalize else "normalize")
    return pazo_p_update(state, problem, private_batch, basis, cfg, spec, public_ops=len(public_batches))


def _release_loss(problem: Problem, x, batch, spec: PrivacySpec, k: int, rng: RngStream) -> float:
    losses = problem.losses(x, batch)
    # Draw the noise regardless so the stream position does not depend on the data.
    z = noise_for_selection(spec, k, rng)
    if not np.all(np.isfinite(losses)):
        log.warning("non-finite candidate loss; candidate excluded from selection")
        return math.inf
    return float(np.sum(clip_values(losses, spec.clip_C)) / spec.batch_b) + z


def pazo_s_candidates(state: OptState, problem: Problem, private_batch, grads, cfg: PazoSConfig,
                      spec: PrivacySpec):
    """Privatized candidate losses and the selected index (``k`` is the perturbed candidate)."""
    k = len(grads)
    x, eta = state.x, cfg.eta
    f = [_release_loss(problem, x - eta * g, private_batch, spec, k, state.rngs["noise"]) for g in grads]
    j_hat = int(np.argmin(f))
    z_prime = cfg.perturb_scale * state.rngs["perturbation"].normal(problem.dim)
    extra = grads[j_hat] + z_prime
    f.append(_release_loss(problem, x - eta * extra, private_batch, spec, k, state.rngs["noise"]))
    j_star = int(np.argmin(f))
    return list(grads) + [extra], f, j_star


def pazo_s_step(state: OptState, problem: Problem, private_batch, public_batches, cfg: PazoSConfig,
                spec: PrivacySpec) -> OptState:
    """Pick the public gradient step with the lowest privatized private loss.

    Ties go to the lowest index, so the perturbed extra candidate wins only on
    a strictly lower released loss.
    """
    if len(public_batches) != cfg.k:
        raise ValueError(f"expected {cfg.k} public batches, got {len(public_batches)}")
    grads = [problem.mean_grad(state.x, b) for b in public_batches]
    cands, _, j_star = pazo_s_candidates(state, problem, private_batch, grads, cfg, spec)
    info = StepInfo(OpCount(private_forward=cfg.k + 1, public_forward_backward=cfg.k), selected=j_star)
    return _advance(state, state.x - cfg.eta * cands[j_star], info)


def clip_vectors(G: np.ndarray, C: float) -> np.ndarray:
    """Rescale each row to norm at most ``C``."""
    norms = np.linalg.norm(G, axis=1)
    scale = np.ones_like(norms)
    big = norms > C
    scale[big] = C / norms[big]
    return G * scale[:, None]


def dpsgd_step(state: OptState, problem: Problem, private_batch, spec: PrivacySpec, eta: float) -> OptState:
    """Per-sample clipped gradients plus ``N(0, C^2 sigma^2 / b^2 I)`` noise."""
    b_real = len(private_batch)
    G = problem.grads(state.x, private_batch)
    g = np.sum(clip_vectors(G, spec.clip_C), axis=0) / spec.batch_b
    zeta = state.rngs["noise"].normal(problem.dim) * noise_std(spec, 1)
    info = StepInfo(OpCount(private_forward=b_real, private_backward=b_real))
    return _advance(state, state.x - eta * (g + zeta), info)


def sgd_step(state: OptState, problem: Problem, batch, eta: float) -> OptState:
    """Plain mini-batch SGD on the private data (no privacy)."""
    g = problem.mean_grad(state.x, batch) if len(batch) else np.zeros(problem.dim)
    return _advance(state, state.x - eta * g, StepInfo(OpCount(private_forward=1, private_backward=1)))


# Driver

def poisson_batch(ids: np.ndarray, rate: float, rng: RngStream) -> np.ndarray:
    """Each id joins independently with probability ``rate``."""
    return ids[rng.uniform(len(ids)) < rate]


def public_batches(ids: np.ndarray, k: int, bprime: int, rng: RngStream) -> list[np.ndarray]:
    """``k`` public batches of size ``b'``: disjoint parts of one draw when the pool allows it."""
    if k * bprime <= len(ids):
        draw = rng.choice(ids, k * bprime, replace=False)
        return [np.sort(draw[j * bprime:(j + 1) * bprime]) for j in range(k)]
    if bprime > len(ids):
        raise ValueError(f"public batch size {bprime} exceeds the {len(ids)} public samples")
    return [np.sort(rng.choice(ids, bprime, replace=False)) for _ in range(k)]


def make_config(algorithm: str, **params):
    """Algorithm config dataclass for ``algorithm`` from keyword parameters."""
    cls = {
        "sgd": SGDConfig, "dpsgd": DPSGDConfig, "mezo": DPZeroConfig, "dpzero": DPZeroConfig,
        "pazo-m": PazoMConfig, "pazo-p": PazoPConfig, "pazo-pprime": PazoPConfig, "pazo-s": PazoSConfig,
    }[algorithm]
    if algorithm == "pazo-pprime":
        params = {**params, "orthonormalize": False}
    return cls(**params)


def fixed_batch(ids: np.ndarray, b: int, rng: RngStream) -> np.ndarray:
    """Fixed-size batch without replacement; the accountant assumes Poisson, so this is approximate."""
    return np.sort(rng.choice(ids, min(b, len(ids)), replace=False))


SAMPLERS = ("poisson", "shuffle")


def one_step(algorithm: str, state: OptState, problem: Problem, private_ids, public_ids, cfg,
             spec: PrivacySpec, sampling: str = "poisson") -> OptState:
    """Sample batches for one iteration and apply the algorithm's step."""
    rng = state.rngs["batch"]
    if sampling == "poisson":
        batch = poisson_batch(private_ids, spec.sample_rate, rng)
    else:
        batch = fixed_batch(private_ids, spec.batch_b, rng)
    if algorithm == "sgd":
        return sgd_step(state, problem, batch, cfg.eta)
    if algorithm in ("mezo", "dpzero"):
        return dpzero_step(state, problem, batch, spec, cfg.q, cfg.lam, cfg.eta, cfg.radius, cfg.direction)
    if algorithm == "dpsgd":
        return dpsgd_step(state, problem, batch, spec, cfg.eta)
    if algorithm == "pazo-m":
        (pub,) = public_batches(public_ids, 1, cfg.public_batch_bprime, rng)
        return pazo_m_step(state, problem, batch, pub, cfg, spec)
    if algorithm in ("pazo-p", "pazo-pprime"):
        pubs = public_batches(public_ids, cfg.k, cfg.public_batch_bprime, rng)
        return pazo_p_step(state, problem, batch, pubs, cfg, spec)
    if algorithm == "pazo-s":
        pubs = public_batches(public_ids, cfg.k, cfg.public_batch_bprime, rng)
        return pazo_s_step(state, problem, batch, pubs, cfg, spec)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def _checkpoint(problem, x, t, split, gamma_so_far, selected) -> Checkpoint:
    train_loss = problem.mean_loss(x, split.private)
    test_loss = problem.mean_loss(x, split.test)
    acc = problem.accuracy(x, split.test)
    grad_norm = float(np.linalg.norm(problem.mean_grad(x, split.private)))
    gamma = max(gamma_so_far, gradient_gap(problem, x, split.private, split.public))
    return Checkpoint(t, train_loss, test_loss, acc, grad_norm, gamma, selected, tuple(float(v) for v in x))


def run_training(problem: Problem, split, algorithm: str, cfg, spec: PrivacySpec, T: int, eval_every: int = 10,
                 seed: int = 0, x0=None, on_checkpoint=None, sampling: str = "poisson") -> RunRecord:
    """Run ``T`` iterations and evaluate every ``eval_every`` steps and at the end.

    Wall-clock is measured around the step only. The full private gradient
    norm and gamma are evaluation-only and never feed back into training.
    ``on_checkpoint`` is called with each checkpoint as soon as it exists.
    """
    emit = on_checkpoint or (lambda ck: None)
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if spec.sigma is None:
        raise ValueError("privacy spec must be calibrated (sigma set) before training")
    if eval_every < 1:
        raise ValueError("eval_every must be >= 1")
    if sampling not in SAMPLERS:
        raise ValueError(f"sampling must be one of {SAMPLERS}")
    if sampling == "shuffle" and spec.sigma > 0:
        log.warning("fixed-size batches: the Poisson accountant is only approximate for this run")
    private_ids = np.asarray(split.private, dtype=np.intp)
    public_ids = np.asarray(split.public, dtype=np.intp)
    state = init_state(np.zeros(problem.dim) if x0 is None else x0, seed)
    record = RunRecord(algorithm=algorithm, sigma=spec.sigma, epsilon=spec.epsilon, seed=seed)
    ck = _checkpoint(problem, state.x, 0, split, 0.0, None)
    record.checkpoints.append(ck)
    emit(ck)
    gamma, selected = ck.gamma, None
    for t in range(T):
        start = time.perf_counter()
        try:
            state = one_step(algorithm, state, problem, private_ids, public_ids, cfg, spec, sampling)
        except NumericError as exc:
            log.error("run diverged at iteration %d: %s", t, exc)
            record.status = "diverged"
            break
        record.step_seconds.append(time.perf_counter() - start)
        record.ops.append(state.info.ops)
        if state.info.selected is not None:
            selected = state.info.selected
            record.selections.append(selected)
        if state.t % eval_every == 0 or state.t == T:
            ck = _checkpoint(problem, state.x, state.t, split, gamma, selected)
            gamma = ck.gamma
            record.checkpoints.append(ck)
            emit(ck)
            if not math.isfinite(ck.train_loss) or ck.train_loss > DIVERGENCE_LOSS:
                record.status = "diverged"
                break
    return record
