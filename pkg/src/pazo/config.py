"""Experiment configuration: flat ``section.key = value`` text files.

Example::

    # comments start with '#'
    problem.kind = logistic
    problem.dim = 100
    algorithm.name = pazo-m
    algorithm.eta = 4
    privacy.epsilons = 0.5, 1
    run.seeds = 0, 1, 2
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .optimizers import ALGORITHMS, SAMPLERS, make_config
from .problems import SHIFT_KINDS, SplitSpec

DEFAULT_EPSILONS = (0.1, 0.5, 1.0, 2.0, 3.0)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemSpec:
    kind: str = "logistic"
    dim: int = 20
    separation: float = 1.0
    mu_reg: float = 1e-3
    intrinsic_dim: int | None = None
    condition: float = 1.0
    ambient_noise: float = 0.0
    mu: float = 1.0
    L: float = 1.0
    center_spread: float = 0.5
    path: str | None = None
    header: bool = False


@dataclass(frozen=True)
class SplitConfig:
    n_private: int = 2000
    n_public: int = 80
    n_test: int = 1000
    public_fraction: float | None = None
    shift_kind: str = "none"
    shift: float = 0.0
    ratio: tuple[float, float] = (1.0, 1.0)
    seed: int | None = None  # None: the data seed follows the run seed

    def to_split_spec(self, seed: int) -> SplitSpec:
        param = self.ratio if self.shift_kind == "class_imbalance" else self.shift
        return SplitSpec(self.n_private, self.n_public, self.n_test, self.shift_kind, param,
                         seed if self.seed is None else self.seed, self.public_fraction)


@dataclass(frozen=True)
class PrivacyConfig:
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS
    delta: float | None = None  # None: 1 / n_private
    clip_C: float = 1.0
    batch_b: int = 64


@dataclass(frozen=True)
class RunConfig:
    T: int = 100
    eval_every: int = 10
    seeds: tuple[int, ...] = (0,)
    output_dir: str = "runs"
    sampling: str = "poisson"  # "shuffle" = fixed-size batches, accounting approximate


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    split: SplitConfig = field(default_factory=SplitConfig)
    privacy: PrivacyConfig = field(default_factory=PrivacyConfig)
    run: RunConfig = field(default_factory=RunConfig)
    params: tuple[tuple[str, object], ...] = ()

    @property
    def delta(self) -> float:
        if self.privacy.delta is not None:
            return self.privacy.delta
        return 1.0 / self.split.n_private

    def algorithm_config(self):
        return make_config(self.algorithm, **dict(self.params))

    def with_seeds(self, seeds) -> "ExperimentConfig":
        from dataclasses import replace

        return replace(self, run=replace(self.run, seeds=tuple(int(s) for s in seeds)))


_SECTIONS = {"problem": ProblemSpec, "split": SplitConfig, "privacy": PrivacyConfig, "run": RunConfig}

# algorithm.<key> spellings -> config dataclass field names
_ALGO_KEYS = {
    "eta": "eta", "alpha": "alpha", "q": "q", "lambda": "lam", "k": "k",
    "public_batch": "public_batch_bprime", "perturb_scale": "perturb_scale",
    "direction": "direction", "radius": "radius",
}


def _to_bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(name: str, text: str, annotation: str):
    if text.lower() in ("none", "") and "None" in annotation:
        return None
    if annotation.startswith("tuple[float, float]"):
        parts = [p for p in text.replace(":", ",").split(",") if p.strip()]
        return tuple(float(p) for p in parts)
    if annotation.startswith("tuple[float"):
        return tuple(float(p) for p in text.split(",") if p.strip())
    if annotation.startswith("tuple[int"):
        return tuple(int(p) for p in text.split(",") if p.strip())
    if annotation.startswith("int"):
        return int(text)
    if annotation.startswith("float"):
        return float(text)
    if annotation.startswith("bool"):
        return _to_bool(text)
    return text


def _algo_value(key: str, text: str):
    if key == "direction":
        return text
    value = float(text)
    if key in ("q", "k", "public_batch_bprime"):
        if not value.is_integer():
            raise ValueError(f"algorithm.{key} must be an integer")
        return int(value)
    return value


def parse_text(text: str, source: str = "<config>") -> ExperimentConfig:
    raw: dict[str, dict[str, str]] = {s: {} for s in (*_SECTIONS, "algorithm")}
    unknown = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        section, _, name = key.partition(".")
        if section not in raw or not name:
            unknown.append(key)
            continue
        raw[section][name] = value

    values: dict[str, dict] = {}
    for section, cls in _SECTIONS.items():
        known = {f.name: str(f.type) for f in fields(cls)}
        values[section] = {}
        for name, text_value in raw[section].items():
            if name not in known:
                unknown.append(f"{section}.{name}")
                continue
            try:
                values[section][name] = _convert(name, text_value, known[name])
            except ValueError as exc:
                raise ConfigError(f"{section}.{name}: {exc}") from None

    algo = dict(raw["algorithm"])
    name = algo.pop("name", None)
    params = {}
    for key, text_value in algo.items():
        if key not in _ALGO_KEYS:
            unknown.append(f"algorithm.{key}")
            continue
        try:
            params[_ALGO_KEYS[key]] = _algo_value(_ALGO_KEYS[key], text_value)
        except ValueError as exc:
            raise ConfigError(f"algorithm.{key}: {exc}") from None
    if unknown:
        raise ConfigError("unknown config keys: " + ", ".join(sorted(unknown)))
    if name is None:
        raise ConfigError("algorithm.name is required")

    cfg = ExperimentConfig(
        algorithm=name,
        problem=ProblemSpec(**values["problem"]),
        split=SplitConfig(**values["split"]),
        privacy=PrivacyConfig(**values["privacy"]),
        run=RunConfig(**values["run"]),
        params=tuple(sorted(params.items())),
    )
    validate(cfg)
    return cfg


def parse_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_text(path.read_text(), str(path))


def _check(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def validate(cfg: ExperimentConfig) -> None:
    """Range checks; raises :class:`ConfigError` naming the violated bound."""
    _check(cfg.algorithm in ALGORITHMS, f"algorithm.name must be one of {', '.join(ALGORITHMS)}")
    p, s, pr, r = cfg.problem, cfg.split, cfg.privacy, cfg.run
    _check(p.kind in ("logistic", "quadratic", "csv"), "problem.kind must be logistic, quadratic or csv")
    _check(p.dim >= 1, "problem.dim must be >= 1")
    _check(p.kind != "csv" or p.path is not None, "problem.path is required for csv problems")
    _check(0 < p.mu <= p.L, "need 0 < problem.mu <= problem.L")
    _check(p.condition >= 1, "problem.condition must be >= 1")
    _check(p.intrinsic_dim is None or 1 <= p.intrinsic_dim <= p.dim, "problem.intrinsic_dim must lie in [1, dim]")
    _check(p.mu_reg >= 0 and p.separation >= 0 and p.ambient_noise >= 0 and p.center_spread >= 0,
           "problem.mu_reg, separation, ambient_noise and center_spread must be >= 0")
    _check(min(s.n_private, s.n_public, s.n_test) >= 1, "split counts must be >= 1")
    _check(s.public_fraction is None or 0 < s.public_fraction < 1, "split.public_fraction must lie in (0, 1)")
    _check(s.shift_kind in SHIFT_KINDS, f"split.shift_kind must be one of {', '.join(SHIFT_KINDS)}")
    _check(s.shift >= 0, "split.shift must be >= 0")
    _check(len(s.ratio) == 2 and min(s.ratio) >= 0 and max(s.ratio) > 0, "split.ratio needs two ratios >= 0")
    _check(len(pr.epsilons) >= 1, "privacy.epsilons must not be empty")
    for eps in pr.epsilons:
        _check(eps > 0, f"privacy.epsilons entries must be > 0, got {eps}")
    _check(pr.delta is None or 0 < pr.delta < 1, "privacy.delta must lie in (0, 1)")
    _check(pr.clip_C > 0 and not math.isinf(pr.clip_C), "privacy.clip_C must be a positive finite number")
    _check(1 <= pr.batch_b <= s.n_private, "privacy.batch_b must lie in [1, n_private]")
    _check(r.T >= 1, "run.T must be >= 1")
    _check(r.eval_every >= 1, "run.eval_every must be >= 1")
    _check(len(r.seeds) >= 1, "run.seeds must not be empty")
    _check(r.sampling in SAMPLERS, f"run.sampling must be one of {', '.join(SAMPLERS)}")
    try:
        cfg.algorithm_config()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"algorithm parameters: {exc}") from None


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize(cfg: ExperimentConfig) -> str:
    """Text form that :func:`parse_text` reads back to an equal config."""
    lines = []
    for section in ("problem", "split", "privacy", "run"):
        obj = getattr(cfg, section)
        for f in fields(obj):
            lines.append(f"{section}.{f.name} = {_fmt(getattr(obj, f.name))}")
    lines.append(f"algorithm.name = {cfg.algorithm}")
    reverse = {v: k for k, v in _ALGO_KEYS.items()}
    for key, value in cfg.params:
        lines.append(f"algorithm.{reverse[key]} = {_fmt(value)}")
    return "\n".join(lines) + "\n"
