"""Run records produced by the training driver."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field


@dataclass(frozen=True)
class OpCount:
    """Operations spent in one iteration.

    A private forward is one batched loss evaluation over the private batch,
    except for DP-SGD where every per-sample forward/backward is counted.
    """

    private_forward: int = 0
    public_forward_backward: int = 0
    private_backward: int = 0

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.private_forward, self.public_forward_backward, self.private_backward)


@dataclass(frozen=True)
class Checkpoint:
    iteration: int
    train_loss: float
    test_loss: float
    test_accuracy: float | None
    grad_norm: float
    gamma: float
    selected: int | None
    x: tuple[float, ...]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunRecord:
    algorithm: str
    sigma: float
    epsilon: float | None
    seed: int
    checkpoints: list[Checkpoint] = field(default_factory=list)
    step_seconds: list[float] = field(default_factory=list)
    ops: list[OpCount] = field(default_factory=list)
    selections: list[int] = field(default_factory=list)
    status: str = "ok"
    config: dict = field(default_factory=dict)

    @property
    def final(self) -> Checkpoint:
        return self.checkpoints[-1]

    @property
    def gamma(self) -> float:
        return max((c.gamma for c in self.checkpoints), default=0.0)

    def trajectory(self):
        import numpy as np

        return [np.asarray(c.x) for c in self.checkpoints]
