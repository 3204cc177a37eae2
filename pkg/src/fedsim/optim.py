"""Client/server optimizers, learning-rate schedules, and weight noise.

Clients run plain SGD; the server runs either SGD on the aggregated
delta (treated literally) or Adam on it as a pseudo-gradient. Weight
noise (the federated variational-noise regularizer) perturbs the
parameters a gradient is computed at, with a per-(round, client, step)
deterministic stream.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .rng import substream

__all__ = [
    "SgdState",
    "AdamState",
    "sgd_step",
    "adam_step",
    "LrSchedule",
    "lr_at",
    "FvnConfig",
    "fvn_std_at",
    "fvn_perturb",
]


@dataclass(frozen=True)
class SgdState:
    lr: float

    def __post_init__(self):
        # zero is allowed so a no-op client pass stays expressible
        if self.lr < 0:
            raise ValueError(f"learning rate must be >= 0, got {self.lr}")


def sgd_step(state: SgdState, w: np.ndarray, g: np.ndarray) -> np.ndarray:
    if w.shape != g.shape:
        raise ValueError(f"shape mismatch: weights {w.shape} vs gradient {g.shape}")
    return w - state.lr * g


@dataclass(frozen=True)
class AdamState:
    """Adam with bias correction; m/v first and second moment vectors."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    m: np.ndarray = field(default_factory=lambda: np.zeros(0))
    v: np.ndarray = field(default_factory=lambda: np.zeros(0))
    t: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"learning rate must be > 0, got {self.lr}")
        for name, b in (("beta1", self.beta1), ("beta2", self.beta2)):
            if not 0.0 <= b < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {b}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")

    @classmethod
    def initial(cls, dim: int, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                epsilon: float = 1e-8) -> "AdamState":
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        return cls(lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon,
                   m=np.zeros(dim), v=np.zeros(dim), t=0)


def adam_step(state: AdamState, w: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, AdamState]:
    """One Adam step on gradient g; returns (new weights, new state)."""
    if w.shape != g.shape or w.shape != state.m.shape:
        raise ValueError(
            f"shape mismatch: weights {w.shape}, gradient {g.shape}, moments {state.m.shape}"
        )
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * (g * g)
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    w_next = w - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return w_next, replace(state, m=m, v=v, t=t)


@dataclass(frozen=True)
class LrSchedule:
    """constant | linear_rampup | rampup_then_expdecay, all positive."""

    kind: str
    base_lr: float
    rampup_rounds: int = 0
    decay_rate: float = 1.0
    decay_every: int = 1

    def __post_init__(self):
        if self.kind not in ("constant", "linear_rampup", "rampup_then_expdecay"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.base_lr <= 0:
            raise ValueError(f"base_lr must be > 0, got {self.base_lr}")
        if self.rampup_rounds < 0:
            raise ValueError(f"rampup_rounds must be >= 0, got {self.rampup_rounds}")
        if not 0.0 < self.decay_rate <= 1.0:
            raise ValueError(f"decay_rate must be in (0, 1], got {self.decay_rate}")
        if self.decay_every < 1:
            raise ValueError(f"decay_every must be >= 1, got {self.decay_every}")

    @classmethod
    def constant(cls, lr: float) -> "LrSchedule":
        return cls("constant", lr)

    @classmethod
    def linear_rampup(cls, lr: float, rampup_rounds: int) -> "LrSchedule":
        return cls("linear_rampup", lr, rampup_rounds=rampup_rounds)

    @classmethod
    def rampup_then_expdecay(cls, lr: float, rampup_rounds: int, decay_rate: float,
                             decay_every: int) -> "LrSchedule":
        return cls("rampup_then_expdecay", lr, rampup_rounds=rampup_rounds,
                   decay_rate=decay_rate, decay_every=decay_every)


def lr_at(schedule: LrSchedule, round_index: int) -> float:
    """Learning rate for a round; > 0 for every valid schedule."""
    if round_index < 0:
        raise ValueError(f"round index must be >= 0, got {round_index}")
    if schedule.kind == "constant":
        return schedule.base_lr
    if schedule.rampup_rounds > 0:
        ramped = schedule.base_lr * min(1.0, (round_index + 1) / schedule.rampup_rounds)
    else:
        ramped = schedule.base_lr
    if schedule.kind == "linear_rampup":
        return ramped
    steps = max(0, round_index - schedule.rampup_rounds) // schedule.decay_every
    return ramped * schedule.decay_rate ** steps


@dataclass(frozen=True)
class FvnConfig:
    """Per-client Gaussian weight noise with a scheduled std.

    ``transient`` keeps the noise out of the stored weights: each local
    step perturbs a copy for the gradient computation only. With
    transient=False the perturbation is baked into the weights before
    the step.
    """

    enabled: bool = False
    schedule_kind: str = "constant"
    std: float = 0.0
    std_max: float = 0.0
    ramp_rounds: int = 1
    transient: bool = True

    def __post_init__(self):
        if self.schedule_kind not in ("constant", "linear_ramp"):
            raise ValueError(f"unknown noise schedule {self.schedule_kind!r}")
        if self.std < 0 or self.std_max < 0:
            raise ValueError("noise std values must be >= 0")
        if self.ramp_rounds < 1:
            raise ValueError(f"ramp_rounds must be >= 1, got {self.ramp_rounds}")

    @classmethod
    def disabled(cls) -> "FvnConfig":
        return cls()

    @classmethod
    def constant(cls, std: float, transient: bool = True) -> "FvnConfig":
        return cls(enabled=True, schedule_kind="constant", std=std, transient=transient)

    @classmethod
    def linear_ramp(cls, std_max: float, ramp_rounds: int, transient: bool = True) -> "FvnConfig":
        return cls(enabled=True, schedule_kind="linear_ramp", std_max=std_max,
                   ramp_rounds=ramp_rounds, transient=transient)


def fvn_std_at(config: FvnConfig, round_index: int) -> float:
    """Noise std for a round: the constant, or a linear ramp to std_max."""
    if round_index < 0:
        raise ValueError(f"round index must be >= 0, got {round_index}")
    if not config.enabled:
        return 0.0
    if config.schedule_kind == "constant":
        return config.std
    return config.std_max * min(1.0, round_index / config.ramp_rounds)


def fvn_perturb(
    w: np.ndarray, std: float, seed: int, round_index: int, client_id: int, local_step: int
) -> np.ndarray:
    """w + N(0, std^2) elementwise from the (round, client, step) stream.

    std = 0 returns w itself, bit-identical, without touching any RNG.
    """
    if std < 0:
        raise ValueError(f"std must be >= 0, got {std}")
    if std == 0.0:
        return w
    rng = substream(seed, "fvn", round_index, client_id, local_step)
    return w + std * rng.standard_normal(w.shape[0])
