"""AdamW with parameter-group rules, learning-rate schedule, train loop.

The optimizer treats the recurrence's own tensors (ν^log, γ^log, B — plus
θ^log and D, each configurable) as a separate group: they train with a
reduced learning rate (``lr_factor``) and are exempt from weight decay.
Membership is decided by the final component of the dotted parameter name,
so both a bare recurrent layer ({"nu_log": ...}) and a deep model
({"blocks.0.lru.nu_log": ...}) group correctly.

The schedule warms up linearly from 1e-7 to ``base_lr`` over the first
``warmup_frac`` of training, then cosine-anneals back down to 1e-7.
A "constant" mode (no warmup, no decay) serves the toy reproductions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .reporting import ExperimentReport
from .seeding import make_generator

__all__ = [
    "DivergenceError",
    "OptimConfig",
    "TrainState",
    "TrainTask",
    "init_train_state",
    "is_recurrent_param",
    "adamw_step",
    "lr_schedule",
    "train_loop",
    "max_eigen_magnitude",
    "sequence_mse",
    "softmax_cross_entropy",
]

_LR_FLOOR = 1e-7

_SCHEDULES = ("warmup_cosine", "constant")

_RECURRENT_LEAVES = frozenset({"nu_log", "gamma_log", "b_re", "b_im"})


class DivergenceError(RuntimeError):
    """Raised when gradients or losses stop being finite."""


@dataclass(frozen=True)
class OptimConfig:
    """AdamW + schedule hyper-parameters."""

    base_lr: float
    total_steps: int
    lr_factor: float = 1.0
    weight_decay: float = 0.0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    warmup_frac: float = 0.1
    schedule: str = "warmup_cosine"
    theta_in_recurrent_group: bool = True
    d_in_recurrent_group: bool = False

    def __post_init__(self) -> None:
        if self.base_lr <= 0:
            raise ValueError(f"base_lr must be positive, got {self.base_lr}")
        if self.total_steps < 0:
            raise ValueError(f"total_steps must be >= 0, got {self.total_steps}")
        if not 0.0 < self.lr_factor <= 1.0:
            raise ValueError(f"lr_factor must lie in (0, 1], got {self.lr_factor}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        b1, b2 = self.betas
        if not (0.0 < b1 < 1.0 and 0.0 < b2 < 1.0):
            raise ValueError(f"betas must lie in (0, 1), got {self.betas}")
        if self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not 0.0 <= self.warmup_frac <= 1.0:
            raise ValueError(f"warmup_frac must lie in [0, 1], got {self.warmup_frac}")
        if self.schedule not in _SCHEDULES:
            raise ValueError(
                f"schedule must be one of {_SCHEDULES}, got {self.schedule!r}"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "base_lr": self.base_lr,
            "total_steps": self.total_steps,
            "lr_factor": self.lr_factor,
            "weight_decay": self.weight_decay,
            "betas": list(self.betas),
            "eps": self.eps,
            "warmup_frac": self.warmup_frac,
            "schedule": self.schedule,
            "theta_in_recurrent_group": self.theta_in_recurrent_group,
            "d_in_recurrent_group": self.d_in_recurrent_group,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "OptimConfig":
        kwargs = dict(data)
        if "betas" in kwargs:
            kwargs["betas"] = tuple(kwargs["betas"])
        return cls(**kwargs)


def is_recurrent_param(name: str, cfg: OptimConfig) -> bool:
    """Reduced-lr / no-decay group membership, by trailing name component."""
    leaf = name.rsplit(".", 1)[-1]
    if leaf in _RECURRENT_LEAVES:
        return True
    if leaf == "theta_log":
        return cfg.theta_in_recurrent_group
    if leaf == "d":
        return cfg.d_in_recurrent_group
    return False


@dataclass
class TrainState:
    """Parameters plus Adam moment buffers."""

    params: dict[str, np.ndarray]
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    def validate(self) -> None:
        if self.step < 0:
            raise ValueError("step must be >= 0")
        for buf_name, buf in (("m", self.m), ("v", self.v)):
            if set(buf) != set(self.params):
                raise ValueError(f"{buf_name} buffers do not match parameter names")
            for k, p in self.params.items():
                if buf[k].shape != p.shape:
                    raise ValueError(
                        f"{buf_name}[{k!r}] shape {buf[k].shape} != {p.shape}"
                    )


def init_train_state(params: dict[str, np.ndarray]) -> TrainState:
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    return TrainState(
        params=params,
        m={k: np.zeros_like(v) for k, v in params.items()},
        v={k: np.zeros_like(v) for k, v in params.items()},
        step=0,
    )


def adamw_step(
    state: TrainState,
    grads: dict[str, np.ndarray],
    cfg: OptimConfig,
    lr: float,
) -> TrainState:
    """One decoupled-weight-decay Adam step (in place; returns the state).

    Gradients are checked for finiteness before any buffer is touched, so
    a rejected step leaves the state untouched.
    """
    missing = set(state.params) - set(grads)
    if missing:
        raise ValueError(f"missing gradients for: {sorted(missing)}")
    for name in state.params:
        if not np.all(np.isfinite(grads[name])):
            raise DivergenceError(f"non-finite gradient for {name!r}; step rejected")

    b1, b2 = cfg.betas
    t = state.step + 1
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for name, p in state.params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if is_recurrent_param(name, cfg):
            step_lr, decay = lr * cfg.lr_factor, 0.0
        else:
            step_lr, decay = lr, cfg.weight_decay
        p -= step_lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
        if decay:
            p -= step_lr * decay * p
    state.step = t
    return state


def lr_schedule(step: int, cfg: OptimConfig) -> float:
    """Learning rate at ``step`` ∈ [0, total_steps]."""
    if not 0 <= step <= cfg.total_steps:
        raise ValueError(f"step must lie in [0, {cfg.total_steps}], got {step}")
    if cfg.schedule == "constant":
        return cfg.base_lr
    warmup_steps = round(cfg.warmup_frac * cfg.total_steps)
    span = cfg.base_lr - _LR_FLOOR
    if step < warmup_steps:
        return _LR_FLOOR + span * step / warmup_steps
    remaining = cfg.total_steps - warmup_steps
    if remaining == 0:
        return cfg.base_lr if step == warmup_steps else _LR_FLOOR
    phase = (step - warmup_steps) / remaining
    return _LR_FLOOR + span * 0.5 * (1.0 + math.cos(math.pi * phase))


def max_eigen_magnitude(params: dict[str, np.ndarray]) -> float | None:
    """max |λ| over every recurrent layer found in a flat parameter dict."""
    mags = [
        float(np.exp(-np.exp(v)).max())
        for k, v in params.items()
        if k.rsplit(".", 1)[-1] == "nu_log"
    ]
    return max(mags) if mags else None


@dataclass
class TrainTask:
    """What the train loop needs from a task.

    ``value_and_grad(params, rng) -> (loss, grads)`` must be deterministic
    given the rng; the rng covers batch sampling and dropout.  ``config``
    is echoed into the report.
    """

    name: str
    params: dict[str, np.ndarray]
    value_and_grad: Callable[
        [dict[str, np.ndarray], np.random.Generator],
        tuple[float, dict[str, np.ndarray]],
    ]
    config: dict[str, Any] = field(default_factory=dict)


def train_loop(
    task: TrainTask,
    optim: OptimConfig,
    seed: int,
    log_every: int = 1,
) -> tuple[ExperimentReport, TrainState]:
    """Run the optimizer; returns (report, final state).

    The report's rows trace (step, loss, lr, max_abs_eigen); loss at row
    ``step`` is evaluated at the parameters *before* that step's update,
    so row 0 is the initial evaluation.  A non-finite loss aborts the run
    and flags the report as diverged instead of raising.
    """
    if log_every < 1:
        raise ValueError("log_every must be >= 1")
    state = init_train_state(task.params)
    root = make_generator(seed)
    rows: list[dict[str, Any]] = []
    diverged = False

    def log(step: int, loss: float, lr: float) -> None:
        if step % log_every == 0 or step == optim.total_steps:
            rows.append(
                {
                    "step": step,
                    "loss": loss,
                    "lr": lr,
                    "max_abs_eigen": max_eigen_magnitude(state.params),
                }
            )

    loss = math.nan
    for step in range(optim.total_steps):
        step_rng = root.spawn(1)[0]
        loss, grads = task.value_and_grad(state.params, step_rng)
        lr = lr_schedule(step, optim)
        log(step, loss, lr)
        if not math.isfinite(loss):
            diverged = True
            break
        try:
            adamw_step(state, grads, optim, lr)
        except DivergenceError:
            diverged = True
            break
    if not diverged:
        final_rng = root.spawn(1)[0]
        loss, _ = task.value_and_grad(state.params, final_rng)
        if not math.isfinite(loss):
            diverged = True
        log(optim.total_steps, loss, lr_schedule(optim.total_steps, optim))

    report = ExperimentReport(
        name=task.name,
        seed=seed,
        config={"task": task.config, "optim": optim.to_dict()},
        metrics={
            "final_loss": loss,
            "steps_run": state.step,
            "diverged": diverged,
            "max_abs_eigen": max_eigen_magnitude(state.params),
        },
        rows=rows,
        columns=["step", "loss", "lr", "max_abs_eigen"],
    )
    return report, state


def sequence_mse(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over every element; returns (loss, d loss/d pred)."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, (2.0 / diff.size) * diff


def softmax_cross_entropy(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy with integer labels; returns (loss, d loss/d logits)."""
    if logits.ndim != 2:
        raise ValueError(f"logits must be (batch, classes), got {logits.shape}")
    labels = np.asarray(labels)
    if labels.shape != (logits.shape[0],):
        raise ValueError(
            f"labels must be ({logits.shape[0]},), got {labels.shape}"
        )
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    log_probs = shifted - log_z
    batch = logits.shape[0]
    loss = float(-np.mean(log_probs[np.arange(batch), labels]))
    grad = np.exp(log_probs)
    grad[np.arange(batch), labels] -= 1.0
    return loss, grad / batch
