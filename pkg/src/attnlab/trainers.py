"""Full-batch training loops: plain gradient descent and the EM-like schedule.

Both engines take one forward pass per step and differ only in how the
resulting gradients are applied. The EM-like step moves values with the full
learning rate (routing frozen within the step) and moves W_Q, W_K, W_O and b
with a smaller routing rate.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np

from attnlab.diagnostics import accuracy, predictive_entropy
from attnlab.forward import AttentionParams, ForwardTrace, TaskInstance, forward
from attnlab.gradients import GradientSet, backward

log = logging.getLogger(__name__)

Mode = Literal["sgd", "em"]


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or ran away from its starting loss."""

    def __init__(self, message: str, log: "RunLog | None" = None):
        super().__init__(message)
        self.log = log


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 1000
    eta: float = 0.01
    eta_em_routing: float | None = None  # defaults to eta / 10
    mode: Mode = "sgd"
    seed: int = 0
    snapshot_every: int = 100
    divergence_factor: float = 10.0
    divergence_patience: int = 50

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.mode not in ("sgd", "em"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "em" and self.routing_eta <= 0:
            raise ValueError("eta_em_routing must be positive in EM mode")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be >= 1")

    @property
    def routing_eta(self) -> float:
        return self.eta / 10.0 if self.eta_em_routing is None else self.eta_em_routing

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eta_em_routing"] = self.routing_eta
        return d


@dataclass
class StepRecord:
    step: int
    loss: float  # mean per position, nats
    accuracy: float
    predictive_entropy: float
    attention_entropy_mean: float


@dataclass
class RunLog:
    config: TrainConfig
    records: list[StepRecord] = field(default_factory=list)
    snapshots: list[tuple[int, np.ndarray]] = field(default_factory=list)
    final_params: AttentionParams | None = None
    final_trace: ForwardTrace | None = None
    initial_trace: ForwardTrace | None = None

    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])


def _check_finite(trace: ForwardTrace) -> None:
    if not np.isfinite(trace.loss):
        raise DivergenceError(f"non-finite loss {trace.loss}")


def _apply(params: AttentionParams, grads: GradientSet, rates: dict[str, float]) -> AttentionParams:
    g = grads.param_grads()
    new = {}
    for name, value in params.as_dict().items():
        rate = rates[name]
        new[name] = value if rate == 0 else value - rate * g[name]
    return AttentionParams(**new)


def sgd_step(params: AttentionParams, task: TaskInstance, eta: float) -> tuple[AttentionParams, ForwardTrace]:
    """One gradient-descent step on every parameter. Returns the pre-update trace."""
    trace = forward(params, task)
    _check_finite(trace)
    grads = backward(params, task, trace, check_dual=False)
    rates = dict.fromkeys(("W_Q", "W_K", "W_V", "W_O", "b"), eta)
    return _apply(params, grads, rates), trace


def em_step(
    params: AttentionParams, task: TaskInstance, eta: float, eta_em_routing: float
) -> tuple[AttentionParams, ForwardTrace]:
    """One EM-like step.

    E-like: a forward pass gives the responsibilities ``Alpha`` and the
    upstream errors ``U``. M-like: values take ``dv_j = -eta * sum_i alpha_ij u_i``
    with routing frozen, realised through ``W_V -= eta * dV X^T``. Finally
    W_Q, W_K, W_O and b take a step of size ``eta_em_routing``. All updates
    come from the same trace.
    """
    trace = forward(params, task)
    _check_finite(trace)
    grads = backward(params, task, trace, check_dual=False)
    rates = {"W_V": eta, "W_Q": eta_em_routing, "W_K": eta_em_routing, "W_O": eta_em_routing, "b": eta_em_routing}
    return _apply(params, grads, rates), trace


def _record(step: int, trace: ForwardTrace, task: TaskInstance) -> StepRecord:
    return StepRecord(
        step=step,
        loss=trace.mean_loss,
        accuracy=accuracy(trace.Probs, task.y),
        predictive_entropy=predictive_entropy(trace.Probs),
        attention_entropy_mean=float(np.mean(trace.attention_entropy)),
    )


def train(params0: AttentionParams, task: TaskInstance, config: TrainConfig) -> RunLog:
    """Run ``config.steps`` full-batch steps, logging the pre-update metrics of each.

    Value snapshots ``V = W_V X`` are taken at step 0, every
    ``snapshot_every`` steps and after the final update.
    """
    run = RunLog(config=config)
    params = params0
    initial_loss = None
    over = 0
    for step in range(config.steps):
        if step % config.snapshot_every == 0:
            run.snapshots.append((step, params.W_V @ task.X))
        try:
            if config.mode == "sgd":
                params, trace = sgd_step(params, task, config.eta)
            else:
                params, trace = em_step(params, task, config.eta, config.routing_eta)
        except DivergenceError as err:
            raise DivergenceError(f"step {step}: {err}", run) from None
        run.records.append(_record(step, trace, task))
        if step == 0:
            run.initial_trace = trace
            initial_loss = trace.mean_loss
        over = over + 1 if trace.mean_loss > config.divergence_factor * initial_loss else 0
        if over >= config.divergence_patience:
            raise DivergenceError(
                f"loss above {config.divergence_factor}x its initial value for {over} consecutive steps "
                f"(step {step}, loss {trace.mean_loss:.4g})",
                run,
            )
    run.snapshots.append((config.steps, params.W_V @ task.X))
    run.final_params = params
    run.final_trace = forward(params, task)
    return run
