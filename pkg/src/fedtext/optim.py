"""From-scratch optimizers, the warmup/decay schedule, and the proximal term.

Everything is functional: ``apply_step`` returns a fresh (state, weights) pair
so callers can keep or discard trajectories freely.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .models import LossGrad
from .params import ParamVector, require_same_layout

OPTIMIZER_KINDS = ("sgd", "adam")


@dataclass(frozen=True)
class Schedule:
    """Linear warmup to base_lr, then linear decay to zero at total_steps."""

    base_lr: float
    warmup_steps: int
    total_steps: int

    def __post_init__(self) -> None:
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")
        if self.total_steps <= self.warmup_steps:
            raise ValueError("total_steps must exceed warmup_steps")


def lr_at(sched: Schedule, step: int) -> float:
    if step < 0:
        raise ValueError("step must be >= 0")
    if step < sched.warmup_steps:
        return sched.base_lr * step / sched.warmup_steps
    if step <= sched.total_steps:
        return (
            sched.base_lr
            * (sched.total_steps - step)
            / (sched.total_steps - sched.warmup_steps)
        )
    return 0.0


@dataclass(frozen=True)
class ProximalTerm:
    """(mu / 2) * ||w - anchor||^2 added to the local objective."""

    mu: float
    anchor: ParamVector

    def __post_init__(self) -> None:
        if self.mu < 0:
            raise ValueError("mu must be >= 0")


def proximal_augment(lg: LossGrad, w: ParamVector, prox: ProximalTerm) -> LossGrad:
    """Add the proximal penalty and its gradient mu * (w - anchor)."""
    if prox.mu == 0.0:
        return lg
    require_same_layout(w, prox.anchor, "proximal_augment")
    require_same_layout(lg.grad, w, "proximal_augment")
    diff = w.values - prox.anchor.values
    loss = lg.loss + 0.5 * prox.mu * float(diff @ diff)
    grad = ParamVector(lg.grad.values + prox.mu * diff, lg.grad.layout)
    return LossGrad(loss=loss, grad=grad)


@dataclass(frozen=True)
class OptimizerState:
    """Per-worker optimizer state; accumulators share the weight layout."""

    kind: str
    step_count: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.kind not in OPTIMIZER_KINDS:
            raise ValueError(f"unknown optimizer kind {self.kind!r}")


def init_optimizer(kind: str, w: ParamVector) -> OptimizerState:
    if kind == "adam":
        return OptimizerState(kind="adam", m=np.zeros(w.size), v=np.zeros(w.size))
    return OptimizerState(kind=kind)


def apply_step(
    state: OptimizerState, w: ParamVector, grad: ParamVector, lr: float
) -> tuple[OptimizerState, ParamVector]:
    """One update; rejects non-finite gradients naming the bad segment."""
    require_same_layout(w, grad, "apply_step")
    grad.check_finite("gradient")
    if lr < 0:
        raise ValueError("learning rate must be >= 0")

    t = state.step_count + 1
    if state.kind == "sgd":
        new_values = w.values - lr * grad.values
        new_state = replace(state, step_count=t)
    else:
        m = state.beta1 * state.m + (1.0 - state.beta1) * grad.values
        v = state.beta2 * state.v + (1.0 - state.beta2) * grad.values**2
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        new_values = w.values - lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_state = replace(state, step_count=t, m=m, v=v)
    return new_state, ParamVector(new_values, w.layout)
