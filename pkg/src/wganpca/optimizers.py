"""Adam, RMSProp, weight clipping and the stepwise learning-rate schedule.

Steps are pure: they return new parameter arrays and a new state and leave the
inputs untouched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import DimensionError, DomainError


@dataclass(frozen=True)
class OptimizerState:
    kind: str
    step_count: int = 0
    m: tuple = ()
    v: tuple = ()
    beta1: float = 0.5
    beta2: float = 0.9
    rho: float = 0.9
    eps: float = 1e-8


def adam_state(params: Sequence[np.ndarray], beta1: float = 0.5, beta2: float = 0.9,
               eps: float = 1e-8) -> OptimizerState:
    zeros = tuple(np.zeros_like(p) for p in params)
    return OptimizerState("adam", 0, zeros, tuple(np.zeros_like(p) for p in params), beta1, beta2, eps=eps)


def rmsprop_state(params: Sequence[np.ndarray], rho: float = 0.9, eps: float = 1e-8) -> OptimizerState:
    return OptimizerState("rmsprop", 0, (), tuple(np.zeros_like(p) for p in params), rho=rho, eps=eps)


def _check(state_acc: tuple, params, grads):
    if len(params) != len(grads) or len(state_acc) != len(params):
        raise DimensionError("parameter, gradient and accumulator lists differ in length")
    for a, p, g in zip(state_acc, params, grads):
        if a.shape != p.shape or g.shape != p.shape:
            raise DimensionError(f"shape mismatch: param {p.shape}, grad {g.shape}, state {a.shape}")


def adam_step(state: OptimizerState, params, grads, lr: float):
    """One bias-corrected Adam descent step; returns ``(params, state)``."""
    params = [np.asarray(p, dtype=np.float64) for p in params]
    grads = [np.asarray(g, dtype=np.float64) for g in grads]
    _check(state.v, params, grads)
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new_p.append(p - lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, replace(state, step_count=t, m=tuple(new_m), v=tuple(new_v))


def rmsprop_step(state: OptimizerState, params, grads, lr: float):
    """``v <- rho v + (1 - rho) g^2``; ``p <- p - lr g / (sqrt(v) + eps)``."""
    params = [np.asarray(p, dtype=np.float64) for p in params]
    grads = [np.asarray(g, dtype=np.float64) for g in grads]
    _check(state.v, params, grads)
    new_p, new_v = [], []
    for p, g, v in zip(params, grads, state.v):
        v = state.rho * v + (1 - state.rho) * g * g
        new_p.append(p - lr * g / (np.sqrt(v) + state.eps))
        new_v.append(v)
    return new_p, replace(state, step_count=state.step_count + 1, v=tuple(new_v))


def optimizer_step(state: OptimizerState, params, grads, lr: float):
    if state.kind == "adam":
        return adam_step(state, params, grads, lr)
    if state.kind == "rmsprop":
        return rmsprop_step(state, params, grads, lr)
    raise DomainError(f"unknown optimizer kind {state.kind!r}")


def clip_weights(params, c: float) -> list[np.ndarray]:
    if c <= 0:
        raise DomainError("clip bound c must be positive")
    return [np.clip(np.asarray(p, dtype=np.float64), -c, c) for p in params]


@dataclass(frozen=True)
class LrSchedule:
    initial_lr: float = 1e-3
    decay_factor: float = 0.1
    decay_every_epochs: int = 5
    epoch_size_iters: int = 1

    def __post_init__(self):
        if self.initial_lr <= 0 or self.decay_factor <= 0:
            raise DomainError("initial_lr and decay_factor must be positive")
        if self.decay_every_epochs < 1 or self.epoch_size_iters < 1:
            raise DomainError("decay period must be at least one iteration")

    @classmethod
    def for_data(cls, n: int, batch: int, **kw) -> "LrSchedule":
        """Schedule whose epoch is ``ceil(n / batch)`` iterations."""
        return cls(epoch_size_iters=math.ceil(n / batch), **kw)


def lr_at(schedule: LrSchedule, it: int) -> float:
    if it < 0:
        raise DomainError("iteration must be >= 0")
    k = it // (schedule.decay_every_epochs * schedule.epoch_size_iters)
    return schedule.initial_lr * schedule.decay_factor ** k
