"""Adam with bias correction and a half-cosine learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, NonFiniteGradientError


@dataclass
class AdamState:
    size: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)
    step: int = 0

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise InvalidArgumentError("betas must lie in [0, 1)")
        if self.m is None:
            self.m = np.zeros(self.size)
        if self.v is None:
            self.v = np.zeros(self.size)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray,
              rate: float) -> np.ndarray:
    """One Adam update; mutates ``state`` and returns the new parameters.

    Rejects non-finite gradients before touching any state so a bad step can
    be retried or surfaced without corrupting the moments.
    """
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise InvalidArgumentError("parameter/gradient/state shapes disagree")
    if rate <= 0.0:
        raise InvalidArgumentError(f"learning rate must be positive, got {rate}")
    if not np.all(np.isfinite(grads)):
        raise NonFiniteGradientError(state.step + 1)
    state.step += 1
    t = state.step
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1 ** t)
    v_hat = state.v / (1.0 - state.beta2 ** t)
    return params - rate * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass(frozen=True)
class CosineSchedule:
    """Constant rate until ``decay_start``, then half-cosine down to the floor.

    rate(t) = floor + (base - floor)/2 * (1 + cos(pi (t - T0)/(T - T0)))
    for T0 <= t <= T, so the schedule reaches exactly the floor at t = T.
    """

    base_rate: float
    floor_rate: float
    total_steps: int
    decay_start: int

    def __post_init__(self):
        if not (0 <= self.decay_start <= self.total_steps):
            raise InvalidArgumentError("need 0 <= decay_start <= total_steps")
        if self.floor_rate > self.base_rate:
            raise InvalidArgumentError("floor_rate must not exceed base_rate")

    def rate_at(self, t: int) -> float:
        if not (0 <= t <= self.total_steps):
            raise InvalidArgumentError(
                f"step {t} outside schedule range [0, {self.total_steps}]")
        if t < self.decay_start:
            return self.base_rate
        span = self.total_steps - self.decay_start
        if span == 0:
            return self.floor_rate
        phase = np.pi * (t - self.decay_start) / span
        return self.floor_rate + 0.5 * (self.base_rate - self.floor_rate) * (1.0 + np.cos(phase))


def default_schedule(total_steps: int, base_rate: float = 1e-3,
                     floor_rate: float = 1e-6) -> CosineSchedule:
    """Schedule with the shipped defaults: decay begins after 10% of training."""
    return CosineSchedule(base_rate=base_rate, floor_rate=floor_rate,
                          total_steps=total_steps,
                          decay_start=max(0, int(0.1 * total_steps)))


def save_adam_state(state: AdamState, path) -> None:
    """Moment vectors and step counter, checkpointable next to the network:
    int64 size | int64 step | float64 beta1, beta2, eps | float64 m | float64 v."""
    with open(path, "wb") as fh:
        fh.write(np.int64(state.size).tobytes())
        fh.write(np.int64(state.step).tobytes())
        fh.write(np.asarray([state.beta1, state.beta2, state.eps], "<f8").tobytes())
        fh.write(np.ascontiguousarray(state.m, "<f8").tobytes())
        fh.write(np.ascontiguousarray(state.v, "<f8").tobytes())


def load_adam_state(path) -> AdamState:
    with open(path, "rb") as fh:
        raw = fh.read()
    size = int(np.frombuffer(raw, "<i8", count=1)[0])
    step = int(np.frombuffer(raw, "<i8", count=1, offset=8)[0])
    b1, b2, eps = np.frombuffer(raw, "<f8", count=3, offset=16)
    m = np.frombuffer(raw, "<f8", count=size, offset=40).copy()
    v = np.frombuffer(raw, "<f8", count=size, offset=40 + 8 * size).copy()
    return AdamState(size=size, beta1=float(b1), beta2=float(b2), eps=float(eps),
                     m=m, v=v, step=step)
