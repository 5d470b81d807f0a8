from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)


def adam_update(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState) -> AdamState:
    """One bias-corrected Adam step.

    Parameter values are rebound to fresh arrays rather than written in place,
    so arrays captured by earlier graphs stay valid.
    """
    if len(params) != len(grads):
        raise ValueError(f"got {len(params)} params but {len(grads)} gradients")
    if not state.first_moment:
        state.first_moment = [np.zeros_like(p.values) for p in params]
        state.second_moment = [np.zeros_like(p.values) for p in params]
    if len(state.first_moment) != len(params):
        raise ValueError("optimizer state was built for a different parameter list")
    for p, g, m in zip(params, grads, state.first_moment):
        if g.shape != p.shape or m.shape != p.shape:
            raise ValueError(f"shape mismatch for {p.name or 'param'}: param {p.shape}, grad {g.shape}, moment {m.shape}")

    state.step_count += 1
    t = state.step_count
    corr1 = 1.0 - state.beta1**t
    corr2 = 1.0 - state.beta2**t
    for i, (p, g) in enumerate(zip(params, grads)):
        m = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g
        v = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * (g * g)
        m = m.astype(p.dtype, copy=False)
        v = v.astype(p.dtype, copy=False)
        state.first_moment[i] = m
        state.second_moment[i] = v
        step = (state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.epsilon)).astype(p.dtype, copy=False)
        p.values = p.values - step
    return state


class Adam:
    """Adam over a fixed parameter list, reading gradients from ``Tensor.grad``."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.values) for p in self.params]
        adam_update(self.params, grads, self.state)

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for i, (m, v) in enumerate(zip(self.state.first_moment, self.state.second_moment)):
            out[f"{prefix}.m.{i}"] = m
            out[f"{prefix}.v.{i}"] = v
        return out

    def load_state_arrays(self, prefix: str, arrays: dict[str, np.ndarray], step_count: int) -> None:
        n = len(self.params)
        if f"{prefix}.m.0" in arrays:
            self.state.first_moment = [arrays[f"{prefix}.m.{i}"] for i in range(n)]
            self.state.second_moment = [arrays[f"{prefix}.v.{i}"] for i in range(n)]
        self.state.step_count = step_count
