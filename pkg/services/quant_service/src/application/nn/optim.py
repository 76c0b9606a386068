from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from src.domain.models import TrainConfig


@dataclass
class AdamState:
    """First and second moment estimates of one parameter array."""

    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros_like(cls, param: np.ndarray) -> "AdamState":
        return cls(m=np.zeros_like(param), v=np.zeros_like(param))


def adam_step(
    param: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    t: int,
    cfg: TrainConfig,
) -> Tuple[np.ndarray, AdamState]:
    """
    One bias-corrected ADAM update.

    Args:
        param: Parameter array, updated in place.
        grad: Gradient of the loss with respect to `param`.
        state: Moment estimates, updated in place.
        t: Step index, starting at 1.
        cfg: Learning rate, betas and epsilon.
    Returns:
        The updated (param, state).
    """
    if t < 1:
        raise ValueError(f"ADAM step index starts at 1, got {t}")
    state.m *= cfg.beta1
    state.m += (1.0 - cfg.beta1) * grad
    state.v *= cfg.beta2
    state.v += (1.0 - cfg.beta2) * grad * grad
    m_hat = state.m / (1.0 - cfg.beta1**t)
    v_hat = state.v / (1.0 - cfg.beta2**t)
    param -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    return param, state


@dataclass
class AdamOptimizer:
    """ADAM over a fixed list of parameter arrays, keyed by position."""

    cfg: TrainConfig
    t: int = 0
    states: Dict[int, AdamState] = field(default_factory=dict)

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        self.t += 1
        for index, (param, grad) in enumerate(zip(params, grads)):
            state = self.states.get(index)
            if state is None:
                state = self.states[index] = AdamState.zeros_like(param)
            adam_step(param, grad, state, self.t, self.cfg)
