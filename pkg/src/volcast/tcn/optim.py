"""Adadelta: per-coordinate step sizes from running RMS of gradients and updates."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


@dataclass
class AdadeltaState:
    rho: float = 0.95
    epsilon: float = 1e-6
    sq_grad: np.ndarray | None = None
    sq_update: np.ndarray | None = None
    steps: int = 0
    skipped: int = field(default=0)

    @classmethod
    def zeros_like(cls, params, rho=0.95, epsilon=1e-6) -> "AdadeltaState":
        params = np.asarray(params, dtype=float)
        return cls(rho, epsilon, np.zeros_like(params), np.zeros_like(params))


def adadelta_step(params, grads, state: AdadeltaState):
    """One update; returns ``(new_params, state)``.

    ``E[g^2] <- rho E[g^2] + (1 - rho) g^2``,
    ``dx = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g``,
    ``E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2``.
    A non-finite gradient leaves params and state untouched (logged, counted
    in ``state.skipped``).
    """
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if state.sq_grad is None:
        state.sq_grad = np.zeros_like(params)
        state.sq_update = np.zeros_like(params)
    if grads.shape != params.shape or state.sq_grad.shape != params.shape:
        raise ValueError("params, grads and optimizer state must share one shape")
    if not np.all(np.isfinite(grads)):
        state.skipped += 1
        logger.warning("non-finite gradient at step %d; update skipped", state.steps)
        return params, state
    rho, eps = state.rho, state.epsilon
    state.sq_grad = rho * state.sq_grad + (1.0 - rho) * grads * grads
    delta = -np.sqrt(state.sq_update + eps) / np.sqrt(state.sq_grad + eps) * grads
    state.sq_update = rho * state.sq_update + (1.0 - rho) * delta * delta
    state.steps += 1
    return params + delta, state
