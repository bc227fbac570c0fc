"""Adam optimizer and the MSE training loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ArgumentError, TrainingError

__all__ = ["AdamState", "adam_step", "mse_loss"]


@dataclass
class AdamState:
    """First/second moment vectors plus step counter and hyperparameters."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, n: int, lr: float = 1e-5) -> "AdamState":
        return cls(np.zeros(n, dtype=np.float32), np.zeros(n, dtype=np.float32), lr=lr)

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.step,
                         self.lr, self.beta1, self.beta2, self.eps)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> None:
    """One bias-corrected Adam update, in place on the flat vectors."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ArgumentError(
            f"adam_step shape mismatch: params {params.shape}, grads {grads.shape}, "
            f"moments {state.m.shape}"
        )
    if not np.all(np.isfinite(grads)):
        raise TrainingError("non-finite gradient in adam_step")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    state.m += (1.0 - b1) * (grads - state.m)
    state.v += (1.0 - b2) * (grads * grads - state.v)
    m_hat = state.m / (1.0 - b1 ** state.step)
    v_hat = state.v / (1.0 - b2 ** state.step)
    params -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error (float64) and its gradient w.r.t. predictions."""
    pred = np.asarray(pred).reshape(-1)
    target = np.asarray(target).reshape(-1)
    if pred.shape != target.shape:
        raise ArgumentError(
            f"mse_loss length mismatch: {pred.shape} vs {target.shape}"
        )
    diff = pred.astype(np.float64) - target.astype(np.float64)
    loss = float(diff @ diff / diff.size)
    grad = (2.0 / diff.size) * diff
    return loss, grad.astype(pred.dtype, copy=False)
