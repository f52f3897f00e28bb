from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Optimizer:
    kind: str = "adam"
    step_size: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_grad_norm: float | None = None
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    t: int = 0

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")

    def state(self):
        return {"t": self.t, "m": self.m, "v": self.v}


def clip_grad_norm(grad, max_norm):
    norm = float(np.sqrt(np.dot(grad, grad)))
    if norm > max_norm > 0:
        return grad * (max_norm / norm)
    return grad


def optimizer_step(opt, params, grad):
    """Return updated params; advances the optimizer's moment state in place."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape:
        raise ValueError(f"shape mismatch: params {params.shape} vs grad {grad.shape}")
    if opt.max_grad_norm is not None:
        grad = clip_grad_norm(grad, opt.max_grad_norm)
    if opt.kind == "sgd":
        return params - opt.step_size * grad
    if opt.m is None or opt.m.shape != params.shape:
        opt.m = np.zeros_like(params)
        opt.v = np.zeros_like(params)
        opt.t = 0
    opt.t += 1
    opt.m = opt.beta1 * opt.m + (1.0 - opt.beta1) * grad
    opt.v = opt.beta2 * opt.v + (1.0 - opt.beta2) * grad * grad
    m_hat = opt.m / (1.0 - opt.beta1**opt.t)
    v_hat = opt.v / (1.0 - opt.beta2**opt.t)
    return params - opt.step_size * m_hat / (np.sqrt(v_hat) + opt.eps)


def ema_update(target, online, rate):
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"EMA rate must lie in [0, 1], got {rate}")
    target = np.asarray(target, dtype=np.float64)
    online = np.asarray(online, dtype=np.float64)
    if target.shape != online.shape:
        raise ValueError("target/online shape mismatch")
    return (1.0 - rate) * target + rate * online
