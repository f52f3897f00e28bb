from __future__ import annotations

import numpy as np

from ..tensornet import Var, optimizer_step
from ..tensornet import autodiff as ad


def loss_and_grad(loss_fn, params):
    """Evaluate ``loss_fn(Var)`` and return (float loss, gradient array)."""
    p = Var(params, requires_grad=True)
    loss = loss_fn(p)
    if ad.tracked(loss):
        loss.backward()
    g = np.zeros_like(p.value) if p.grad is None else p.grad
    return float(ad.value(loss)), g


def apply_update(model, loss_fn, optimizer):
    """One optimizer step on ``model.params``; returns the pre-step loss."""
    loss, g = loss_and_grad(loss_fn, model.params)
    if not np.isfinite(loss) or not np.all(np.isfinite(g)):
        raise FloatingPointError(f"non-finite loss or gradient (loss={loss})")
    model.params = optimizer_step(optimizer, model.params, g)
    return loss


def softmax_weights(logits, axis=None):
    """Self-normalized exp-weights that sum to one along ``axis``."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("Q/lambda overflowed; use a larger lambda")
    z = logits - logits.max(axis=axis, keepdims=True)
    w = np.exp(z)
    total = w.sum(axis=axis, keepdims=True)
    if np.any(total <= 0) or not np.all(np.isfinite(total)):
        raise FloatingPointError("all importance weights underflowed; use a larger lambda")
    return w / total


def repeat_states(states, k):
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    return np.repeat(states, k, axis=0)


def clipped_surrogate(ratio, adv, clip_eps):
    """PPO-style min(r A, clip(r) A), elementwise; ``clip_eps=None`` gives r A."""
    if clip_eps is None:
        return ratio * adv
    r_clip = ad.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    return ad.minimum(ratio * adv, r_clip * adv)


def minibatches(n, num_minibatches, rng):
    idx = rng.permutation(n)
    return [b for b in np.array_split(idx, num_minibatches) if len(b)]
