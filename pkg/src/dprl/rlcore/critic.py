from __future__ import annotations

import numpy as np

from ..tensornet import DenseNet, Optimizer, Var, ema_update, optimizer_step
from ..tensornet import autodiff as ad


class CriticEnsemble:
    """Ensemble of Q(s, a) networks with EMA target copies.

    ``use_min`` selects the elementwise ensemble minimum (default) or the mean
    when critics are queried by actors.
    """

    def __init__(self, members, targets=None, use_min=True):
        self.members = list(members)
        self.targets = [m.copy() for m in self.members] if targets is None else list(targets)
        if len(self.targets) != len(self.members):
            raise ValueError("members and targets must have equal counts")
        self.use_min = use_min

    @classmethod
    def create(cls, obs_dim, act_dim, hidden=(256, 256), activation="relu", ensemble_size=2, rng=None,
               use_min=True):
        rng = np.random.default_rng() if rng is None else rng
        widths = [obs_dim + act_dim, *hidden, 1]
        return cls([DenseNet.init(widths, activation, rng) for _ in range(ensemble_size)], use_min=use_min)

    @property
    def ensemble_size(self):
        return len(self.members)

    def _nets(self, target):
        return self.targets if target else self.members

    def q_all(self, state, action, target=False):
        """Array of shape (E, B)."""
        x = np.concatenate([np.asarray(state, dtype=np.float64), np.asarray(action, dtype=np.float64)], -1)
        return np.stack([net.forward(x)[..., 0] for net in self._nets(target)])

    def q_min(self, state, action, target=False):
        return self.q_all(state, action, target).min(axis=0)

    def value(self, state, action, target=False):
        q = self.q_all(state, action, target)
        return q.min(axis=0) if self.use_min else q.mean(axis=0)

    def q(self, state, action, target=False):
        """Differentiable (in ``action``) ensemble-reduced Q, shape (B,)."""
        s = np.asarray(state, dtype=np.float64)
        x = ad.concat([np.broadcast_to(s, ad.value(action).shape[:-1] + s.shape[-1:]), action], axis=-1)
        outs = [net.apply(x)[..., 0] for net in self._nets(target)]
        red = outs[0]
        for o in outs[1:]:
            red = ad.minimum(red, o) if self.use_min else red + o
        return red if self.use_min else red * (1.0 / len(outs))

    def action_grad(self, state, action):
        a = Var(action, requires_grad=True)
        ad.vsum(self.q(state, a)).backward()
        return a.grad

    def snapshot(self):
        return CriticEnsemble([m.copy() for m in self.members], [t.copy() for t in self.targets], self.use_min)


class AnalyticCritic:
    """Critic interface around a known Q(s, a) written with tape-friendly ops."""

    def __init__(self, fn):
        self.fn = fn
        self.use_min = True

    def q(self, state, action, target=False):
        return self.fn(state, action)

    def value(self, state, action, target=False):
        return np.asarray(ad.value(self.fn(state, np.asarray(action, dtype=np.float64))))

    q_min = value

    def action_grad(self, state, action):
        a = Var(action, requires_grad=True)
        out = self.fn(state, a)
        if not ad.tracked(out):
            return np.zeros_like(a.value)
        ad.vsum(out).backward()
        return np.zeros_like(a.value) if a.grad is None else a.grad


def bellman_target(critics, batch, policy_sampler, gamma, rng, num_samples=1):
    """y = r + gamma (1 - terminal) min_j Q_targ_j(s', a'), a' drawn from the current policy.

    ``policy_sampler(states, rng)`` returns actions, or ``(actions, bonus)`` where
    ``bonus`` (e.g. an entropy term) is added to the target Q before discounting.
    """
    nxt = np.asarray(batch.next_state, dtype=np.float64)
    acc = np.zeros(len(nxt))
    for _ in range(num_samples):
        out = policy_sampler(nxt, rng)
        act, bonus = out if isinstance(out, tuple) else (out, 0.0)
        acc += critics.q_min(nxt, act, target=True) + bonus
    boot = acc / num_samples
    return np.asarray(batch.reward) + gamma * (1.0 - np.asarray(batch.terminal, dtype=np.float64)) * boot


def critic_update(critics, batch, targets, optimizers, ema_rate=0.005):
    """One regression step of every member toward shared targets, then EMA the targets."""
    x = np.concatenate([batch.state, batch.action], axis=-1)
    y = np.asarray(targets, dtype=np.float64)
    losses = []
    for i, net in enumerate(critics.members):
        p = Var(net.params, requires_grad=True)
        loss = ad.mean(ad.square(net.apply(x, p)[..., 0] - y))
        loss.backward()
        losses.append(float(loss.value))
        net.params = optimizer_step(optimizers[i], net.params, p.grad)
    for net, tgt in zip(critics.members, critics.targets):
        tgt.params = ema_update(tgt.params, net.params, ema_rate)
    return float(np.mean(losses))


def make_critic_optimizers(critics, lr=3e-4):
    return [Optimizer("adam", lr) for _ in critics.members]
