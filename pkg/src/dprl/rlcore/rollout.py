from __future__ import annotations

import numpy as np


def gae(rewards, values, terminals, gamma, lam):
    """Generalized advantage estimation over a time-major rollout.

    ``values`` has one more entry along time than ``rewards``: the bootstrap
    value of the state after the last step.  Returns (advantages, returns).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    notdone = 1.0 - np.asarray(terminals, dtype=np.float64)
    if values.shape[0] != rewards.shape[0] + 1:
        raise ValueError("values must include the bootstrap value for the final state")
    adv = np.zeros_like(rewards)
    running = np.zeros_like(rewards[0])
    for t in range(len(rewards) - 1, -1, -1):
        delta = rewards[t] + gamma * notdone[t] * values[t + 1] - values[t]
        running = delta + gamma * lam * notdone[t] * running
        adv[t] = running
    return adv, adv + values[:-1]


def normalize(x, eps=1e-8):
    x = np.asarray(x, dtype=np.float64)
    return (x - x.mean()) / (x.std() + eps)


class RolloutBuffer:
    """Time-major on-policy storage of shape (T, num_envs, ...).

    Arbitrary per-action payloads (stored log-probs, denoising chains, Monte
    Carlo draws) go in ``extras`` keyed by name.
    """

    def __init__(self, gamma=0.99, gae_lambda=0.95, normalize_advantages=True):
        self.gamma = gamma
        self.gae_lambda = gae_lambda
        self.normalize_advantages = normalize_advantages
        self.clear()

    def clear(self):
        self.states, self.actions, self.rewards, self.values, self.terminals = [], [], [], [], []
        self.extras = {}
        self.advantages = None
        self.returns = None
        self.last_value = None

    def __len__(self):
        return len(self.rewards)

    def add(self, state, action, reward, value, terminal, **extras):
        if self.advantages is not None:
            raise RuntimeError("rollout already finalized; clear() before adding")
        self.states.append(np.asarray(state, dtype=np.float64))
        self.actions.append(np.asarray(action, dtype=np.float64))
        self.rewards.append(np.asarray(reward, dtype=np.float64))
        self.values.append(np.asarray(value, dtype=np.float64))
        self.terminals.append(np.asarray(terminal, dtype=bool))
        for k, v in extras.items():
            self.extras.setdefault(k, []).append(np.asarray(v))

    def finalize(self, last_value):
        """Compute advantages exactly once; later calls are rejected."""
        if self.advantages is not None:
            raise RuntimeError("advantages already computed for this rollout")
        self.last_value = np.asarray(last_value, dtype=np.float64)
        values = np.stack(self.values + [self.last_value])
        adv, ret = gae(np.stack(self.rewards), values, np.stack(self.terminals), self.gamma, self.gae_lambda)
        self.returns = ret
        self.advantages = normalize(adv) if self.normalize_advantages else adv
        return self.advantages, self.returns

    def flat(self):
        """Flatten (T, N) into a single batch axis; returns a dict of arrays."""
        if self.advantages is None:
            raise RuntimeError("finalize() the rollout first")
        out = {
            "state": np.stack(self.states),
            "action": np.stack(self.actions),
            "advantage": self.advantages,
            "return": self.returns,
            "value": np.stack(self.values),
        }
        for k, v in self.extras.items():
            out[k] = np.stack(v)
        return {k: v.reshape((-1,) + v.shape[2:]) for k, v in out.items()}
