"""Toy continuous-control tasks with known structure.

Every env is stateless: the caller passes the current state in and gets a
``TransitionRecord`` back.  States and actions may carry a leading batch axis,
which is how parallel rollouts are emulated.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tensornet import autodiff as ad

ENV_IDS = ("bandit1d", "bandit2d_multimodal", "pointmass2d", "pendulum")


class ActionBoundsError(ValueError):
    pass


@dataclass(frozen=True)
class EnvSpec:
    id: str
    obs_dim: int
    act_dim: int
    horizon: int
    gamma: float = 0.99
    reward_bound: float = 1.0
    action_low: float = -1.0
    action_high: float = 1.0


@dataclass
class TransitionRecord:
    state: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_state: np.ndarray
    terminal: np.ndarray
    truncated: np.ndarray


class Env:
    spec: EnvSpec

    @property
    def obs_dim(self):
        return self.spec.obs_dim

    @property
    def act_dim(self):
        return self.spec.act_dim

    def check_action(self, action):
        a = np.asarray(action, dtype=np.float64)
        if a.shape[-1] != self.spec.act_dim:
            raise ActionBoundsError(f"action width {a.shape[-1]} != {self.spec.act_dim}")
        if np.any(a < self.spec.action_low - 1e-12) or np.any(a > self.spec.action_high + 1e-12):
            raise ActionBoundsError("action outside [-1, 1]")
        return a

    def reset(self, rng, n=None):
        raise NotImplementedError

    def dynamics(self, state, action, rng):
        """Return (next_state, reward, terminal) for validated actions."""
        raise NotImplementedError

    def step(self, state, action, rng, t=0):
        """Advance one step; ``t`` is the index of this step within the episode."""
        state = np.asarray(state, dtype=np.float64)
        action = self.check_action(action)
        next_state, reward, terminal = self.dynamics(state, action, rng)
        terminal = np.broadcast_to(terminal, np.shape(reward)).copy()
        truncated = np.logical_and(~terminal, t + 1 >= self.spec.horizon)
        truncated = np.broadcast_to(truncated, np.shape(reward)).copy()
        return TransitionRecord(state, action, reward, next_state, terminal, truncated)


class Bandit(Env):
    """One-step task with a constant context and reward equal to an analytic Q*."""

    def _context(self, n):
        shape = (self.spec.obs_dim,) if n is None else (n, self.spec.obs_dim)
        return np.ones(shape)

    def reset(self, rng, n=None):
        return self._context(n)

    def q_star(self, state, action):
        raise NotImplementedError

    def dynamics(self, state, action, rng):
        reward = np.asarray(self.q_star(state, action), dtype=np.float64)
        return state.copy(), reward, np.ones(np.shape(reward), dtype=bool)


class Bandit1D(Bandit):
    def __init__(self, center=0.5):
        self.center = center
        self.spec = EnvSpec("bandit1d", obs_dim=1, act_dim=1, horizon=1, reward_bound=(1 + abs(center)) ** 2)

    def q_star(self, state, action):
        """-(a - c)^2; accepts tape Vars so it can act as a differentiable critic."""
        return -ad.vsum(ad.square(action - self.center), axis=-1)


class Bandit2DMultimodal(Bandit):
    """Two equal-depth quadratic bowls centred at (+-0.6, 0)."""

    def __init__(self, goal_x=0.6):
        self.goals = np.array([[-goal_x, 0.0], [goal_x, 0.0]])
        bound = float(np.max([np.sum((np.array(c) - g) ** 2) for c in [(1, 1), (-1, 1)] for g in self.goals]))
        self.spec = EnvSpec("bandit2d_multimodal", obs_dim=1, act_dim=2, horizon=1, reward_bound=bound)

    def q_star(self, state, action):
        d0 = ad.vsum(ad.square(action - self.goals[0]), axis=-1)
        d1 = ad.vsum(ad.square(action - self.goals[1]), axis=-1)
        return -ad.minimum(d0, d1)

    def mode_of(self, actions):
        """0 for the left bowl, 1 for the right one."""
        return (np.asarray(actions)[..., 0] > 0).astype(int)


class PointMass2D(Env):
    """Position integrates the commanded velocity; two mirror-image goals.

    Reward is minus the distance to the nearest goal; reaching a goal ends the
    episode with a bonus.
    """

    def __init__(self, dt=0.1, goal=(0.8, 0.8), goal_radius=0.1, start_mean=(0.0, 0.0), start_std=0.05,
                 horizon=50, bonus=10.0):
        self.dt = dt
        self.goals = np.array([[-goal[0], goal[1]], [goal[0], goal[1]]])
        self.goal_radius = goal_radius
        self.start_mean = np.asarray(start_mean, dtype=np.float64)
        self.start_std = start_std
        self.bonus = bonus
        self.bounds = 2.0
        self.spec = EnvSpec("pointmass2d", obs_dim=2, act_dim=2, horizon=horizon,
                            reward_bound=2 * np.sqrt(2) * self.bounds + bonus)

    def reset(self, rng, n=None):
        shape = (2,) if n is None else (n, 2)
        return self.start_mean + self.start_std * rng.standard_normal(shape)

    def goal_distance(self, pos):
        d = np.linalg.norm(pos[..., None, :] - self.goals, axis=-1)
        return d.min(axis=-1)

    def dynamics(self, state, action, rng):
        nxt = np.clip(state + self.dt * action, -self.bounds, self.bounds)
        dist = self.goal_distance(nxt)
        done = dist < self.goal_radius
        reward = -dist + self.bonus * done
        return nxt, reward, done


class Pendulum(Env):
    """Swing-up: observation (cos th, sin th, thdot), torque = max_torque * action."""

    def __init__(self, g=10.0, m=1.0, length=1.0, dt=0.05, max_speed=8.0, max_torque=2.0, horizon=200):
        self.g, self.m, self.l, self.dt = g, m, length, dt
        self.max_speed, self.max_torque = max_speed, max_torque
        bound = np.pi**2 + 0.1 * max_speed**2 + 0.001
        self.spec = EnvSpec("pendulum", obs_dim=3, act_dim=1, horizon=horizon, reward_bound=bound)

    @staticmethod
    def angle(state):
        return np.arctan2(state[..., 1], state[..., 0])

    def observe(self, theta, thdot):
        return np.stack([np.cos(theta), np.sin(theta), thdot], axis=-1)

    def reset(self, rng, n=None):
        shape = () if n is None else (n,)
        theta = rng.uniform(-np.pi, np.pi, shape)
        thdot = rng.uniform(-1.0, 1.0, shape)
        return self.observe(theta, thdot)

    def dynamics(self, state, action, rng):
        th = self.angle(state)
        thdot = state[..., 2]
        a = action[..., 0]
        reward = -(th**2 + 0.1 * thdot**2 + 0.001 * a**2)
        u = self.max_torque * a
        new_thdot = thdot + (3 * self.g / (2 * self.l) * np.sin(th) + 3.0 / (self.m * self.l**2) * u) * self.dt
        new_thdot = np.clip(new_thdot, -self.max_speed, self.max_speed)
        new_th = th + new_thdot * self.dt
        return self.observe(new_th, new_thdot), reward, np.zeros(np.shape(reward), dtype=bool)


class TabularMDP(Env):
    """Finite MDP with one-hot observations; the action's sign picks one of two actions."""

    def __init__(self, transitions, rewards, gamma=0.9, horizon=100, start=0):
        self.P = np.asarray(transitions, dtype=int)  # (S, 2) -> next state
        self.R = np.asarray(rewards, dtype=np.float64)  # (S, 2)
        self.n_states = self.P.shape[0]
        self.start = start
        self.spec = EnvSpec("tabular", obs_dim=self.n_states, act_dim=1, horizon=horizon, gamma=gamma,
                            reward_bound=float(np.abs(self.R).max()))

    def one_hot(self, s):
        return np.eye(self.n_states)[s]

    def reset(self, rng, n=None):
        return self.one_hot(self.start if n is None else np.full(n, self.start))

    def dynamics(self, state, action, rng):
        s = np.argmax(state, axis=-1)
        a = (np.asarray(action)[..., 0] > 0).astype(int)
        return self.one_hot(self.P[s, a]), self.R[s, a], np.zeros(np.shape(s), dtype=bool)

    def value_iteration(self, tol=1e-12):
        q = np.zeros_like(self.R)
        while True:
            q_new = self.R + self.spec.gamma * q.max(axis=1)[self.P]
            if np.abs(q_new - q).max() < tol:
                return q_new
            q = q_new


def make_env(env_id, **kwargs):
    envs = {
        "bandit1d": Bandit1D,
        "bandit2d_multimodal": Bandit2DMultimodal,
        "pointmass2d": PointMass2D,
        "pendulum": Pendulum,
    }
    if env_id not in envs:
        raise ValueError(f"unknown env {env_id!r}; expected one of {ENV_IDS}")
    return envs[env_id](**kwargs)
