from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..genmodel import NoiseSchedule, SamplerConfig, ScoreField, sample
from ..tensornet import DenseNet, Var
from ..tensornet import autodiff as ad

FAMILIES = ("bon", "qvalue", "weighted", "reparam", "pg")
REFERENCES = ("uniform", "prev_policy", "dataset")

LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0


@dataclass
class GuidanceConfig:
    family: str = "weighted"
    lam: float = 0.1
    reference: str = "uniform"
    num_samples: int = 10
    num_reverse_samples: int = 500
    num_mc_samples: int = 8
    num_train_samples: int = 64
    num_behavior_samples: int = 2
    entropy_coef: float = 0.01
    clip_eps: float = 0.2
    target_kl: float = 2.5
    ref_refresh_interval: int = 1000

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown guidance family {self.family!r}")
        if self.reference not in REFERENCES:
            raise ValueError(f"unknown reference {self.reference!r}")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        counts = (self.num_samples, self.num_reverse_samples, self.num_mc_samples, self.num_train_samples)
        if min(counts) < 1:
            raise ValueError("sample counts must be at least 1")


@dataclass
class DiffusionPolicy:
    """State-conditioned diffusion model whose final sample is clipped to the action box."""

    field: ScoreField
    schedule: NoiseSchedule = field(default_factory=NoiseSchedule)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    action_low: float = -1.0
    action_high: float = 1.0

    @classmethod
    def create(
        cls,
        obs_dim,
        act_dim,
        hidden=(256, 256, 256),
        activation="mish",
        embed_dim=64,
        head="epsilon",
        schedule="cosine",
        num_steps=20,
        mode="sde",
        eta=1.0,
        min_std=0.0,
        rng=None,
    ):
        fld = ScoreField.create(act_dim, obs_dim, hidden, activation, embed_dim, head, rng)
        cfg = SamplerConfig(num_steps, eta, mode, min_std=min_std, clip_denoised=(-1.0, 1.0))
        return cls(fld, NoiseSchedule(schedule), cfg)

    @property
    def act_dim(self):
        return self.field.x_dim

    @property
    def params(self):
        return self.field.net.params

    @params.setter
    def params(self, value):
        self.field.net.params = value

    def copy(self):
        return DiffusionPolicy(self.field.copy(), self.schedule, self.sampler, self.action_low, self.action_high)

    def sample(self, states, rng, params=None, guidance=None):
        """Returns (actions, trajectory); differentiable when ``params`` is a Var."""
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        return sample(
            self.field, states, self.schedule, self.sampler, rng,
            guidance=guidance, params=params, n=len(states), clip=(self.action_low, self.action_high),
        )

    def act(self, states, rng):
        return self.sample(states, rng)[0]


@dataclass
class GaussianPolicy:
    """Diagonal Gaussian actor; optional tanh squashing and entropy temperature."""

    net: DenseNet
    act_dim: int
    squash: bool = True
    log_alpha: float = 0.0
    target_entropy: float | None = None

    def __post_init__(self):
        if self.net.out_dim != 2 * self.act_dim:
            raise ValueError("Gaussian head must emit mean and log-std per action dim")
        if self.target_entropy is None:
            self.target_entropy = -float(self.act_dim)

    @classmethod
    def create(cls, obs_dim, act_dim, hidden=(256, 256), activation="relu", squash=True, rng=None,
               init_log_std=0.0):
        net = DenseNet.init([obs_dim, *hidden, 2 * act_dim], activation, rng)
        w0, w1, b1, _, _ = net.param_layout[-1]
        net.params[w1 + act_dim:b1] = init_log_std
        return cls(net, act_dim, squash)

    @property
    def params(self):
        return self.net.params

    @params.setter
    def params(self, value):
        self.net.params = value

    @property
    def alpha(self):
        return float(np.exp(self.log_alpha))

    def copy(self):
        return GaussianPolicy(self.net.copy(), self.act_dim, self.squash, self.log_alpha, self.target_entropy)

    def dist(self, states, params=None):
        out = self.net.apply(np.atleast_2d(np.asarray(states, dtype=np.float64)), params)
        mean = out[:, : self.act_dim]
        log_std = ad.clip(out[:, self.act_dim:], LOG_STD_MIN, LOG_STD_MAX)
        return mean, log_std

    def sample(self, states, rng, params=None, deterministic=False, noise=None):
        """Reparameterized draw; returns (action, log_prob)."""
        mean, log_std = self.dist(states, params)
        if deterministic:
            u = mean
            noise = np.zeros(np.shape(ad.value(mean)))
        else:
            if noise is None:
                noise = rng.standard_normal(np.shape(ad.value(mean)))
            u = mean + ad.exp(log_std) * noise
        logp = ad.vsum(-0.5 * noise**2 - log_std - 0.5 * np.log(2 * np.pi), axis=-1)
        if not self.squash:
            return u, logp
        return ad.tanh(u), logp - ad.vsum(tanh_log_det(u), axis=-1)

    def log_prob(self, states, actions, params=None):
        mean, log_std = self.dist(states, params)
        actions = np.asarray(actions, dtype=np.float64)
        u = np.arctanh(np.clip(actions, -1 + 1e-12, 1 - 1e-12)) if self.squash else actions
        z = (u - mean) / ad.exp(log_std)
        logp = ad.vsum(-0.5 * ad.square(z) - log_std - 0.5 * np.log(2 * np.pi), axis=-1)
        if self.squash:
            logp = logp - np.sum(tanh_log_det(u), axis=-1)
        return logp

    def entropy(self, states, params=None):
        """Entropy of the pre-squash Gaussian."""
        _, log_std = self.dist(states, params)
        return ad.vsum(log_std + 0.5 * np.log(2 * np.pi * np.e), axis=-1)

    def act(self, states, rng, deterministic=False):
        a, _ = self.sample(states, rng, deterministic=deterministic)
        a = ad.value(a)
        return a if self.squash else np.clip(a, -1.0, 1.0)


@dataclass
class UniformPolicy:
    """Uniform actions on the box; the initial iterate pi^0 = nu of a mirror-descent run."""

    act_dim: int
    action_low: float = -1.0
    action_high: float = 1.0

    def copy(self):
        return UniformPolicy(self.act_dim, self.action_low, self.action_high)

    def sample(self, states, rng):
        n = len(np.atleast_2d(states))
        return rng.uniform(self.action_low, self.action_high, (n, self.act_dim)), None

    def act(self, states, rng):
        return self.sample(states, rng)[0]


def tanh_log_det(u):
    """log(1 - tanh(u)^2) in a form that stays finite for large |u|."""
    return 2.0 * (np.log(2.0) - u - ad.softplus(-2.0 * u))


def draw_actions(policy, states, rng):
    """Plain-array actions from any policy object."""
    out = policy.sample(states, rng)
    a = out[0] if isinstance(out, tuple) else out
    a = ad.value(a)
    if isinstance(policy, GaussianPolicy) and not policy.squash:
        a = np.clip(a, -1.0, 1.0)
    return a


def snapshot(policy):
    return policy.copy()


def params_var(policy):
    return Var(policy.params, requires_grad=True)
