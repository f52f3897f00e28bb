from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tensornet import DenseNet, FourierTimeEmbedding, Var
from ..tensornet import autodiff as ad
from .schedules import T_MIN

HEADS = ("score", "epsilon", "velocity")


class SingularityError(ZeroDivisionError):
    pass


def _col(c, x):
    """Broadcast a per-sample coefficient (shape (B,)) against x of shape (B, d)."""
    c = np.asarray(c, dtype=np.float64)
    if c.ndim == 1 and np.ndim(ad.value(x)) == 2:
        return c[:, None]
    return c


def _coeffs(schedule, t, x):
    return (
        _col(schedule.alpha(t), x),
        _col(schedule.sigma(t), x),
        _col(schedule.alpha_dot(t), x),
        _col(schedule.sigma_dot(t), x),
    )


def _check_t(t):
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError(f"diffusion time must lie in [0, 1], got {t}")
    return t


def forward_perturb(schedule, x0, t, noise):
    t = _check_t(t)
    x0 = np.asarray(x0, dtype=np.float64)
    return _col(schedule.alpha(t), x0) * x0 + _col(schedule.sigma(t), x0) * noise


def conditional_score(schedule, x_t, x0, t):
    t = _check_t(t)
    sig = schedule.sigma(t)
    if np.any(sig <= 0.0):
        raise SingularityError("conditional score is singular at sigma(t)=0 (t=0)")
    x_t = np.asarray(x_t, dtype=np.float64)
    return -(x_t - _col(schedule.alpha(t), x_t) * x0) / _col(sig, x_t) ** 2


def posterior_mean(schedule, x_t, t, epsilon_pred):
    """Tweedie-style one-step estimate of the clean sample from an epsilon prediction."""
    a = schedule.alpha(t)
    if np.any(a < 1e-6):
        raise SingularityError(f"alpha(t) below 1e-6 at t={t}")
    return (x_t - _col(schedule.sigma(t), x_t) * epsilon_pred) / _col(a, x_t)


def _to_eps(out, head, schedule, x_t, t):
    a, s, ad_, sd = _coeffs(schedule, t, x_t)
    if head == "epsilon":
        return out
    if head == "score":
        return -s * out
    if head == "velocity":
        return (a * out - ad_ * x_t) / (a * sd - ad_ * s)
    raise ValueError(f"unknown head {head!r}")


def _from_eps(eps, head, schedule, x_t, t):
    a, s, ad_, sd = _coeffs(schedule, t, x_t)
    if head == "epsilon":
        return eps
    if head == "score":
        return -eps / s
    if head == "velocity":
        x0_hat = (x_t - s * eps) / a
        return ad_ * x0_hat + sd * eps
    raise ValueError(f"unknown head {head!r}")


def convert(head_output, src, dst, schedule, x_t, t):
    """Exact change of parameterization between score, epsilon and velocity heads.

    Works on plain arrays and on tape ``Var`` outputs alike.
    """
    for h in (src, dst):
        if h not in HEADS:
            raise ValueError(f"unknown head {h!r}")
    if np.any(schedule.sigma(np.asarray(t)) <= 0.0):
        raise SingularityError("head conversion is singular at sigma(t)=0")
    if src == dst:
        return head_output
    return _from_eps(_to_eps(head_output, src, schedule, x_t, t), dst, schedule, x_t, t)


@dataclass
class ScoreField:
    """State-conditioned network predicting a score, noise or velocity for x_t."""

    net: DenseNet
    x_dim: int
    condition_dim: int = 0
    time_embed: FourierTimeEmbedding | None = None
    head: str = "epsilon"

    def __post_init__(self):
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        emb = 0 if self.time_embed is None else self.time_embed.dim
        expected = self.x_dim + self.condition_dim + emb
        if self.net.in_dim != expected:
            raise ValueError(f"net input width {self.net.in_dim} != {expected}")
        if self.net.out_dim != self.x_dim:
            raise ValueError("output dimension must equal sample dimension")

    @classmethod
    def create(
        cls,
        x_dim,
        condition_dim=0,
        hidden=(256, 256, 256),
        activation="mish",
        embed_dim=64,
        head="epsilon",
        rng=None,
    ):
        emb = FourierTimeEmbedding(embed_dim) if embed_dim else None
        widths = [x_dim + condition_dim + (embed_dim or 0), *hidden, x_dim]
        return cls(DenseNet.init(widths, activation, rng), x_dim, condition_dim, emb, head)

    @property
    def params(self):
        return self.net.params

    def copy(self):
        return ScoreField(self.net.copy(), self.x_dim, self.condition_dim, self.time_embed, self.head)

    def features(self, x, condition, t):
        n = np.shape(ad.value(x))[0]
        parts = [x]
        if self.condition_dim:
            parts.append(np.broadcast_to(np.asarray(condition, dtype=np.float64), (n, self.condition_dim)))
        if self.time_embed is not None:
            tt = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))
            parts.append(self.time_embed(tt))
        return ad.concat(parts, axis=-1) if len(parts) > 1 else x

    def apply(self, x, condition, t, params=None):
        """Raw head output at (x, condition, t) for a batch x of shape (B, x_dim)."""
        return self.net.apply(self.features(x, condition, t), params)


def matching_error(field, out, target_score, schedule, x_t, t, weighting="head"):
    """Per-sample squared error between a head output and a target score.

    ``weighting`` picks the space the error is measured in:
    ``"none"`` - score space, exactly ||s_theta - s||^2;
    ``"eps"`` - noise space, i.e. sigma(t)^2 ||s_theta - s||^2;
    ``"head"`` - the field's own output space (eps for an epsilon head,
    velocity for a velocity head).  All three share the per-t minimizer.
    """
    if weighting == "none":
        pred = convert(out, field.head, "score", schedule, x_t, t)
        target = target_score
    elif weighting == "eps":
        pred = convert(out, field.head, "epsilon", schedule, x_t, t)
        target = convert(target_score, "score", "epsilon", schedule, x_t, t)
    elif weighting == "head":
        pred = out
        target = convert(target_score, "score", field.head, schedule, x_t, t)
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    return ad.vsum(ad.square(pred - target), axis=-1)


def sample_times(rng, n, t_min=T_MIN):
    return rng.uniform(t_min, 1.0 - t_min, size=n)


def score_matching_loss(field, batch, schedule, rng, weighting="head", params=None):
    """Conditional score matching on clean samples; returns (loss, param_grad).

    ``batch`` is ``(condition, x0)``; condition may be None for an
    unconditional field.
    """
    condition, x0 = batch
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim != 2 or len(x0) == 0:
        raise ValueError("score matching needs a non-empty (B, d) batch")
    n = len(x0)
    t = sample_times(rng, n)
    noise = rng.standard_normal(x0.shape)
    x_t = forward_perturb(schedule, x0, t, noise)
    target = -noise / schedule.sigma(t)[:, None]
    p = Var(field.params if params is None else params, requires_grad=True)
    out = field.apply(x_t, condition, t, p)
    loss = ad.mean(matching_error(field, out, target, schedule, x_t, t, weighting))
    loss.backward()
    return float(loss.value), p.grad
