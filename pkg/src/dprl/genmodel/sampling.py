from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..tensornet import NonFiniteError
from ..tensornet import autodiff as ad
from .schedules import clamp_time
from .score import _col, _to_eps

MODES = ("sde", "ode", "ddpm_ancestral", "langevin")


class ChainError(FloatingPointError):
    def __init__(self, step):
        super().__init__(f"non-finite value at denoising step {step}")
        self.step = step


@dataclass
class SamplerConfig:
    """Reverse-time integration settings.

    ``eta`` scales the stochastic term; the effective diffusion coefficient is
    ``eta * sigma(t)**2`` so the Langevin part stays stable near t=0.  In
    ``langevin`` mode ``eta * sigma(t)**2`` is the per-level step size.
    ``min_std`` floors the per-step noise (used by denoising-MDP policies) and
    ``clip_denoised`` clamps the clean-sample estimate to a box.
    """

    num_steps: int = 20
    eta: float = 1.0
    mode: str = "ddpm_ancestral"
    min_std: float = 0.0
    clip_denoised: tuple | None = None
    time_grid: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.num_steps < 1:
            raise ValueError("num_steps must be a positive integer")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if self.mode not in MODES:
            raise ValueError(f"unknown sampler mode {self.mode!r}")
        if self.time_grid is None:
            self.time_grid = np.linspace(1.0, 0.0, self.num_steps + 1)
        grid = np.asarray(self.time_grid, dtype=np.float64)
        if (
            len(grid) != self.num_steps + 1
            or grid[0] != 1.0
            or grid[-1] != 0.0
            or np.any(np.diff(grid) >= 0)
        ):
            raise ValueError("time_grid must decrease strictly from 1 to 0 with num_steps+1 points")
        self.time_grid = grid


@dataclass
class DenoisingTrajectory:
    """Chain x^(1) ... x^(0) with the Gaussian transition used at each step."""

    times: np.ndarray
    states: list
    outputs: list
    noises: list
    means: list
    stds: list

    def __len__(self):
        return len(self.means)

    def log_prob(self):
        """Per-sample sum of per-step Gaussian log-densities, shape (B,)."""
        total = 0.0
        for k in range(len(self)):
            total = total + gaussian_logpdf(self.states[k + 1], self.means[k], self.stds[k])
        return total


def gaussian_logpdf(x, mean, std):
    """Diagonal Gaussian log-density summed over the last axis; std broadcasts."""
    std = np.broadcast_to(np.asarray(std, dtype=np.float64), np.shape(ad.value(x)))
    if np.any(std <= 0):
        raise ValueError("Gaussian transition std must be positive")
    z = (x - mean) / std
    return ad.vsum(-0.5 * ad.square(z) - np.log(std) - 0.5 * np.log(2 * np.pi), axis=-1)


def denoise_estimates(field, schedule, x, condition, t, params=None, guidance=None, clip_denoised=None):
    """Head output plus the implied (eps_hat, x0_hat, score_hat) at time t."""
    out = field.apply(x, condition, t, params)
    eps = _to_eps(out, field.head, schedule, x, t)
    a = _col(schedule.alpha(t), x)
    s = _col(schedule.sigma(t), x)
    if guidance is not None:
        score = -eps / s + guidance(ad.value(x), t)
        eps = -s * score
    x0 = (x - s * eps) / a
    if clip_denoised is not None:
        x0 = ad.clip(x0, *clip_denoised)
        eps = (x - a * x0) / s
    return out, eps, x0, -eps / s


def transition(field, schedule, cfg, x, condition, t, t_next, params=None, guidance=None):
    """Mean and std of x^(t_next) given x^(t) under the configured reverse step."""
    te = clamp_time(t)
    out, eps, x0, score = denoise_estimates(
        field, schedule, x, condition, te, params, guidance, cfg.clip_denoised
    )
    h = t - t_next
    sig_t = float(schedule.sigma(te))
    if cfg.mode in ("sde", "ode"):
        eta_t = 0.0 if cfg.mode == "ode" else cfg.eta * sig_t**2
        vel = float(schedule.alpha_dot(te)) * x0 + float(schedule.sigma_dot(te)) * eps
        mean = x - h * vel + (eta_t * h) * score
        std = np.sqrt(2.0 * eta_t * h)
    elif cfg.mode == "ddpm_ancestral":
        a_t, s_t = float(schedule.alpha(te)), sig_t
        a_s, s_s = float(schedule.alpha(t_next)), float(schedule.sigma(t_next))
        a_ts = a_t / a_s
        var_ts = max(s_t**2 - a_ts**2 * s_s**2, 0.0)
        mean = (a_ts * s_s**2 / s_t**2) * x + (a_s * var_ts / s_t**2) * x0
        std = np.sqrt(var_ts * s_s**2) / s_t
    else:  # langevin
        step = cfg.eta * sig_t**2
        mean = x + step * score
        std = np.sqrt(2.0 * step)
    return out, mean, max(float(std), cfg.min_std)


def sample(
    field,
    condition,
    schedule,
    cfg,
    rng,
    guidance=None,
    params=None,
    n=None,
    x_init=None,
    clip=None,
):
    """Integrate the reverse process from t=1 to t=0.

    Returns ``(x0, trajectory)``.  When ``params`` is a tape ``Var`` the
    returned sample is differentiable through every step (noise is held fixed).
    ``guidance(x, t)`` is an additive score offset; ``clip`` bounds only the
    final sample.
    """
    if n is None:
        n = 1 if condition is None or np.ndim(condition) < 2 else len(condition)
    x = rng.standard_normal((n, field.x_dim)) if x_init is None else np.array(x_init, dtype=np.float64)
    grid = cfg.time_grid
    states, outputs, noises, means, stds = [ad.value(x)], [], [], [], []
    for k in range(cfg.num_steps):
        if ad.tracked(params):
            out, mean, std = _tracked_step(k, field, schedule, cfg, x, condition, grid, params, guidance)
        else:
            out, mean, std = transition(field, schedule, cfg, x, condition, grid[k], grid[k + 1], params, guidance)
        z = rng.standard_normal((n, field.x_dim)) if std > 0 else np.zeros((n, field.x_dim))
        x = mean + std * z
        xv = ad.value(x)
        if not np.all(np.isfinite(xv)):
            raise ChainError(k)
        states.append(xv)
        outputs.append(ad.value(out))
        noises.append(z)
        means.append(ad.value(mean))
        stds.append(std)
    traj = DenoisingTrajectory(grid.copy(), states, outputs, noises, means, stds)
    if clip is not None:
        x = ad.clip(x, *clip)
    return x, traj


def _tracked_step(k, field, schedule, cfg, x, condition, grid, params, guidance):
    """One differentiable transition wrapped as a single tape node.

    Its backward replays the step's own sub-tape so that a non-finite gradient
    can be reported with the index of the denoising step that produced it.
    """
    xl = ad.Var(ad.value(x), requires_grad=True)
    pl = ad.Var(ad.value(params), requires_grad=True)
    try:
        out, mean, std = transition(field, schedule, cfg, xl, condition, grid[k], grid[k + 1], pl, guidance)
    except NonFiniteError as err:
        raise ChainError(k) from err
    if not ad.tracked(mean):
        return out, mean, std

    def bw(g):
        xl.grad = pl.grad = None
        try:
            mean.backward(g)
        except NonFiniteError as err:
            raise ChainError(k) from err
        gx = np.zeros_like(xl.value) if xl.grad is None else xl.grad
        gp = np.zeros_like(pl.value) if pl.grad is None else pl.grad
        if not (np.all(np.isfinite(gx)) and np.all(np.isfinite(gp))):
            raise ChainError(k)
        return gx, gp

    return ad.value(out), ad._node(ad.value(mean), (x, params), bw), std


def langevin_step(x, score, step_size, rng, noise=None):
    if step_size < 0:
        raise ValueError("step_size must be nonnegative")
    if noise is None:
        noise = rng.standard_normal(np.shape(x))
    return x + step_size * score + np.sqrt(2.0 * step_size) * noise
