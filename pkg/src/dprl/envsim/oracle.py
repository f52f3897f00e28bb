from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid


@dataclass
class GridDensity:
    """Density values on a tensor grid over the action box."""

    axes: list
    values: np.ndarray

    def integral(self):
        out = self.values
        for ax in reversed(self.axes):
            out = trapezoid(out, ax, axis=-1)
        return float(out)

    def cell_masses(self):
        """Probability per grid cell, cells centred on grid points (edges at midpoints)."""
        m = self.values.copy()
        for i, ax in enumerate(self.axes):
            w = _cell_widths(ax)
            shape = [1] * m.ndim
            shape[i] = -1
            m = m * w.reshape(shape)
        return m / m.sum()

    def edges(self):
        return [_cell_edges(ax) for ax in self.axes]


def _cell_edges(ax):
    mid = 0.5 * (ax[1:] + ax[:-1])
    return np.concatenate([[ax[0]], mid, [ax[-1]]])


def _cell_widths(ax):
    return np.diff(_cell_edges(ax))


def optimal_policy_density(env, state, lam, reference="uniform", grid_points=1024, q_fn=None):
    """pi*(a|s) proportional to nu(a|s) exp(Q*(s, a)/lam) on a per-dimension grid.

    ``reference`` is ``"uniform"`` on the action box or a callable giving the
    (unnormalized) reference density at an (..., act_dim) array of actions.
    ``q_fn`` overrides the env's analytic Q*.
    """
    if lam <= 0:
        raise ValueError("temperature lambda must be positive")
    spec = env.spec
    axes = [np.linspace(spec.action_low, spec.action_high, grid_points) for _ in range(spec.act_dim)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    flat = mesh.reshape(-1, spec.act_dim)
    q = q_fn(flat) if q_fn is not None else env.q_star(np.broadcast_to(state, (len(flat), spec.obs_dim)), flat)
    logits = np.asarray(q, dtype=np.float64) / lam
    if reference == "uniform":
        log_nu = np.zeros(len(flat))
    elif callable(reference):
        log_nu = np.log(np.asarray(reference(flat), dtype=np.float64))
    else:
        raise ValueError(f"unsupported reference {reference!r}")
    logits = logits + log_nu
    dens = np.exp(logits - logits.max()).reshape(mesh.shape[:-1])
    out = GridDensity(axes, dens)
    out.values = dens / out.integral()
    return out


def tv_distance(samples, density):
    """Total variation between an empirical sample and a grid density, on the grid's cells."""
    samples = np.asarray(samples, dtype=np.float64).reshape(-1, len(density.axes))
    edges = density.edges()
    clipped = np.clip(samples, [e[0] for e in edges], [e[-1] for e in edges])
    hist, _ = np.histogramdd(clipped, bins=edges)
    hist = hist / len(samples)
    return 0.5 * float(np.abs(hist - density.cell_masses()).sum())
