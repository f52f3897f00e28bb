"""Performance profiles, seed aggregation, sweeps and plot emission."""
from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ConfigError, get_path, make_config, set_path
from .runner import metric_curve, train

# Normalizers as (low, high).  Simulator entries mirror the published
# max-return table (low 0); toy entries bracket a random and a perfect policy.
RETURN_RANGES = {
    "Ant-v5": (0.0, 6000.0),
    "HalfCheetah-v5": (0.0, 11000.0),
    "Hopper-v5": (0.0, 4000.0),
    "Humanoid-v5": (0.0, 6000.0),
    "Swimmer-v5": (0.0, 150.0),
    "Walker2d-v5": (0.0, 6000.0),
    "pendulum": (-1600.0, 0.0),
    "bandit1d": (-2.25, 0.0),
    "bandit2d_multimodal": (-2.56, 0.0),
    "pointmass2d": (-50.0, 10.0),
}

GAUSSIAN_ALGOS = ("sac", "ppo")
DIFFUSION_SECTIONS = ("diffusion", "guidance", "dacer", "dpmd", "edp")


def normalize_return(ret, task, ranges=None):
    lo, hi = (ranges or RETURN_RANGES)[task]
    return (np.asarray(ret, dtype=np.float64) - lo) / (hi - lo)


def performance_profile(runs, thresholds, max_returns=None):
    """Fraction of (run, task) pairs whose normalized return is at least each threshold.

    ``runs`` is an iterable of ``(task, return)`` pairs.  ``max_returns`` maps a
    task to its max return (scalar) or a ``(low, high)`` range; it defaults to
    :data:`RETURN_RANGES`.
    """
    runs = list(runs)
    if not runs:
        raise ValueError("performance profile needs at least one run")
    ranges = {}
    for task, val in (max_returns or RETURN_RANGES).items():
        ranges[task] = tuple(val) if np.ndim(val) else (0.0, float(val))
    scores = np.array([normalize_return(r, task, ranges) for task, r in runs])
    taus = np.asarray(thresholds, dtype=np.float64)
    return np.array([(scores >= tau).mean() for tau in taus])


def aggregate(curves):
    """Mean and std across seeds of curves sharing an x grid; shorter curves are truncated."""
    n = min(len(y) for _, y in curves)
    x = curves[0][0][:n]
    ys = np.stack([y[:n] for _, y in curves])
    return x, ys.mean(axis=0), ys.std(axis=0)


def _run_one(args):
    cfg, run_dir = args
    return str(train(cfg, run_dir))


def _check_axis(base, axis, values):
    get_path(base, axis)
    if base["algo"] in GAUSSIAN_ALGOS and axis.split(".")[0] in DIFFUSION_SECTIONS:
        raise ConfigError(f"axis {axis!r} has no effect on the Gaussian algorithm {base['algo']!r}")
    cfgs = []
    for v in values:
        cfg = make_config(base=base)
        set_path(cfg, axis, v)
        try:
            cfgs.append(make_config(base=cfg))
        except (ConfigError, ValueError) as err:
            raise ConfigError(f"invalid value {v!r} for {axis!r}: {err}") from err
        if axis == "diffusion.steps" and (not isinstance(v, int) or v < 1):
            raise ConfigError("diffusion.steps values must be positive integers")
    return cfgs


def sweep(base, axis, values, seeds=(0,), root="runs/sweep", workers=1, metric="eval_return"):
    """Train every (value, seed) cell and aggregate the ``metric`` curves per value.

    Returns ``{value: {"frames", "mean", "std", "final", "run_dirs"}}``.
    """
    base = make_config(base=base)
    cfgs = _check_axis(base, axis, values)
    jobs, keys = [], []
    for v, cfg in zip(values, cfgs):
        for s in seeds:
            c = make_config(base=cfg)
            c["seed"] = s
            jobs.append((c, Path(root) / f"{axis.replace('.', '-')}={v}" / f"seed{s}"))
            keys.append(v)
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            dirs = list(ex.map(_run_one, jobs))
    else:
        dirs = [_run_one(j) for j in jobs]
    out = {}
    for v in values:
        ds = [Path(d) for d, k in zip(dirs, keys) if k == v]
        curves = [metric_curve(d / "metrics.csv", metric) for d in ds]
        if any(len(c[1]) == 0 for c in curves):
            out[v] = {"frames": np.zeros(0), "mean": np.zeros(0), "std": np.zeros(0), "final": [], "run_dirs": ds}
            continue
        x, m, sd = aggregate(curves)
        out[v] = {"frames": x, "mean": m, "std": sd, "final": [c[1][-1] for c in curves], "run_dirs": ds}
    return out


def write_curve_table(results, path, label="value"):
    """Long-format CSV: label, frame, mean, std."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow((label, "frame", "mean", "std"))
        for key, res in results.items():
            for f, m, s in zip(res["frames"], res["mean"], res["std"]):
                w.writerow((key, int(f), float(m), float(s)))
    return path


def plot_curves(results, path, title="", xlabel="frames", ylabel="return", label="value"):
    """Mean line with a one-std band per entry; writes the image plus a CSV of the data."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for key, res in results.items():
        x, m, s = res["frames"], res["mean"], res["std"]
        ax.plot(x, m, label=f"{label}={key}")
        ax.fill_between(x, m - s, m + s, alpha=0.25)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    write_curve_table(results, path.with_suffix(".csv"), label)
    return path


def plot_profile(thresholds, fractions_by_label, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for lab, frac in fractions_by_label.items():
        ax.step(thresholds, frac, where="post", label=lab)
    ax.set_xlabel("normalized score threshold")
    ax.set_ylabel("fraction of runs above threshold")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    with path.with_suffix(".csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("label", "threshold", "fraction"))
        for lab, frac in fractions_by_label.items():
            for tau, f in zip(thresholds, frac):
                w.writerow((lab, float(tau), float(f)))
    return path
