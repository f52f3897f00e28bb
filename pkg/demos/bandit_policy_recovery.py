"""Recover the KL-regularized optimal policy of a 1D bandit with two guidance families.

With Q*(a) = -(a - 0.5)^2 and a uniform reference, the target policy is
exp(Q*/lambda) restricted to [-1, 1].  Weighted matching (reverse-sampling
proposal) and Q-score matching are trained against the exact Q, then their
samples are compared with the quadrature density.

Run: python demos/bandit_policy_recovery.py
"""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from dprl.envsim import make_env, optimal_policy_density, tv_distance
from dprl.policyopt import DiffusionPolicy, GuidanceConfig, qsm_update, weighted_matching_update
from dprl.rlcore import AnalyticCritic
from dprl.tensornet import Optimizer

LAM = 0.1


def fresh(rng):
    return DiffusionPolicy.create(1, 1, hidden=(64, 64), embed_dim=16, num_steps=20, rng=rng)


def main():
    env = make_env("bandit1d")
    critic = AnalyticCritic(env.q_star)
    oracle = optimal_policy_density(env, np.ones(1), LAM)
    rng = np.random.default_rng(0)

    wm = fresh(rng)
    opt = Optimizer("adam", 1e-3)
    states = env.reset(rng, 256)
    for _ in range(500):
        weighted_matching_update(wm, critic, "reverse_sampling", {"state": states}, LAM, opt, rng,
                                 GuidanceConfig(num_reverse_samples=500))

    qsm = fresh(rng)
    opt = Optimizer("adam", 1e-3)
    for _ in range(500):
        qsm_update(qsm, critic, states[:64], LAM, 10, opt, rng)

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(oracle.axes[0], oracle.values, "k", label="optimal")
    for name, pol in [("weighted matching", wm), ("qsm", qsm)]:
        a = pol.act(env.reset(rng, 100_000), rng)[:, 0]
        print(f"{name:18s} TV {tv_distance(a, oracle):.3f}")
        ax.hist(a, bins=80, range=(-1, 1), density=True, histtype="step", label=name)
    ax.legend()
    fig.savefig("bandit_recovery.png", dpi=120)


if __name__ == "__main__":
    main()
