"""Experience storage and value learning shared by every algorithm."""
from .critic import AnalyticCritic, CriticEnsemble, bellman_target, critic_update, make_critic_optimizers
from .replay import ReplayBuffer
from .rollout import RolloutBuffer, gae, normalize

__all__ = [
    "AnalyticCritic",
    "CriticEnsemble",
    "ReplayBuffer",
    "RolloutBuffer",
    "bellman_target",
    "critic_update",
    "gae",
    "make_critic_optimizers",
    "normalize",
]
