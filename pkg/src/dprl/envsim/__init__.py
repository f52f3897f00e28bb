"""Toy environments with analytic structure, optimal-policy oracles and offline datasets."""
from .dataset import (
    COLUMNS,
    SCHEMA_VERSION,
    generate_dataset,
    read_dataset,
    stack_records,
    uniform_behavior,
    write_dataset,
)
from .envs import (
    ENV_IDS,
    ActionBoundsError,
    Bandit,
    Bandit1D,
    Bandit2DMultimodal,
    Env,
    EnvSpec,
    Pendulum,
    PointMass2D,
    TabularMDP,
    TransitionRecord,
    make_env,
)
from .oracle import GridDensity, optimal_policy_density, tv_distance

__all__ = [
    "COLUMNS",
    "ENV_IDS",
    "SCHEMA_VERSION",
    "ActionBoundsError",
    "Bandit",
    "Bandit1D",
    "Bandit2DMultimodal",
    "Env",
    "EnvSpec",
    "GridDensity",
    "Pendulum",
    "PointMass2D",
    "TabularMDP",
    "TransitionRecord",
    "generate_dataset",
    "make_env",
    "optimal_policy_density",
    "read_dataset",
    "stack_records",
    "tv_distance",
    "uniform_behavior",
    "write_dataset",
]
