"""Workflow layer: configs, training loop, evaluation, profiles, sweeps and the CLI."""
from .config import DEFAULTS, ConfigError, get_path, load_config, make_config, set_path
from .analysis import (
    RETURN_RANGES,
    aggregate,
    normalize_return,
    performance_profile,
    plot_curves,
    plot_profile,
    sweep,
    write_curve_table,
)
from .runner import (
    RUN_ROOT_ENV,
    MetricWriter,
    RunAborted,
    evaluate,
    load_checkpoint,
    metric_curve,
    oracle_tv,
    read_metrics,
    run_episodes,
    save_checkpoint,
    seed_streams,
    train,
)

__all__ = [n for n in dir() if not n.startswith("_")]
