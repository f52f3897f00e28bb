"""Diffusion/flow core: schedules, perturbation kernel, head conversions, losses, samplers."""
from .sampling import (
    MODES,
    ChainError,
    DenoisingTrajectory,
    SamplerConfig,
    denoise_estimates,
    gaussian_logpdf,
    langevin_step,
    sample,
    transition,
)
from .schedules import SCHEDULES, T_MIN, NoiseSchedule, clamp_time, make_schedule
from .score import (
    HEADS,
    ScoreField,
    SingularityError,
    conditional_score,
    convert,
    forward_perturb,
    matching_error,
    posterior_mean,
    sample_times,
    score_matching_loss,
)

__all__ = [
    "HEADS",
    "MODES",
    "SCHEDULES",
    "T_MIN",
    "ChainError",
    "DenoisingTrajectory",
    "NoiseSchedule",
    "SamplerConfig",
    "ScoreField",
    "SingularityError",
    "clamp_time",
    "conditional_score",
    "convert",
    "denoise_estimates",
    "forward_perturb",
    "gaussian_logpdf",
    "langevin_step",
    "make_schedule",
    "matching_error",
    "posterior_mean",
    "sample",
    "sample_times",
    "score_matching_loss",
    "transition",
]
