"""Guidance families for diffusion policies, Gaussian baselines and algorithm agents."""
from .agents import ALGORITHMS, FAMILY, OFF_POLICY, ON_POLICY, Agent, DiffusionAgent, OnPolicyAgent, SACAgent, make_agent
from .common import apply_update, clipped_surrogate, loss_and_grad, softmax_weights
from .onpolicy import (
    RATIO_CLAMP,
    PGConfig,
    chain_record,
    dppo_loss,
    dppo_ratios,
    dppo_step_logp,
    dppo_update,
    fpo_cfm_loss,
    fpo_draws,
    fpo_loss,
    fpo_ratios,
    fpo_update,
    ppo_loss,
    ppo_update,
    value_update,
)
from .policies import DiffusionPolicy, GaussianPolicy, GuidanceConfig, UniformPolicy, tanh_log_det
from .qguided import bon_candidates, bon_select, idem_intermediate_score, qsm_draws, qsm_loss, qsm_update
from .reparam import (
    EntropyTuner,
    bptt_loss,
    edp_action,
    edp_draws,
    edp_loss,
    edp_update,
    gmm_entropy,
    policy_entropy,
    reparam_bptt_update,
)
from .sac import alpha_gradient, sac_actor_loss, sac_update
from .weighted import (
    PROPOSALS,
    DPMDState,
    chain_kl_proxy,
    dpmd_step,
    truncated_kernel_samples,
    weighted_draws,
    weighted_loss,
    weighted_matching_update,
)

__all__ = [name for name in dir() if not name.startswith("_")]
