"""Reinforcement learning with diffusion and flow policies on toy control tasks."""

__version__ = "0.1.0"
