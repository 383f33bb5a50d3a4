"""Hierarchical state-space models for continuous sequence prediction."""

from .errors import *  # noqa: F401,F403
from .hierarchy import ChunkPlan, HissSpec, ModelSpec, chunk, cost_model, downsample, make_plan
from .layers import LayerStackSpec, init_stack, parameter_count, stack_forward

__version__ = "0.1.0"
