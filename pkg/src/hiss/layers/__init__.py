"""Causal sequence layers and flat stacks built from them."""

from .attention import attention_core, causal_attention, init_attention, sinusoidal_positions
from .lstm import init_lstm, lstm_forward, lstm_recurrence
from .scan import associative_scan, compose, sequential_scan
from .selective import SelectiveParams, selective_core, selective_scan
from .ssm import SsmParams, discretize, dssm_convolutional, dssm_kernel, dssm_recurrent
from .stack import KINDS, LayerStackSpec, apply_layer, init_stack, parameter_count, stack_forward

__all__ = [
    "KINDS", "LayerStackSpec", "SelectiveParams", "SsmParams", "apply_layer",
    "associative_scan", "attention_core", "causal_attention", "compose", "discretize",
    "dssm_convolutional", "dssm_kernel", "dssm_recurrent", "init_attention", "init_lstm",
    "init_stack", "lstm_forward", "lstm_recurrence", "parameter_count", "selective_core",
    "selective_scan", "sequential_scan", "sinusoidal_positions", "stack_forward",
]
