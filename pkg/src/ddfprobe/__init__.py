"""Frozen DDF layers, a reverse-mode autodiff core, hypervector algebra and a
perturbation probe for measuring disentanglement in small reconstruction hosts."""

__version__ = "0.1.0"

from .ddf import DDFLayer, ddf_forward, ddf_forward_with_override, ddf_hidden, ddf_init
from .errors import ContractError, DimensionError, NumericalError, TrainingError
from .hdc import (
    Codebook,
    HyperVector,
    bind,
    bundle,
    cosine,
    decode_value,
    encode_pairs,
    random_bipolar,
    random_codebook,
)
from .host import HostModel, TrainingLog, build_host, load_checkpoint, save_checkpoint, train
from .probe import (
    DeltaSchedule,
    NeuronProfile,
    ProbeReport,
    classify_neuron,
    compare_models,
    disentanglement_score,
    probe_model,
    sweep_neuron,
)
from .scenes import FactorScene, extract_factors, render, sample_scene
from .tensor import SGD, Parameter, Tensor, backward, no_grad

__all__ = [
    "Codebook", "ContractError", "DDFLayer", "DeltaSchedule", "DimensionError", "FactorScene",
    "HostModel", "HyperVector", "NeuronProfile", "NumericalError", "Parameter", "ProbeReport",
    "SGD", "Tensor", "TrainingError", "TrainingLog", "backward", "bind", "build_host", "bundle",
    "classify_neuron", "compare_models", "cosine", "ddf_forward", "ddf_forward_with_override",
    "ddf_hidden", "ddf_init", "decode_value", "disentanglement_score", "encode_pairs",
    "extract_factors", "load_checkpoint", "no_grad", "probe_model", "random_bipolar",
    "random_codebook", "render", "sample_scene", "save_checkpoint", "sweep_neuron", "train",
]
