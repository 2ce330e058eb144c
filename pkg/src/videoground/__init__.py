"""Desk-scale temporal sentence grounding with sentence-conditioned
modulation of a temporal convolution pyramid."""

from .autodiff import Tape, Tensor
from .config import ConditioningMode, ModelConfig, SynthConfig, TrainConfig, preset_config
from .model import GroundingModel
from .objective import Segment
from .synth import gen_synthetic, read_dataset, write_dataset

__version__ = "0.1.0"

__all__ = [
    "ConditioningMode",
    "GroundingModel",
    "ModelConfig",
    "Segment",
    "SynthConfig",
    "Tape",
    "Tensor",
    "TrainConfig",
    "gen_synthetic",
    "preset_config",
    "read_dataset",
    "write_dataset",
    "__version__",
]
