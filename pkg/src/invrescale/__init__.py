"""Invertible arbitrary-scale image rescaling on a small numpy autodiff core."""

from .backbone import Backbone, BackboneConfig, DivergenceError, EncodingMode, param_count
from .config import TrainConfig
from .encoding import encode
from .pipeline import RescalingModel
from .resample import ResampleMethod, ScalePair, output_size, resample
from .splitting import merge, split
from .tensor import Tensor

__all__ = [
    "Backbone",
    "BackboneConfig",
    "DivergenceError",
    "EncodingMode",
    "RescalingModel",
    "ResampleMethod",
    "ScalePair",
    "Tensor",
    "TrainConfig",
    "encode",
    "merge",
    "output_size",
    "param_count",
    "resample",
    "split",
]

__version__ = "0.1.0"
