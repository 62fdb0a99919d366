"""Image-text fusion operators (element-wise, MCB, MUTAN) for VQA heads."""

from ._kernels import BACKEND
from .errors import (
    ConfigurationError,
    DimensionError,
    DivergenceError,
    FormatError,
    FusionBenchError,
    ParameterError,
    ValidationError,
    VersionError,
)
from .fusion import (
    FusionKind,
    McbConfig,
    MutanParams,
    fuse_elementwise,
    fuse_mcb,
    fuse_mutan,
    fusion_vjp,
    init_mutan,
    make_mcb_config,
)
from .numtensor import Rng
from .sketch import SketchSpec, apply_sketch, make_sketch, outer_sketch_oracle
from .vqahead import ModelSpec, build_model, count_params, forward, load_model, save_model

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ConfigurationError", "DimensionError", "DivergenceError", "FormatError", "FusionBenchError",
    "ParameterError", "ValidationError", "VersionError", "FusionKind", "McbConfig", "MutanParams",
    "fuse_elementwise", "fuse_mcb", "fuse_mutan", "fusion_vjp", "init_mutan", "make_mcb_config", "Rng",
    "SketchSpec", "apply_sketch", "make_sketch", "outer_sketch_oracle", "ModelSpec", "build_model",
    "count_params", "forward", "load_model", "save_model",
]
