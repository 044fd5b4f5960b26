"""Four-type edge detection (reflectance, illumination, normal, depth)."""

from rindnet.config import EDGE_TYPES, ModelConfig, TrainConfig
from rindnet.errors import (
    ConfigError,
    ContractError,
    DataError,
    DecodeError,
    LoadError,
    NumericError,
    ShapeError,
)


__all__ = [
    "EDGE_TYPES",
    "ModelConfig",
    "TrainConfig",
    "ConfigError",
    "ContractError",
    "DataError",
    "DecodeError",
    "LoadError",
    "NumericError",
    "ShapeError",
]
__version__ = "0.1.0"
