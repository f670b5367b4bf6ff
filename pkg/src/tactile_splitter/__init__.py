"""Tactile reconstruction from aligned RGB and near-infrared gel images."""

from .core import (
    ContractError,
    DepthMap,
    MultiModalFrame,
    NormalMap,
    decode_normals,
    encode_normals,
)
from .tensorio import TensorFormatError, load_tensor, save_tensor

__version__ = "0.1.0"

__all__ = [
    "ContractError",
    "DepthMap",
    "MultiModalFrame",
    "NormalMap",
    "TensorFormatError",
    "decode_normals",
    "encode_normals",
    "load_tensor",
    "save_tensor",
]
