__version__ = "0.1.0"

from .codec import PEConfig, build_uv_grid, decode_pe, encode_pe, gamma
from .eds import EDSConfig, eds_weights
from .grid import CategoryTable, Field, IdMap, WeightMask
from .pipeline import FusionConfig, PanopticSeg, fuse

__all__ = [
    "PEConfig",
    "build_uv_grid",
    "decode_pe",
    "encode_pe",
    "gamma",
    "EDSConfig",
    "eds_weights",
    "CategoryTable",
    "Field",
    "IdMap",
    "WeightMask",
    "FusionConfig",
    "PanopticSeg",
    "fuse",
]
