"""Minimal neural layer kit: numpy forward/backward passes plus Adam."""

from .gradcheck import finite_diff_gradcheck, relative_error
from .layers import (ELU, BatchNorm, Chain, Concat, Conv2d, GroupNorm, Linear,
                     Residual, Sigmoid, Swish, UpsampleNearest, conv_out_size)
from .params import (Param, ParamStore, adam_step, load_checkpoint,
                     save_checkpoint)

__all__ = [
    "Param", "ParamStore", "adam_step", "save_checkpoint", "load_checkpoint",
    "Conv2d", "Linear", "GroupNorm", "BatchNorm", "ELU", "Swish", "Sigmoid",
    "UpsampleNearest", "Residual", "Concat", "Chain", "conv_out_size",
    "finite_diff_gradcheck", "relative_error",
]
