"""Bidirectional selective state-space models over 1D, 2D and 3D tensors."""
from .align import PadRecord, align_pad, align_trim, multiple_for
from .analysis import CostReport, bench, count_macs, count_params
from .ndconv import ConvSpec, conv1d, conv2d, conv3d, directional_path, same_padding
from .pipeline import BiMamba2NdModel, flip_tokens, forward, fuse, init_random
from .ssd import (
    Mamba2Config,
    Mamba2Weights,
    causal_conv,
    mamba2_forward,
    ssd_scan_chunked,
    ssd_scan_naive,
)

__version__ = "0.1.0"
