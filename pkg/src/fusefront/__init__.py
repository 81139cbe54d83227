"""Fusion of spectral (FBANK) and self-supervised speech features.

Modules: :mod:`spectral` (FBANK extraction), :mod:`ssl_source` (FEAT files and
synthetic SSL streams), :mod:`align`, :mod:`fusion` (linear, conv,
co-attention, mixture of experts), :mod:`diff` (backward passes, gradient
checks), :mod:`toytask`, :mod:`analysis` and :mod:`cli`.
"""

from .align import AlignParams, align_pair, downsample_sf, init_align, project_ssl
from .analysis import cerr, normalize_gates, round_percent, weight_summary
from .features import FeatureMatrix, Source
from .fusion import (
    FusionConfig,
    GateWeights,
    Theta,
    Variant,
    fuse,
    fuse_coattention,
    fuse_conv,
    fuse_linear,
    fuse_moe,
    gate_weights,
    init_fusion,
)
from .spectral import SpectralConfig, Waveform, extract_fbank

__all__ = [
    "AlignParams", "align_pair", "downsample_sf", "init_align", "project_ssl",
    "cerr", "normalize_gates", "round_percent", "weight_summary",
    "FeatureMatrix", "Source",
    "FusionConfig", "GateWeights", "Theta", "Variant", "fuse", "fuse_coattention",
    "fuse_conv", "fuse_linear", "fuse_moe", "gate_weights", "init_fusion",
    "SpectralConfig", "Waveform", "extract_fbank",
]

__version__ = "0.1.0"
