"""Learnable fusion of two aligned ``T x D`` feature streams.

Four operators share one calling convention ``op(f_sf, f_ssl, params)``:

* linear: concatenate per frame, project ``2D -> D``;
* conv: per-stream 1-D convolution over time (stride 1, zero "same" padding),
  then concatenate and project;
* co-attention: two parallel one-head cross-attention blocks with residual
  connections, then concatenate and project;
* mixture of experts: per-frame gate ``theta(f_sf @ W_MoE)`` weighting the two
  streams. The raw gate outputs are used as weights, so with ``LogSoftMax``
  the weights are log-probabilities (non-positive).

All operators accept extra leading batch axes, ``(..., T, D)``.
Setting ``bias=False`` at init gives the bias-free form (pure matrix products).
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigurationError, ShapeError
from .params import fan_in_uniform
from .rng import SplitMix64


class Variant(str, Enum):
    LINEAR = "linear"
    CONV = "conv"
    COATTENTION = "coattention"
    MOE = "moe"


class Theta(str, Enum):
    SOFTMAX = "softmax"
    LOGSOFTMAX = "logsoftmax"


def softmax(z, axis=-1):
    z = z - np.max(z, axis=axis, keepdims=True) if z.size else z
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(z, axis=-1):
    if not z.size:
        return z.copy()
    shifted = z - np.max(z, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def gate_function(theta):
    return softmax if Theta(theta) is Theta.SOFTMAX else log_softmax


@dataclass
class LinearFusionParams:
    W_cat: np.ndarray  # 2D x D
    b: np.ndarray = None


@dataclass
class ConvFusionParams:
    K_sf: np.ndarray  # k x D x D
    K_ssl: np.ndarray
    W_cat: np.ndarray
    b_sf: np.ndarray = None
    b_ssl: np.ndarray = None
    b: np.ndarray = None

    def __post_init__(self):
        for K in (self.K_sf, self.K_ssl):
            if K.ndim != 3 or K.shape[0] % 2 == 0:
                raise ConfigurationError(f"conv kernels must be (odd k) x D x D, got {K.shape}")

    @property
    def kernel_size(self):
        return self.K_sf.shape[0]


@dataclass
class CoAttentionParams:
    W_SF_Q: np.ndarray
    W_SF_K: np.ndarray
    W_SF_V: np.ndarray
    W_SSL_Q: np.ndarray
    W_SSL_K: np.ndarray
    W_SSL_V: np.ndarray
    W_out: np.ndarray  # 2D x D
    b_out: np.ndarray = None


@dataclass
class MoEParams:
    W_MoE: np.ndarray  # D x 2, column 0 -> SF, column 1 -> SSL
    theta: Theta = Theta.LOGSOFTMAX
    b_MoE: np.ndarray = None

    def __post_init__(self):
        self.theta = Theta(self.theta)
        if self.W_MoE.ndim != 2 or self.W_MoE.shape[1] != 2:
            raise ShapeError(f"W_MoE must be D x 2, got {self.W_MoE.shape}")


PARAM_TYPES = {
    Variant.LINEAR: LinearFusionParams,
    Variant.CONV: ConvFusionParams,
    Variant.COATTENTION: CoAttentionParams,
    Variant.MOE: MoEParams,
}


@dataclass(frozen=True)
class FusionConfig:
    """Hyperparameters, addressable as ``fusion.<field>`` keys."""

    variant: Variant = Variant.LINEAR
    dim: int = 80
    theta: Theta = Theta.LOGSOFTMAX
    kernel_size: int = 5
    bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "theta", Theta(self.theta))
        if self.dim < 1:
            raise ConfigurationError("fusion.dim must be >= 1")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigurationError("fusion.kernel_size must be odd and positive")

    @classmethod
    def from_mapping(cls, mapping):
        """Build from ``{"fusion.variant": ..., "fusion.dim": ...}`` style keys."""
        kwargs = {}
        for key, value in mapping.items():
            section, _, name = key.partition(".")
            if section != "fusion" or name not in cls.__dataclass_fields__:
                raise ConfigurationError(f"unknown config key {key!r}")
            kwargs[name] = value
        return cls(**kwargs)


def init_fusion(cfg, seed=0):
    """Fan-in uniform weights from ``seed``; biases start at zero."""
    D = cfg.dim
    rng = SplitMix64(seed).spawn(f"fusion/{cfg.variant.value}")
    zeros = (lambda: np.zeros(D)) if cfg.bias else (lambda: None)
    if cfg.variant is Variant.LINEAR:
        return LinearFusionParams(fan_in_uniform(rng, (2 * D, D), 2 * D), zeros())
    if cfg.variant is Variant.CONV:
        k = cfg.kernel_size
        return ConvFusionParams(
            K_sf=fan_in_uniform(rng, (k, D, D), k * D),
            K_ssl=fan_in_uniform(rng, (k, D, D), k * D),
            W_cat=fan_in_uniform(rng, (2 * D, D), 2 * D),
            b_sf=zeros(),
            b_ssl=zeros(),
            b=zeros(),
        )
    if cfg.variant is Variant.COATTENTION:
        mats = {
            name: fan_in_uniform(rng, (D, D), D)
            for name in ("W_SF_Q", "W_SF_K", "W_SF_V", "W_SSL_Q", "W_SSL_K", "W_SSL_V")
        }
        return CoAttentionParams(**mats, W_out=fan_in_uniform(rng, (2 * D, D), 2 * D), b_out=zeros())
    return MoEParams(
        W_MoE=fan_in_uniform(rng, (D, 2), D),
        theta=cfg.theta,
        b_MoE=np.zeros(2) if cfg.bias else None,
    )


def _check_pair(f_sf, f_ssl):
    if f_sf.shape != f_ssl.shape:
        raise ShapeError(f"stream shapes differ: {f_sf.shape} vs {f_ssl.shape}")


def _affine(x, W, b):
    y = x @ W
    return y if b is None else y + b


def fuse_linear(f_sf, f_ssl, p):
    _check_pair(f_sf, f_ssl)
    return _affine(np.concatenate([f_sf, f_ssl], axis=-1), p.W_cat, p.b)


def pad_time(x, pad):
    widths = [(0, 0)] * (x.ndim - 2) + [(pad, pad), (0, 0)]
    return np.pad(x, widths)


def conv1d_same(x, K, b=None):
    """``y[t] = sum_j x[t + j - pad] @ K[j] (+ b)`` with zero padding, stride 1."""
    k = K.shape[0]
    pad = (k - 1) // 2
    T = x.shape[-2]
    xp = pad_time(x, pad)
    y = np.zeros(x.shape[:-1] + (K.shape[2],))
    for j in range(k):
        y += xp[..., j : j + T, :] @ K[j]
    return y if b is None else y + b


def fuse_conv(f_sf, f_ssl, p):
    _check_pair(f_sf, f_ssl)
    c_sf = conv1d_same(f_sf, p.K_sf, p.b_sf)
    c_ssl = conv1d_same(f_ssl, p.K_ssl, p.b_ssl)
    return _affine(np.concatenate([c_sf, c_ssl], axis=-1), p.W_cat, p.b)


def attention(q, k, v):
    """One-head scaled dot-product attention; returns ``(context, weights)``."""
    scores = q @ np.swapaxes(k, -1, -2) / np.sqrt(q.shape[-1])
    weights = softmax(scores)
    return weights @ v, weights


def coattention_contexts(f_sf, f_ssl, p):
    """``(h_SF, h_SSL, A_SF, A_SSL)``: residual context vectors and attention maps."""
    _check_pair(f_sf, f_ssl)
    if f_sf.shape[-1] == 0:
        raise ShapeError("co-attention needs D > 0")
    ctx_sf, a_sf = attention(f_sf @ p.W_SF_Q, f_ssl @ p.W_SSL_K, f_ssl @ p.W_SSL_V)
    ctx_ssl, a_ssl = attention(f_ssl @ p.W_SSL_Q, f_sf @ p.W_SF_K, f_sf @ p.W_SF_V)
    return ctx_sf + f_sf, ctx_ssl + f_ssl, a_sf, a_ssl


def fuse_coattention(f_sf, f_ssl, p):
    h_sf, h_ssl, _, _ = coattention_contexts(f_sf, f_ssl, p)
    return _affine(np.concatenate([h_sf, h_ssl], axis=-1), p.W_out, p.b_out)


@dataclass
class GateWeights:
    """Per-frame expert weights, columns ``(w_SF, w_SSL)``.

    ``theta`` records the gate function that produced raw weights (None for
    other sources) so normalization knows whether to exponentiate.
    """

    w: np.ndarray
    normalized: bool = False
    theta: Theta = None

    @property
    def w_sf(self):
        return self.w[..., 0]

    @property
    def w_ssl(self):
        return self.w[..., 1]


def gate_logits(f_sf, p):
    return _affine(f_sf, p.W_MoE, p.b_MoE)


def gate_weights(f_sf, p):
    return GateWeights(gate_function(p.theta)(gate_logits(f_sf, p)), normalized=False, theta=p.theta)


def fuse_moe(f_sf, f_ssl, p):
    """Frame-wise ``w_SF * f_sf + w_SSL * f_ssl``; returns ``(fused, gates)``."""
    _check_pair(f_sf, f_ssl)
    g = gate_weights(f_sf, p)
    return g.w[..., 0:1] * f_sf + g.w[..., 1:2] * f_ssl, g


def _fuse_moe_output(f_sf, f_ssl, p):
    return fuse_moe(f_sf, f_ssl, p)[0]


FORWARD = {
    Variant.LINEAR: fuse_linear,
    Variant.CONV: fuse_conv,
    Variant.COATTENTION: fuse_coattention,
    Variant.MOE: _fuse_moe_output,
}


def check_params(variant, params):
    variant = Variant(variant)
    expected = PARAM_TYPES[variant]
    if not isinstance(params, expected):
        raise ConfigurationError(
            f"variant {variant.value!r} needs {expected.__name__}, got {type(params).__name__}"
        )
    return variant


def fuse(variant, f_sf, f_ssl, params):
    """Dispatch to the operator for ``variant``; returns the fused array."""
    try:
        variant = Variant(variant)
    except ValueError:
        raise ConfigurationError(f"unknown fusion variant {variant!r}") from None
    check_params(variant, params)
    return FORWARD[variant](f_sf, f_ssl, params)


def variant_of(params):
    for variant, cls in PARAM_TYPES.items():
        if isinstance(params, cls):
            return variant
    raise ConfigurationError(f"not a fusion parameter set: {type(params).__name__}")
