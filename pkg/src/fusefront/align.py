"""Bring the SF and SSL streams to a shared ``T x D`` grid.

SSL frames are projected down to the SF dimension. SF frames (10 ms clock) are
paired, ``(2t, 2t+1)``, concatenated and projected, which halves the frame rate
to match the 20 ms SSL clock. Both maps are linear. When the two resulting
frame counts disagree by at most ``MAX_FRAME_MISMATCH`` the longer stream is
truncated; it is never zero-padded.
"""

from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, ShapeError
from .params import fan_in_uniform, xtg
from .rng import SplitMix64

MAX_FRAME_MISMATCH = 2


@dataclass
class AlignParams:
    W_proj_ssl: np.ndarray  # D_SSL x D
    W_down_sf: np.ndarray  # 2*D_SF x D

    def __post_init__(self):
        if self.W_proj_ssl.ndim != 2 or self.W_down_sf.ndim != 2:
            raise ShapeError("align matrices must be 2-D")
        if self.W_proj_ssl.shape[1] != self.W_down_sf.shape[1]:
            raise ShapeError("align matrices disagree on the output dimension")
        if self.W_down_sf.shape[0] % 2:
            raise ShapeError("W_down_sf must have 2*D_SF rows")

    @property
    def ssl_dim(self):
        return self.W_proj_ssl.shape[0]

    @property
    def sf_dim(self):
        return self.W_down_sf.shape[0] // 2

    @property
    def dim(self):
        return self.W_proj_ssl.shape[1]


def init_align(sf_dim, ssl_dim, dim=None, seed=0):
    dim = sf_dim if dim is None else dim
    rng = SplitMix64(seed).spawn("align")
    return AlignParams(
        W_proj_ssl=fan_in_uniform(rng, (ssl_dim, dim), ssl_dim),
        W_down_sf=fan_in_uniform(rng, (2 * sf_dim, dim), 2 * sf_dim),
    )


def pair_frames(x):
    """``(..., T, D) -> (..., T//2, 2D)``; an odd last frame is dropped."""
    half = x.shape[-2] // 2
    x = x[..., : 2 * half, :]
    return x.reshape(x.shape[:-2] + (half, 2 * x.shape[-1]))


def unpair_grad(g, n_frames):
    """Adjoint of :func:`pair_frames` for an input of ``n_frames`` rows."""
    half = g.shape[-2]
    d = g.shape[-1] // 2
    out = np.zeros(g.shape[:-2] + (n_frames, d))
    out[..., : 2 * half, :] = g.reshape(g.shape[:-2] + (2 * half, d))
    return out


def aligned_length(n_sf, n_ssl):
    """Common frame count for the pair, or :class:`AlignmentError`."""
    half = n_sf // 2
    if abs(half - n_ssl) > MAX_FRAME_MISMATCH:
        raise AlignmentError(
            f"SF stream gives {half} frame pairs but SSL stream has {n_ssl} frames "
            f"(tolerance {MAX_FRAME_MISMATCH}); are the frame clocks 10 ms / 20 ms?"
        )
    return min(half, n_ssl)


def align_forward(x_sf, x_ssl, p):
    """Array core of :func:`align_pair`; accepts leading batch axes."""
    if x_sf.shape[-1] != p.sf_dim:
        raise ShapeError(f"SF dim {x_sf.shape[-1]} != {p.sf_dim}")
    if x_ssl.shape[-1] != p.ssl_dim:
        raise ShapeError(f"SSL dim {x_ssl.shape[-1]} != {p.ssl_dim}")
    T = aligned_length(x_sf.shape[-2], x_ssl.shape[-2])
    a_sf = pair_frames(x_sf)[..., :T, :] @ p.W_down_sf
    a_ssl = x_ssl[..., :T, :] @ p.W_proj_ssl
    return a_sf, a_ssl


def align_backward(x_sf, x_ssl, p, g_sf, g_ssl):
    """Gradients of ``sum(g_sf * a_sf) + sum(g_ssl * a_ssl)``.

    Returns ``(param_grads, grad_x_sf, grad_x_ssl)``.
    """
    T = g_sf.shape[-2]
    paired = pair_frames(x_sf)[..., :T, :]
    grads = {
        "W_proj_ssl": xtg(x_ssl[..., :T, :], g_ssl),
        "W_down_sf": xtg(paired, g_sf),
    }
    g_paired = np.zeros(paired.shape[:-2] + (x_sf.shape[-2] // 2, paired.shape[-1]))
    g_paired[..., :T, :] = g_sf @ p.W_down_sf.T
    gx_sf = unpair_grad(g_paired, x_sf.shape[-2])
    gx_ssl = np.zeros(x_ssl.shape)
    gx_ssl[..., :T, :] = g_ssl @ p.W_proj_ssl.T
    return grads, gx_sf, gx_ssl


def _check_clocks(f_sf, f_ssl):
    if not np.isclose(2.0 * f_sf.frame_shift_ms, f_ssl.frame_shift_ms):
        raise AlignmentError(
            f"SF frame shift {f_sf.frame_shift_ms} ms is not half the SSL shift "
            f"{f_ssl.frame_shift_ms} ms"
        )


def project_ssl(f_ssl, p):
    if f_ssl.dim != p.ssl_dim:
        raise ShapeError(f"SSL features have dim {f_ssl.dim}, projection expects {p.ssl_dim}")
    return f_ssl.replace(data=f_ssl.data @ p.W_proj_ssl)


def downsample_sf(f_sf, p, target_T):
    """Pair, project and (if longer) truncate the SF stream to ``target_T`` frames.

    The result has ``min(T_SF // 2, target_T)`` frames at twice the input
    frame shift.
    """
    if f_sf.dim != p.sf_dim:
        raise ShapeError(f"SF features have dim {f_sf.dim}, projection expects {p.sf_dim}")
    T = aligned_length(f_sf.n_frames, target_T)
    data = pair_frames(f_sf.data)[:T] @ p.W_down_sf
    return f_sf.replace(data=data, frame_shift_ms=2.0 * f_sf.frame_shift_ms)


def align_pair(f_sf, f_ssl, p):
    """Both streams as ``T x D`` with ``T = min(T_SF // 2, T_SSL)``."""
    _check_clocks(f_sf, f_ssl)
    a_sf = downsample_sf(f_sf, p, f_ssl.n_frames)
    a_ssl = project_ssl(f_ssl, p)
    T = a_sf.n_frames
    return a_sf, a_ssl.replace(data=a_ssl.data[:T])
