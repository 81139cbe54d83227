"""Hand-derived backward passes and a central-difference gradient checker.

Every ``*_backward`` takes the forward inputs, the parameters and the upstream
gradient ``G = dL/d(output)`` and returns a :class:`GradRecord` with the exact
gradients of ``sum(G * output)``.

Closed forms used for the gate functions, for ``y = f(z)`` row-wise and
upstream ``g``:

* softmax:      ``dz = y * (g - sum(g * y))``
* log-softmax:  ``dz = g - softmax(z) * sum(g)``
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import align as _align
from . import fusion as F
from .errors import InvalidInputError, ShapeError, UndefinedMetricError
from .params import colsum, copy_params, named_arrays, xtg


@dataclass
class GradRecord:
    params: dict
    inputs: dict = field(default_factory=dict)

    @property
    def grad_f_sf(self):
        return self.inputs.get("f_sf")

    @property
    def grad_f_ssl(self):
        return self.inputs.get("f_ssl")


def _check_upstream(out, g):
    if out.shape != g.shape:
        raise ShapeError(f"upstream gradient {g.shape} does not match output {out.shape}")


def _affine_backward(x, W, b, g, prefix_w, prefix_b):
    grads = {prefix_w: xtg(x, g)}
    if b is not None:
        grads[prefix_b] = colsum(g)
    return grads, g @ W.T


def linear_backward(f_sf, f_ssl, p, g):
    _check_upstream(F.fuse_linear(f_sf, f_ssl, p), g)
    z = np.concatenate([f_sf, f_ssl], axis=-1)
    grads, gz = _affine_backward(z, p.W_cat, p.b, g, "W_cat", "b")
    D = f_sf.shape[-1]
    return GradRecord(grads, {"f_sf": gz[..., :D], "f_ssl": gz[..., D:]})


def conv1d_same_backward(x, K, g):
    """``(dK, dx)`` for :func:`fusion.conv1d_same` given upstream ``g``."""
    k = K.shape[0]
    pad = (k - 1) // 2
    T = x.shape[-2]
    xp = F.pad_time(x, pad)
    dK = np.empty_like(K)
    dxp = np.zeros(xp.shape)
    for j in range(k):
        dK[j] = xtg(xp[..., j : j + T, :], g)
        dxp[..., j : j + T, :] += g @ K[j].T
    return dK, dxp[..., pad : pad + T, :]


def conv_backward(f_sf, f_ssl, p, g):
    _check_upstream(F.fuse_conv(f_sf, f_ssl, p), g)
    c_sf = F.conv1d_same(f_sf, p.K_sf, p.b_sf)
    c_ssl = F.conv1d_same(f_ssl, p.K_ssl, p.b_ssl)
    z = np.concatenate([c_sf, c_ssl], axis=-1)
    grads, gz = _affine_backward(z, p.W_cat, p.b, g, "W_cat", "b")
    D = f_sf.shape[-1]
    g_sf, g_ssl = gz[..., :D], gz[..., D:]
    grads["K_sf"], gx_sf = conv1d_same_backward(f_sf, p.K_sf, g_sf)
    grads["K_ssl"], gx_ssl = conv1d_same_backward(f_ssl, p.K_ssl, g_ssl)
    if p.b_sf is not None:
        grads["b_sf"] = colsum(g_sf)
    if p.b_ssl is not None:
        grads["b_ssl"] = colsum(g_ssl)
    return GradRecord(grads, {"f_sf": gx_sf, "f_ssl": gx_ssl})


def softmax_backward(y, g):
    return y * (g - np.sum(g * y, axis=-1, keepdims=True))


def log_softmax_backward(z, g):
    return g - F.softmax(z) * np.sum(g, axis=-1, keepdims=True)


def attention_backward(q, k, v, weights, g):
    """``(dq, dk, dv)`` for ``softmax(q k^T / sqrt(d)) v``."""
    scale = 1.0 / np.sqrt(q.shape[-1])
    dv = np.swapaxes(weights, -1, -2) @ g
    dweights = g @ np.swapaxes(v, -1, -2)
    dscores = softmax_backward(weights, dweights) * scale
    dq = dscores @ k
    dk = np.swapaxes(dscores, -1, -2) @ q
    return dq, dk, dv


def coattention_backward(f_sf, f_ssl, p, g):
    _check_upstream(F.fuse_coattention(f_sf, f_ssl, p), g)
    D = f_sf.shape[-1]
    q_sf, k_sf, v_sf = f_sf @ p.W_SF_Q, f_sf @ p.W_SF_K, f_sf @ p.W_SF_V
    q_ssl, k_ssl, v_ssl = f_ssl @ p.W_SSL_Q, f_ssl @ p.W_SSL_K, f_ssl @ p.W_SSL_V
    ctx_sf, a_sf = F.attention(q_sf, k_ssl, v_ssl)
    ctx_ssl, a_ssl = F.attention(q_ssl, k_sf, v_sf)
    z = np.concatenate([ctx_sf + f_sf, ctx_ssl + f_ssl], axis=-1)

    grads, gz = _affine_backward(z, p.W_out, p.b_out, g, "W_out", "b_out")
    gh_sf, gh_ssl = gz[..., :D], gz[..., D:]

    # SF queries attend over SSL keys/values, and vice versa
    dq_sf, dk_ssl, dv_ssl = attention_backward(q_sf, k_ssl, v_ssl, a_sf, gh_sf)
    dq_ssl, dk_sf, dv_sf = attention_backward(q_ssl, k_sf, v_sf, a_ssl, gh_ssl)

    grads.update(
        W_SF_Q=xtg(f_sf, dq_sf),
        W_SF_K=xtg(f_sf, dk_sf),
        W_SF_V=xtg(f_sf, dv_sf),
        W_SSL_Q=xtg(f_ssl, dq_ssl),
        W_SSL_K=xtg(f_ssl, dk_ssl),
        W_SSL_V=xtg(f_ssl, dv_ssl),
    )
    gx_sf = gh_sf + dq_sf @ p.W_SF_Q.T + dk_sf @ p.W_SF_K.T + dv_sf @ p.W_SF_V.T
    gx_ssl = gh_ssl + dq_ssl @ p.W_SSL_Q.T + dk_ssl @ p.W_SSL_K.T + dv_ssl @ p.W_SSL_V.T
    return GradRecord(grads, {"f_sf": gx_sf, "f_ssl": gx_ssl})


def moe_backward(f_sf, f_ssl, p, g):
    out, gates = F.fuse_moe(f_sf, f_ssl, p)
    _check_upstream(out, g)
    w = gates.w
    dw = np.stack([np.sum(g * f_sf, axis=-1), np.sum(g * f_ssl, axis=-1)], axis=-1)
    if p.theta is F.Theta.SOFTMAX:
        dlogits = softmax_backward(w, dw)
    else:
        dlogits = log_softmax_backward(F.gate_logits(f_sf, p), dw)
    grads, gx_gate = _affine_backward(f_sf, p.W_MoE, p.b_MoE, dlogits, "W_MoE", "b_MoE")
    gx_sf = w[..., 0:1] * g + gx_gate
    gx_ssl = w[..., 1:2] * g
    return GradRecord(grads, {"f_sf": gx_sf, "f_ssl": gx_ssl})


BACKWARD = {
    F.Variant.LINEAR: linear_backward,
    F.Variant.CONV: conv_backward,
    F.Variant.COATTENTION: coattention_backward,
    F.Variant.MOE: moe_backward,
}


def backward(variant, inputs, params, upstream_grad):
    """Analytic gradients for a fusion variant, ``"align"`` or ``"head"``.

    ``inputs`` is ``(f_sf, f_ssl)`` for fusion and align, a single fused
    array for the head. For align, ``upstream_grad`` is the pair
    ``(g_sf, g_ssl)``.
    """
    if variant == "align":
        x_sf, x_ssl = inputs
        g_sf, g_ssl = upstream_grad
        a_sf, a_ssl = _align.align_forward(x_sf, x_ssl, params)
        _check_upstream(a_sf, g_sf)
        _check_upstream(a_ssl, g_ssl)
        grads, gx_sf, gx_ssl = _align.align_backward(x_sf, x_ssl, params, g_sf, g_ssl)
        return GradRecord(grads, {"f_sf": gx_sf, "f_ssl": gx_ssl})
    if variant == "head":
        return head_backward(inputs, params, upstream_grad)
    variant = F.check_params(variant, params)
    f_sf, f_ssl = inputs
    return BACKWARD[variant](f_sf, f_ssl, params, upstream_grad)


# classifier head: frame-mean pooling followed by an affine map


@dataclass
class HeadParams:
    W: np.ndarray  # D x n_classes
    b: np.ndarray = None


def head_forward(x, p):
    if x.shape[-2] == 0:
        raise UndefinedMetricError("cannot mean-pool an utterance with 0 frames")
    pooled = x.mean(axis=-2)
    logits = pooled @ p.W
    return logits if p.b is None else logits + p.b


def head_backward(x, p, g):
    _check_upstream(head_forward(x, p), g)
    pooled = x.mean(axis=-2)
    grads = {"W": xtg(pooled, g)}
    if p.b is not None:
        grads["b"] = colsum(g)
    T = x.shape[-2]
    gx = np.broadcast_to((g @ p.W.T)[..., None, :] / T, x.shape).copy()
    return GradRecord(grads, {"x": gx})


def cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient w.r.t. ``logits`` (``B x C``)."""
    logp = F.log_softmax(logits)
    n = logits.shape[0]
    loss = -np.mean(logp[np.arange(n), labels])
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


# finite-difference certification


def _forward_fn(variant):
    if variant == "align":
        return lambda inputs, p: _align.align_forward(inputs[0], inputs[1], p)
    if variant == "head":
        return lambda inputs, p: head_forward(inputs, p)
    v = F.Variant(variant)
    return lambda inputs, p: F.FORWARD[v](inputs[0], inputs[1], p)


def _outputs(out):
    return out if isinstance(out, tuple) else (out,)


def half_square_loss(out):
    """``0.5 * ||out||^2`` summed with compensated arithmetic."""
    return 0.5 * math.fsum(float(v) for o in _outputs(out) for v in np.square(o).ravel())


def relative_error(a, n):
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


def _input_arrays(variant, inputs):
    if variant == "head":
        return {"x": inputs}
    return {"f_sf": inputs[0], "f_ssl": inputs[1]}


def _rebuild_inputs(variant, arrays):
    if variant == "head":
        return arrays["x"]
    return (arrays["f_sf"], arrays["f_ssl"])


def gradient_errors(variant, inputs, params, eps=1e-4, include_inputs=True):
    """Per-array max relative error between analytic and central-difference gradients.

    The loss is ``L = 0.5 * ||forward(inputs, params)||^2``, so the upstream
    gradient handed to ``backward`` is the forward output itself. Keys are
    parameter names, plus ``input:<name>`` for the inputs.
    """
    if not eps > 0:
        raise InvalidInputError(f"eps must be positive, got {eps}")
    forward = _forward_fn(variant)
    params = copy_params(params)
    in_arrays = {k: np.array(v, dtype=np.float64) for k, v in _input_arrays(variant, inputs).items()}
    inputs = _rebuild_inputs(variant, in_arrays)

    out = forward(inputs, params)
    record = backward(variant, inputs, params, out)

    targets = [(name, arr, record.params[name]) for name, arr in named_arrays(params).items()]
    if include_inputs:
        targets += [(f"input:{k}", arr, record.inputs[k]) for k, arr in in_arrays.items()]

    report = {}
    for name, arr, analytic in targets:
        worst = 0.0
        flat = arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = half_square_loss(forward(inputs, params))
            flat[i] = orig - eps
            lm = half_square_loss(forward(inputs, params))
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * eps)
            worst = max(worst, relative_error(float(analytic.reshape(-1)[i]), numeric))
        report[name] = worst
    return report


def finite_diff_check(variant, inputs, params, eps=1e-4):
    """Max relative error over every parameter and input scalar."""
    report = gradient_errors(variant, inputs, params, eps)
    return max(report.values(), default=0.0)


CHECKABLE = tuple(v.value for v in F.Variant) + ("align", "head")


def random_case(variant, seed, n_frames=None, dim=None, theta=F.Theta.LOGSOFTMAX):
    """Seeded ``(inputs, params)`` for gradient checks, every parameter nonzero.

    Frame count and dimension default to draws from ``1..6`` and ``1..5``.
    """
    from .rng import SplitMix64

    rng = SplitMix64(seed).spawn(f"gradcheck/{variant}")
    T = n_frames if n_frames is not None else 1 + int(rng.uniform(()) * 6)
    D = dim if dim is not None else 1 + int(rng.uniform(()) * 5)
    if variant == "align":
        ssl_dim = D + 1 + int(rng.uniform(()) * 4)
        params = _align.init_align(D, ssl_dim, D, seed)
        inputs = (rng.normal((2 * T + int(rng.uniform(()) * 2), D)), rng.normal((T, ssl_dim)))
        return inputs, params
    if variant == "head":
        C = 2 + int(rng.uniform(()) * 3)
        return rng.normal((T, D)), HeadParams(rng.normal((D, C)) / np.sqrt(D), rng.normal((C,)))
    cfg = F.FusionConfig(variant=variant, dim=D, theta=theta)
    params = F.init_fusion(cfg, seed)
    for name, arr in named_arrays(params).items():
        if name.startswith("b"):
            arr[...] = 0.5 * rng.normal(arr.shape)
    return (rng.normal((T, D)), rng.normal((T, D))), params
