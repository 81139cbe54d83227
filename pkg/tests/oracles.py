"""Independent slow reference implementations used as test oracles."""

import cmath
import math

import numpy as np


def naive_dft(x):
    L = len(x)
    return np.array(
        [sum(x[n] * cmath.exp(-2j * math.pi * k * n / L) for n in range(L)) for k in range(L)]
    )


def naive_power(frame, hann=True):
    L = len(frame)
    win = [0.5 - 0.5 * math.cos(2 * math.pi * n / L) if hann else 1.0 for n in range(L)]
    spec = naive_dft([frame[n] * win[n] for n in range(L)])
    return np.array([abs(spec[k]) ** 2 for k in range(L // 2 + 1)])


def reference_mel(n_mels, L, sr):
    """Triangles built one filter and one bin at a time."""
    mel = lambda f: 2595.0 * math.log10(1.0 + f / 700.0)
    inv = lambda m: 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    top = mel(sr / 2.0)
    pts = [inv(top * i / (n_mels + 1)) for i in range(n_mels + 2)]
    rows = []
    for m in range(1, n_mels + 1):
        lo, c, hi = pts[m - 1], pts[m], pts[m + 1]
        row = []
        for k in range(L // 2 + 1):
            f = k * sr / L
            if lo < f <= c:
                row.append((f - lo) / (c - lo))
            elif c < f < hi:
                row.append((hi - f) / (hi - c))
            else:
                row.append(0.0)
        peak = max(row)
        rows.append([v / peak for v in row])
    return np.array(rows)


def reference_fbank(samples, sr=16000, frame_ms=25, shift_ms=10, n_mels=80, coeff=0.97, floor=1e-10):
    L = int(round(sr * frame_ms / 1000))
    H = int(round(sr * shift_ms / 1000))
    x = [samples[0]] + [samples[t] - coeff * samples[t - 1] for t in range(1, len(samples))]
    fb = reference_mel(n_mels, L, sr)
    out = []
    t = 0
    while t + L <= len(x):
        p = naive_power(x[t : t + L])
        out.append([math.log(max(float(np.dot(fb[m], p)), floor)) for m in range(n_mels)])
        t += H
    return np.array(out).reshape(-1, n_mels)


def matmul(a, b):
    n, k = len(a), len(b)
    m = len(b[0])
    return [[sum(a[i][j] * b[j][c] for j in range(k)) for c in range(m)] for i in range(n)]


def naive_conv(x, K, b=None):
    """Sliding-window sum, one output entry at a time, zeros outside [0, T)."""
    T, D_in = len(x), len(x[0]) if len(x) else 0
    k, D_out = len(K), len(K[0][0])
    pad = (k - 1) // 2
    out = []
    for t in range(T):
        row = []
        for c in range(D_out):
            s = 0.0 if b is None else b[c]
            for j in range(k):
                src = t + j - pad
                if 0 <= src < T:
                    s += sum(x[src][i] * K[j][i][c] for i in range(D_in))
            row.append(s)
        out.append(row)
    return out


def scalar_attention(q, k, v):
    """Row-wise softmax(q k^T / sqrt(D)) v with plain floats."""
    D = len(q[0])
    out = []
    for qi in q:
        scores = [sum(a * b for a, b in zip(qi, kj)) / math.sqrt(D) for kj in k]
        top = max(scores)
        e = [math.exp(s - top) for s in scores]
        z = sum(e)
        out.append([sum(e[j] / z * v[j][c] for j in range(len(v))) for c in range(len(v[0]))])
    return out


def scalar_coattention(f_sf, f_ssl, W):
    """Straight-line co-attention forward; ``W`` maps names to nested lists."""
    q_sf, k_sf, v_sf = (matmul(f_sf, W[n]) for n in ("W_SF_Q", "W_SF_K", "W_SF_V"))
    q_ssl, k_ssl, v_ssl = (matmul(f_ssl, W[n]) for n in ("W_SSL_Q", "W_SSL_K", "W_SSL_V"))
    c_sf = scalar_attention(q_sf, k_ssl, v_ssl)
    c_ssl = scalar_attention(q_ssl, k_sf, v_sf)
    h = [
        [c + f for c, f in zip(c_sf[t], f_sf[t])] + [c + f for c, f in zip(c_ssl[t], f_ssl[t])]
        for t in range(len(f_sf))
    ]
    return matmul(h, W["W_out"])


def dft_by_matrix(x):
    """O(L^2) DFT as an explicit twiddle-matrix product (no FFT)."""
    L = len(x)
    n = np.arange(L)
    return np.exp(-2j * np.pi * np.outer(n, n) / L) @ np.asarray(x, dtype=complex)
