"""Neural net primitives with hand-written reverse-mode gradients.

Every op returns (output, cache); the matching backward consumes the cache
and the upstream gradient. All math runs in float64 so finite-difference
gradient checks close to 1e-4 relative error are meaningful. Inputs are
batched (B, S, D) token tensors.
"""

from __future__ import annotations

import numpy as np

_GELU_C = np.sqrt(2.0 / np.pi)
_LN_EPS = 1e-5


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    return x @ w + b, (x, w)


def linear_backward(dy: np.ndarray, cache):
    x, w = cache
    dx = dy @ w.T
    dw = np.tensordot(x, dy, axes=(tuple(range(x.ndim - 1)), tuple(range(dy.ndim - 1))))
    db = dy.sum(axis=tuple(range(dy.ndim - 1)))
    return dx, dw, db


def layer_norm_forward(x: np.ndarray, gain: np.ndarray, bias: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = (x - mu) * inv
    return gain * xhat + bias, (xhat, inv, gain)


def layer_norm_backward(dy: np.ndarray, cache):
    xhat, inv, gain = cache
    dgain = (dy * xhat).sum(axis=tuple(range(dy.ndim - 1)))
    dbias = dy.sum(axis=tuple(range(dy.ndim - 1)))
    dxhat = dy * gain
    dx = inv * (dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dgain, dbias


def gelu_forward(x: np.ndarray):
    x2 = x * x
    u = _GELU_C * (x + 0.044715 * x2 * x)
    th = np.tanh(u)
    return 0.5 * x * (1.0 + th), (x, x2, th)


def gelu_backward(dy: np.ndarray, cache):
    x, x2, th = cache
    du = _GELU_C * (1.0 + 3 * 0.044715 * x2)
    return dy * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du)


def softmax_last(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def attention_forward(x: np.ndarray, w_qkv: np.ndarray, b_qkv: np.ndarray,
                      w_out: np.ndarray, b_out: np.ndarray, n_heads: int):
    """Full multi-head self-attention over all tokens (no masking)."""
    bsz, seq, d = x.shape
    dh = d // n_heads
    qkv = x @ w_qkv + b_qkv
    q, k, v = np.split(qkv, 3, axis=-1)

    def heads(a):
        return a.reshape(bsz, seq, n_heads, dh).transpose(0, 2, 1, 3)

    q, k, v = heads(q), heads(k), heads(v)
    scale = 1.0 / np.sqrt(dh)
    scores = (q @ k.transpose(0, 1, 3, 2)) * scale
    attn = softmax_last(scores)
    ctx = attn @ v
    merged = ctx.transpose(0, 2, 1, 3).reshape(bsz, seq, d)
    out = merged @ w_out + b_out
    return out, (x, w_qkv, w_out, q, k, v, attn, merged, n_heads)


def attention_backward(dy: np.ndarray, cache):
    x, w_qkv, w_out, q, k, v, attn, merged, n_heads = cache
    bsz, seq, d = x.shape
    dh = d // n_heads
    scale = 1.0 / np.sqrt(dh)

    dw_out = np.tensordot(merged, dy, axes=((0, 1), (0, 1)))
    db_out = dy.sum(axis=(0, 1))
    dmerged = dy @ w_out.T
    dctx = dmerged.reshape(bsz, seq, n_heads, dh).transpose(0, 2, 1, 3)

    dattn = dctx @ v.transpose(0, 1, 3, 2)
    dv = attn.transpose(0, 1, 3, 2) @ dctx
    # softmax jacobian applied row-wise
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    dq = (dscores @ k) * scale
    dk = (dscores.transpose(0, 1, 3, 2) @ q) * scale

    def unheads(a):
        return a.transpose(0, 2, 1, 3).reshape(bsz, seq, d)

    dqkv = np.concatenate([unheads(dq), unheads(dk), unheads(dv)], axis=-1)
    dx = dqkv @ w_qkv.T
    dw_qkv = np.tensordot(x, dqkv, axes=((0, 1), (0, 1)))
    db_qkv = dqkv.sum(axis=(0, 1))
    return dx, dw_qkv, db_qkv, dw_out, db_out


def sinusoidal_embedding(t: np.ndarray, dim: int) -> np.ndarray:
    """Standard frequency-ladder timestep features, shape (len(t), dim)."""
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(ang), np.cos(ang)], axis=1)
    if emb.shape[1] < dim:  # odd dim pads a zero column
        emb = np.pad(emb, ((0, 0), (0, dim - emb.shape[1])))
    return emb
