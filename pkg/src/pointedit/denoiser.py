"""Conditional transformer noise predictor with explicit reverse-mode gradients.

The token sequence is [instruction token, timestep token, N point tokens].
Point token i is a linear map of the 12-channel concatenation of the noised
row x_t[i] with the source-cloud row P[i]; the 6 source-channel rows of that
projection start at exactly zero so a freshly initialized model ignores the
source cloud. Point tokens carry no positional encoding, which makes the
network permutation-equivariant over rows.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .nn_ops import (
    attention_backward,
    attention_forward,
    gelu_backward,
    gelu_forward,
    layer_norm_backward,
    layer_norm_forward,
    linear_backward,
    linear_forward,
    sinusoidal_embedding,
)

POINT_CHANNELS = 6
TOKEN_CHANNELS = 2 * POINT_CHANNELS  # noised row + source row
INIT_STD = 0.02


class ModelError(ValueError):
    """Config/shape violations or numerical divergence."""


@dataclass(frozen=True)
class DenoiserConfig:
    d_model: int = 64
    n_layers: int = 4
    n_heads: int = 4
    d_text: int = 64
    n_points: int = 256
    timesteps: int = 64

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ModelError("d_model must be divisible by n_heads")
        if self.d_model % 2 != 0:
            raise ModelError("d_model must be even")
        for name in ("d_model", "n_layers", "n_heads", "d_text", "n_points", "timesteps"):
            if getattr(self, name) < 1:
                raise ModelError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "DenoiserConfig":
        return DenoiserConfig(**d)


def init_params(config: DenoiserConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Scaled-normal init; the source-channel rows of the point projection are 0."""
    rng = np.random.default_rng(seed)
    d = config.d_model
    p: dict[str, np.ndarray] = {}

    def w(shape):
        return rng.normal(scale=INIT_STD, size=shape)

    p["point_in.w"] = w((TOKEN_CHANNELS, d))
    p["point_in.w"][POINT_CHANNELS:, :] = 0.0
    p["point_in.b"] = np.zeros(d)
    p["time_in.w"] = w((d, d))
    p["time_in.b"] = np.zeros(d)
    p["text_in.w"] = w((config.d_text, d))
    p["text_in.b"] = np.zeros(d)
    p["null_text"] = w((d,))
    for layer in range(config.n_layers):
        pre = f"blocks.{layer}."
        p[pre + "ln1.g"] = np.ones(d)
        p[pre + "ln1.b"] = np.zeros(d)
        p[pre + "attn.w_qkv"] = w((d, 3 * d))
        p[pre + "attn.b_qkv"] = np.zeros(3 * d)
        p[pre + "attn.w_out"] = w((d, d))
        p[pre + "attn.b_out"] = np.zeros(d)
        p[pre + "ln2.g"] = np.ones(d)
        p[pre + "ln2.b"] = np.zeros(d)
        p[pre + "mlp.w1"] = w((d, 4 * d))
        p[pre + "mlp.b1"] = np.zeros(4 * d)
        p[pre + "mlp.w2"] = w((4 * d, d))
        p[pre + "mlp.b2"] = np.zeros(d)
    p["ln_f.g"] = np.ones(d)
    p["ln_f.b"] = np.zeros(d)
    p["head.w"] = w((d, POINT_CHANNELS))
    p["head.b"] = np.zeros(POINT_CHANNELS)
    return p


def _check_shapes(config, x_t, t, text_emb, source):
    if x_t.ndim != 3 or x_t.shape[2] != POINT_CHANNELS:
        raise ModelError(f"x_t must be (B, N, 6), got {x_t.shape}")
    if source.shape != x_t.shape:
        raise ModelError(f"source shape {source.shape} != x_t shape {x_t.shape}")
    if text_emb.shape != (x_t.shape[0], config.d_text):
        raise ModelError(f"text_emb must be (B, {config.d_text}), got {text_emb.shape}")
    if t.shape != (x_t.shape[0],):
        raise ModelError("t must be one timestep per batch element")
    if np.any(t < 1) or np.any(t > config.timesteps):
        raise ModelError(f"timesteps out of range [1, {config.timesteps}]")


def forward(params: dict, config: DenoiserConfig, x_t: np.ndarray, t: np.ndarray,
            text_emb: np.ndarray, source: np.ndarray,
            null_mask: np.ndarray | None = None):
    """Predict the added noise; returns (eps_hat (B, N, 6), cache for backward).

    Rows of `null_mask` replace the instruction token with the learned null
    token (condition dropout / classifier-free guidance).
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    source = np.asarray(source, dtype=np.float64)
    text_emb = np.asarray(text_emb, dtype=np.float64)
    t = np.asarray(t, dtype=np.int64)
    _check_shapes(config, x_t, t, text_emb, source)
    bsz, n, _ = x_t.shape

    point_in = np.concatenate([x_t, source], axis=2)
    point_tok, point_cache = linear_forward(point_in, params["point_in.w"], params["point_in.b"])
    sin_emb = sinusoidal_embedding(t, config.d_model)
    time_tok, time_cache = linear_forward(sin_emb, params["time_in.w"], params["time_in.b"])
    text_tok, text_cache = linear_forward(text_emb, params["text_in.w"], params["text_in.b"])
    if null_mask is None:
        null_mask = np.zeros(bsz, dtype=bool)
    else:
        null_mask = np.asarray(null_mask, dtype=bool)
    text_tok = text_tok.copy()
    text_tok[null_mask] = params["null_text"]

    h = np.concatenate([text_tok[:, None, :], time_tok[:, None, :], point_tok], axis=1)
    block_caches = []
    for layer in range(config.n_layers):
        pre = f"blocks.{layer}."
        a_in, ln1_cache = layer_norm_forward(h, params[pre + "ln1.g"], params[pre + "ln1.b"])
        a_out, attn_cache = attention_forward(a_in, params[pre + "attn.w_qkv"],
                                              params[pre + "attn.b_qkv"],
                                              params[pre + "attn.w_out"],
                                              params[pre + "attn.b_out"], config.n_heads)
        h = h + a_out
        m_in, ln2_cache = layer_norm_forward(h, params[pre + "ln2.g"], params[pre + "ln2.b"])
        m_mid, mlp1_cache = linear_forward(m_in, params[pre + "mlp.w1"], params[pre + "mlp.b1"])
        m_act, gelu_cache = gelu_forward(m_mid)
        m_out, mlp2_cache = linear_forward(m_act, params[pre + "mlp.w2"], params[pre + "mlp.b2"])
        h = h + m_out
        block_caches.append((ln1_cache, attn_cache, ln2_cache, mlp1_cache, gelu_cache, mlp2_cache))

    final, lnf_cache = layer_norm_forward(h, params["ln_f.g"], params["ln_f.b"])
    eps_hat, head_cache = linear_forward(final[:, 2:, :], params["head.w"], params["head.b"])
    cache = {
        "config": config,
        "shapes": (bsz, n),
        "point_cache": point_cache,
        "time_cache": time_cache,
        "text_cache": text_cache,
        "null_mask": null_mask,
        "block_caches": block_caches,
        "lnf_cache": lnf_cache,
        "head_cache": head_cache,
    }
    return eps_hat, cache


def backward(cache: dict, d_eps_hat: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every parameter, given d loss/d eps_hat."""
    if cache is None:
        raise ModelError("missing forward cache")
    config: DenoiserConfig = cache["config"]
    bsz, n = cache["shapes"]
    grads: dict[str, np.ndarray] = {}

    d_final_pts, grads["head.w"], grads["head.b"] = linear_backward(
        np.asarray(d_eps_hat, dtype=np.float64), cache["head_cache"])
    d_final = np.zeros((bsz, n + 2, config.d_model))
    d_final[:, 2:, :] = d_final_pts
    dh, grads["ln_f.g"], grads["ln_f.b"] = layer_norm_backward(d_final, cache["lnf_cache"])

    for layer in reversed(range(config.n_layers)):
        pre = f"blocks.{layer}."
        ln1_cache, attn_cache, ln2_cache, mlp1_cache, gelu_cache, mlp2_cache = \
            cache["block_caches"][layer]
        d_m_act, grads[pre + "mlp.w2"], grads[pre + "mlp.b2"] = linear_backward(dh, mlp2_cache)
        d_m_mid = gelu_backward(d_m_act, gelu_cache)
        d_m_in, grads[pre + "mlp.w1"], grads[pre + "mlp.b1"] = linear_backward(d_m_mid, mlp1_cache)
        d_res, grads[pre + "ln2.g"], grads[pre + "ln2.b"] = layer_norm_backward(d_m_in, ln2_cache)
        dh = dh + d_res
        (d_a_in, grads[pre + "attn.w_qkv"], grads[pre + "attn.b_qkv"],
         grads[pre + "attn.w_out"], grads[pre + "attn.b_out"]) = attention_backward(dh, attn_cache)
        d_res, grads[pre + "ln1.g"], grads[pre + "ln1.b"] = layer_norm_backward(d_a_in, ln1_cache)
        dh = dh + d_res

    d_text_tok = dh[:, 0, :]
    d_time_tok = dh[:, 1, :]
    d_point_tok = dh[:, 2:, :]

    _, grads["point_in.w"], grads["point_in.b"] = linear_backward(d_point_tok, cache["point_cache"])
    _, grads["time_in.w"], grads["time_in.b"] = linear_backward(d_time_tok, cache["time_cache"])
    null_mask = cache["null_mask"]
    grads["null_text"] = d_text_tok[null_mask].sum(axis=0) if null_mask.any() \
        else np.zeros(config.d_model)
    d_text_live = d_text_tok.copy()
    d_text_live[null_mask] = 0.0
    _, grads["text_in.w"], grads["text_in.b"] = linear_backward(d_text_live, cache["text_cache"])
    return grads
