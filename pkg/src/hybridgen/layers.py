"""Neural building blocks on top of the autodiff engine."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, concat, gelu, mean_, sqrt, softmax

LN_EPS = 1e-5


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    out = x @ w
    if b is not None:
        out = out + b
    return out


def layer_norm(x: Tensor, gain: Tensor | None = None,
               bias: Tensor | None = None) -> Tensor:
    """Normalize the last axis; affine terms optional."""
    mu = mean_(x, axis=-1, keepdims=True)
    centered = x - mu
    var = mean_(centered * centered, axis=-1, keepdims=True)
    out = centered * (var + LN_EPS) ** -0.5
    if gain is not None:
        out = out * gain
    if bias is not None:
        out = out + bias
    return out


def dropout(x: Tensor, p: float, rng: np.random.Generator | None,
            training: bool) -> Tensor:
    if not training or p <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an RNG")
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return x * mask


def two_layer_mlp(x: Tensor, store, prefix: str, *, drop: float = 0.0,
                  rng=None, training: bool = False) -> Tensor:
    """GELU MLP reading ``{prefix}.w1/b1/w2/b2`` from the store."""
    h = gelu(linear(x, store[f"{prefix}.w1"], store[f"{prefix}.b1"]))
    h = dropout(h, drop, rng, training)
    return linear(h, store[f"{prefix}.w2"], store[f"{prefix}.b2"])


def causal_mask(n: int, dtype=np.float64) -> np.ndarray:
    """(n, n) additive mask: 0 on/below the diagonal, -1e30 above."""
    mask = np.triu(np.full((n, n), -1e30, dtype=dtype), k=1)
    return mask


def sinusoidal_embedding(t, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """Fixed sin/cos features of integer timesteps, shape (len(t), dim)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half) / max(half, 1))
    args = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.cos(args), np.sin(args)], axis=-1)
    if dim % 2 == 1:
        emb = np.concatenate([emb, np.zeros((emb.shape[0], 1))], axis=-1)
    return emb


def attention(x: Tensor, store, prefix: str, num_heads: int, mask: np.ndarray,
              *, drop: float = 0.0, rng=None, training: bool = False) -> Tensor:
    """Masked multi-head self-attention over (B, T, D)."""
    B, T, D = x.shape
    hd = D // num_heads

    def split_heads(t: Tensor) -> Tensor:
        return t.reshape((B, T, num_heads, hd)).transpose((0, 2, 1, 3))

    q = split_heads(linear(x, store[f"{prefix}.wq"], store[f"{prefix}.bq"]))
    k = split_heads(linear(x, store[f"{prefix}.wk"], store[f"{prefix}.bk"]))
    v = split_heads(linear(x, store[f"{prefix}.wv"], store[f"{prefix}.bv"]))

    scores = (q @ k.transpose((0, 1, 3, 2))) * (1.0 / np.sqrt(hd))
    scores = scores + mask[None, None, :, :]
    weights = softmax(scores, axis=-1)
    weights = dropout(weights, drop, rng, training)
    ctx = (weights @ v).transpose((0, 2, 1, 3)).reshape((B, T, D))
    return linear(ctx, store[f"{prefix}.wo"], store[f"{prefix}.bo"])
