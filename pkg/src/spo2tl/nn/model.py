"""BiLSTM -> attention pooling -> linear head, forward and reverse mode."""
from __future__ import annotations

import numpy as np

from ..exceptions import ShapeError, StaleGraphError
from .attention import attention_backward, attention_forward
from .lstm import bilstm_backward, bilstm_forward


class ForwardCache:
    def __init__(self, params, x_scaled, lstm, attn, pooled):
        self.params = params
        self.version = params.version
        self.x_scaled = x_scaled
        self.lstm = lstm
        self.attn = attn
        self.pooled = pooled


def model_forward(x, params, keep_cache=True):
    """Raw (unclamped) predictions of shape (B, 1) for ``x`` of shape (B, T, D)."""
    config = params.config
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != config.input_dim:
        raise ShapeError(f"expected (B, T, {config.input_dim}) input, got {x.shape}")
    xs = x / params.buffers["norm.x_scale"]
    hseq, lstm_cache = bilstm_forward(xs, params, config)
    pooled, attn_cache = attention_forward(hseq, params, config.use_attention)
    y = pooled @ params["fc.W"] + params["fc.b"]
    cache = ForwardCache(params, xs, lstm_cache, attn_cache, pooled) if keep_cache else None
    return y, cache


def encode(params, X, batch=256):
    """Pooled encoder features (B, 2*hidden), computed in chunks."""
    config = params.config
    out = []
    for a in range(0, len(X), batch):
        xs = np.asarray(X[a:a + batch], dtype=np.float64) / params.buffers["norm.x_scale"]
        hseq, _ = bilstm_forward(xs, params, config)
        out.append(attention_forward(hseq, params, config.use_attention)[0])
    return np.concatenate(out) if out else np.zeros((0, config.width))


def model_backward(cache, d_y):
    """Gradients for every parameter in a trainable group; frozen groups are absent."""
    if cache is None:
        raise StaleGraphError("no forward cache; run model_forward first")
    params = cache.params
    if params.version != cache.version:
        raise StaleGraphError("parameters changed since the forward pass")
    config = params.config
    d_y = np.asarray(d_y, dtype=np.float64).reshape(-1, 1)
    if d_y.shape[0] != cache.pooled.shape[0]:
        raise ShapeError(f"upstream gradient {d_y.shape} vs batch {cache.pooled.shape[0]}")
    train = params.trainable
    grads = {}
    if train["fc"]:
        grads["fc.W"] = cache.pooled.T @ d_y
        grads["fc.b"] = d_y.sum(axis=0)
    attn_on = config.use_attention and train["attention"]
    if not (attn_on or train["bilstm"]):
        return grads
    d_pooled = d_y @ params["fc.W"].T
    d_h, g = attention_backward(d_pooled, cache.attn, params, need_weight_grad=attn_on,
                                need_input_grad=train["bilstm"])
    grads.update(g)
    if train["bilstm"]:
        grads.update(bilstm_backward(d_h, cache.lstm, config))
    return grads


def mse_loss(pred, target):
    """Mean squared error and its gradient with respect to ``pred``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size
