"""Single-head scaled dot-product self-attention with mean pooling over time."""
from __future__ import annotations

import numpy as np


def softmax(s, axis=-1):
    s = s - s.max(axis=axis, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=axis, keepdims=True)


class AttentionCache:
    __slots__ = ("hseq", "Q", "K", "V", "A", "a_bar", "use_attention")


def attention_forward(hseq, params, use_attention=True):
    """Pool ``hseq`` (B, T, H) to (B, H).

    With attention: Q, K, V are linear maps of ``hseq``; the result is the time
    mean of ``softmax(QK^T / sqrt(H)) V``. Without: the time mean of ``hseq``.
    """
    cache = AttentionCache()
    cache.hseq = hseq
    cache.use_attention = use_attention
    if not use_attention:
        return hseq.mean(axis=1), cache
    B, T, H = hseq.shape
    Wq, Wk, Wv = params["attn.Wq"], params["attn.Wk"], params["attn.Wv"]
    if Wq.shape != (H, H):
        raise ValueError(f"attention weights {Wq.shape} do not match width {H}")
    flat = hseq.reshape(B * T, H)
    Q = (flat @ Wq).reshape(B, T, H)
    K = (flat @ Wk).reshape(B, T, H)
    V = (flat @ Wv).reshape(B, T, H)
    A = softmax(Q @ K.transpose(0, 2, 1) / np.sqrt(H))
    # mean_t(A V) == (mean_t A) V
    a_bar = A.mean(axis=1)
    pooled = np.einsum("bt,bth->bh", a_bar, V)
    cache.Q, cache.K, cache.V, cache.A, cache.a_bar = Q, K, V, A, a_bar
    return pooled, cache


def attention_backward(d_pooled, cache, params, need_weight_grad=True, need_input_grad=True):
    """Returns ``(d_hseq, grads)``; either may be None when not requested."""
    hseq = cache.hseq
    B, T, H = hseq.shape
    if not cache.use_attention:
        d_h = np.repeat(d_pooled[:, None, :] / T, T, axis=1) if need_input_grad else None
        return d_h, {}
    Q, K, V, A, a_bar = cache.Q, cache.K, cache.V, cache.A, cache.a_bar
    dV = a_bar[:, :, None] * d_pooled[:, None, :]
    # every query row of A receives the same upstream gradient d_abar / T
    d_abar = np.einsum("bth,bh->bt", V, d_pooled) / T
    row_dot = A @ d_abar[:, :, None]
    dS = A * (d_abar[:, None, :] - row_dot) / np.sqrt(H)
    dQ = dS @ K
    dK = dS.transpose(0, 2, 1) @ Q
    flat = hseq.reshape(B * T, H)
    grads = {}
    if need_weight_grad:
        grads["attn.Wq"] = flat.T @ dQ.reshape(B * T, H)
        grads["attn.Wk"] = flat.T @ dK.reshape(B * T, H)
        grads["attn.Wv"] = flat.T @ dV.reshape(B * T, H)
    d_h = None
    if need_input_grad:
        d_h = (dQ.reshape(B * T, H) @ params["attn.Wq"].T
               + dK.reshape(B * T, H) @ params["attn.Wk"].T
               + dV.reshape(B * T, H) @ params["attn.Wv"].T).reshape(B, T, H)
    return d_h, grads
