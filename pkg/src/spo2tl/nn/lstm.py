"""Stacked bidirectional LSTM with exact backpropagation through time.

Sequences are handled time-major internally: ``(T, B, features)``.
Parameters are stored per gate (i, f, g, o) and fused at run time.
"""
from __future__ import annotations

import numpy as np

from .params import DIRECTIONS, GATES


def sigmoid(z):
    # tanh form avoids overflow in exp for large |z|
    return 0.5 * (1.0 + np.tanh(0.5 * z))


# fused column order: sigmoid gates (o, i, f) contiguous, then the cell candidate g;
# (i, f, g) is also contiguous, which the backward pass exploits
FUSED_ORDER = ("o", "i", "f", "g")


def fused(params, prefix):
    W = np.concatenate([params[f"{prefix}.W{g}"] for g in FUSED_ORDER], axis=1)
    U = np.concatenate([params[f"{prefix}.U{g}"] for g in FUSED_ORDER], axis=1)
    b = np.concatenate([params[f"{prefix}.b{g}"] for g in FUSED_ORDER])
    return W, U, b


def lstm_cell_forward(x_t, h_prev, c_prev, weights):
    """One LSTM step.

    ``weights`` maps ``W{gate}`` (D, h), ``U{gate}`` (h, h) and ``b{gate}`` (h,)
    for gates i, f, g, o. Returns ``(h_t, c_t, cache)``; the cache holds the
    pre-activations and activations of every gate.
    """
    h = h_prev.shape[-1]
    pre, act = {}, {}
    for gate in GATES:
        W, U, b = weights[f"W{gate}"], weights[f"U{gate}"], weights[f"b{gate}"]
        if W.shape != (x_t.shape[-1], h) or U.shape != (h, h) or b.shape != (h,):
            raise ValueError(f"LSTM cell shape mismatch for gate {gate}")
        pre[gate] = x_t @ W + h_prev @ U + b
        act[gate] = np.tanh(pre[gate]) if gate == "g" else sigmoid(pre[gate])
    c_t = act["f"] * c_prev + act["i"] * act["g"]
    h_t = act["o"] * np.tanh(c_t)
    return h_t, c_t, {"pre": pre, "act": act, "c_prev": c_prev, "h_prev": h_prev, "x": x_t}


class _Direction:
    """Forward pass over one direction, keeping what backward needs.

    Gate activations are stored gate-major, ``G[t, k]`` of shape (B, h) for
    k in ``FUSED_ORDER``, so every elementwise op runs on contiguous memory.
    """

    def __init__(self, X, W, U, b):
        T, B, _ = X.shape
        h = U.shape[0]
        self.X, self.W, self.U = X, W, U
        # halving the sigmoid columns lets one tanh call serve all four gates:
        # sigmoid(z) = (1 + tanh(z / 2)) / 2
        half = np.ones(4 * h)
        half[:3 * h] = 0.5
        Ws, bs = W * half, b * half
        U4 = np.ascontiguousarray((U * half).reshape(h, 4, h).transpose(1, 0, 2))
        Xp = (X.reshape(T * B, -1) @ Ws + bs).reshape(T, B, 4, h)
        G = np.ascontiguousarray(Xp.transpose(0, 2, 1, 3))
        C = np.empty((T, B, h))
        TC = np.empty((T, B, h))
        H = np.empty((T, B, h))
        rec = np.empty((4, B, h))
        tmp = np.empty((B, h))
        for t in range(T):
            g = G[t]
            if t:
                np.matmul(H[t - 1], U4, out=rec)
                g += rec
            np.tanh(g, out=g)
            sg = g[:3]
            sg *= 0.5
            sg += 0.5
            c_t = C[t]
            np.multiply(g[1], g[3], out=c_t)
            if t:
                np.multiply(g[2], C[t - 1], out=tmp)
                c_t += tmp
            np.tanh(c_t, out=TC[t])
            np.multiply(g[0], TC[t], out=H[t])
        self.G, self.C, self.TC, self.H = G, C, TC, H

    def backward(self, dH, need_input_grad=True, need_weight_grad=True):
        G, C, TC, H, U = self.G, self.C, self.TC, self.H, self.U
        T, B, h = H.shape
        o, i, f, g = G[:, 0], G[:, 1], G[:, 2], G[:, 3]
        C_prev = np.concatenate([np.zeros((1, B, h)), C[:-1]])
        # recursion-free factors, computed for all steps at once
        k_c = o * (1.0 - TC * TC)
        k_o = TC * o * (1.0 - o)
        k_ifg = np.stack([g * i * (1.0 - i), C_prev * f * (1.0 - f), i * (1.0 - g * g)], axis=1)
        f = np.ascontiguousarray(f)
        dZ = np.empty((T, 4, B, h))
        dh = np.empty((B, h))
        dc = np.zeros((B, h))
        tmp = np.empty((B, h))
        UT = np.ascontiguousarray(U.T)
        dh_next = np.zeros((B, h))
        for t in range(T - 1, -1, -1):
            np.add(dH[t], dh_next, out=dh)
            if t < T - 1:
                dc *= f[t + 1]
            np.multiply(dh, k_c[t], out=tmp)
            dc += tmp
            dz = dZ[t]
            np.multiply(dh, k_o[t], out=dz[0])
            np.multiply(dc, k_ifg[t], out=dz[1:])
            if t:
                np.matmul(dz.transpose(1, 0, 2).reshape(B, 4 * h), UT, out=dh_next)
        flat = dZ.transpose(0, 2, 1, 3).reshape(T * B, 4 * h)
        grads = None
        if need_weight_grad:
            H_prev = np.concatenate([np.zeros((1, B, h)), H[:-1]]).reshape(T * B, h)
            grads = (self.X.reshape(T * B, -1).T @ flat, H_prev.T @ flat, flat.sum(axis=0))
        dX = (flat @ self.W.T).reshape(T, B, -1) if need_input_grad else None
        return dX, grads


def _split(name_prefix, grads, h):
    dW, dU, db = grads
    out = {}
    for k, gate in enumerate(FUSED_ORDER):
        sl = slice(k * h, (k + 1) * h)
        out[f"{name_prefix}.W{gate}"] = dW[:, sl]
        out[f"{name_prefix}.U{gate}"] = dU[:, sl]
        out[f"{name_prefix}.b{gate}"] = db[sl]
    return out


class BiLSTMCache:
    def __init__(self, layers):
        self.layers = layers  # list of {direction: _Direction}


def bilstm_forward(x, params, config):
    """``x``: (B, T, D) batch-major. Returns (B, T, 2*hidden) and a cache."""
    if x.ndim != 3 or x.shape[2] != config.input_dim:
        raise ValueError(f"expected (B, T, {config.input_dim}) input, got {x.shape}")
    seq = np.ascontiguousarray(x.transpose(1, 0, 2))
    layers = []
    for layer in range(1, config.layers + 1):
        dirs = {}
        outs = []
        for direction in DIRECTIONS:
            W, U, b = fused(params, f"l{layer}.{direction}")
            inp = seq if direction == "fwd" else seq[::-1]
            run = _Direction(np.ascontiguousarray(inp), W, U, b)
            dirs[direction] = run
            outs.append(run.H if direction == "fwd" else run.H[::-1])
        seq = np.concatenate(outs, axis=2)
        layers.append(dirs)
    return seq.transpose(1, 0, 2), BiLSTMCache(layers)


def bilstm_backward(d_out, cache, config, need_weight_grad=True):
    """``d_out``: (B, T, 2*hidden). Returns gradients keyed by parameter name."""
    h = config.hidden
    d_seq = np.ascontiguousarray(d_out.transpose(1, 0, 2))
    grads = {}
    for layer in range(config.layers, 0, -1):
        dirs = cache.layers[layer - 1]
        need_dx = layer > 1
        d_in = None
        for direction, sl in (("fwd", slice(0, h)), ("bwd", slice(h, 2 * h))):
            dH = d_seq[:, :, sl]
            if direction == "bwd":
                dH = dH[::-1]
            dX, g = dirs[direction].backward(np.ascontiguousarray(dH), need_dx, need_weight_grad)
            if g is not None:
                grads.update(_split(f"l{layer}.{direction}", g, h))
            if need_dx:
                dX = dX if direction == "fwd" else dX[::-1]
                d_in = dX if d_in is None else d_in + dX
        d_seq = d_in
    return grads
