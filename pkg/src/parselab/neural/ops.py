"""Differentiable primitives.

Every ``*_forward`` returns ``(output, cache)`` and the matching
``*_backward`` maps the upstream gradient and the cache to gradients of the
inputs and parameters.  Arrays keep whatever float dtype they come in with.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


class ShapeError(ValueError):
    pass


def sigmoid(x):
    return expit(x)


# -- embedding ---------------------------------------------------------------

def embedding_forward(table, ids):
    return table[ids], (table.shape, ids)


def embedding_backward(dout, cache):
    shape, ids = cache
    dtable = np.zeros(shape, dtype=dout.dtype)
    np.add.at(dtable, ids.reshape(-1), dout.reshape(-1, shape[1]))
    return dtable


# -- recurrent cell ----------------------------------------------------------

def lstm_cell_forward(x, h, c, Wx, Wh, b):
    """One LSTM step; gate order in the packed weights is input, forget, candidate, output."""
    H = h.shape[-1]
    z = x @ Wx + h @ Wh + b
    i = sigmoid(z[:, :H])
    f = sigmoid(z[:, H:2 * H])
    g = np.tanh(z[:, 2 * H:3 * H])
    o = sigmoid(z[:, 3 * H:])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    return (h_new, c_new), (x, h, c, i, f, g, o, tc, Wx, Wh)


def lstm_cell_backward(dh_new, dc_new, cache):
    x, h, c, i, f, g, o, tc, Wx, Wh = cache
    do = dh_new * tc
    dc = dc_new + dh_new * o * (1.0 - tc * tc)
    di = dc * g
    dg = dc * i
    df = dc * c
    dc_prev = dc * f
    dz = np.concatenate([di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)], axis=1)
    return {"x": dz @ Wx.T, "h": dz @ Wh.T, "c": dc_prev,
            "Wx": x.T @ dz, "Wh": h.T @ dz, "b": dz.sum(axis=0)}


def lstm_forward(X, Wx, Wh, b):
    """Unidirectional LSTM over (B, T, I) from zero state; returns (B, T, H)."""
    B, T, _ = X.shape
    H = Wh.shape[0]
    XZ = X @ Wx + b
    h = np.zeros((B, H), dtype=X.dtype)
    c = np.zeros((B, H), dtype=X.dtype)
    out = np.empty((B, T, H), dtype=X.dtype)
    steps = []
    for t in range(T):
        z = XZ[:, t] + h @ Wh
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = sigmoid(z[:, 3 * H:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        steps.append((h, c, i, f, g, o, tc))
        h, c = h_new, c_new
        out[:, t] = h
    return out, (X, Wx, Wh, steps)


def lstm_backward(dout, cache):
    X, Wx, Wh, steps = cache
    B, T, _ = X.shape
    H = Wh.shape[0]
    dZ = np.empty((B, T, 4 * H), dtype=dout.dtype)
    dWh = np.zeros_like(Wh)
    dh = np.zeros((B, H), dtype=dout.dtype)
    dc = np.zeros((B, H), dtype=dout.dtype)
    for t in range(T - 1, -1, -1):
        h_prev, c_prev, i, f, g, o, tc = steps[t]
        dh = dh + dout[:, t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        dz = np.concatenate([dc * g * i * (1 - i), dc * c_prev * f * (1 - f),
                             dc * i * (1 - g * g), do * o * (1 - o)], axis=1)
        dZ[:, t] = dz
        dWh += h_prev.T @ dz
        dh = dz @ Wh.T
        dc = dc * f
    dWx = np.einsum("bti,btj->ij", X, dZ)
    db = dZ.sum(axis=(0, 1))
    dX = dZ @ Wx.T
    return {"X": dX, "Wx": dWx, "Wh": dWh, "b": db}


def reverse_index(lengths, T):
    """Index that reverses each row within its length and leaves padding in place."""
    idx = np.tile(np.arange(T), (len(lengths), 1))
    for r, n in enumerate(lengths):
        idx[r, :n] = np.arange(n)[::-1]
    return idx


def _gather(X, idx):
    return np.take_along_axis(X, idx[:, :, None], axis=1)


def bilstm_forward(X, lengths, fw, bw):
    """Bidirectional layer; ``fw``/``bw`` are (Wx, Wh, b).  Output (B, T, 2H), forward channel first."""
    T = X.shape[1]
    rev = reverse_index(lengths, T)
    out_f, cf = lstm_forward(X, *fw)
    out_b_rev, cb = lstm_forward(_gather(X, rev), *bw)
    out_b = _gather(out_b_rev, rev)
    return np.concatenate([out_f, out_b], axis=2), (cf, cb, rev, out_f.shape[2])


def bilstm_backward(dout, cache):
    cf, cb, rev, H = cache
    gf = lstm_backward(dout[:, :, :H], cf)
    gb = lstm_backward(_gather(dout[:, :, H:], rev), cb)
    dX = gf["X"] + _gather(gb["X"], rev)
    return dX, (gf["Wx"], gf["Wh"], gf["b"]), (gb["Wx"], gb["Wh"], gb["b"])


# -- dense heads -------------------------------------------------------------

def linear_relu_forward(X, W, b):
    Z = X @ W + b
    return np.maximum(Z, 0.0), (X, W, Z)


def linear_relu_backward(dout, cache):
    X, W, Z = cache
    dZ = dout * (Z > 0)
    X2 = X.reshape(-1, X.shape[-1])
    dZ2 = dZ.reshape(-1, dZ.shape[-1])
    return {"X": dZ @ W.T, "W": X2.T @ dZ2, "b": dZ2.sum(axis=0)}


def linear_forward(X, W, b):
    return X @ W + b, (X, W)


def linear_backward(dout, cache):
    X, W = cache
    X2 = X.reshape(-1, X.shape[-1])
    d2 = dout.reshape(-1, dout.shape[-1])
    return {"X": dout @ W.T, "W": X2.T @ d2, "b": d2.sum(axis=0)}


# -- biaffine ----------------------------------------------------------------

def biaffine_apply(x, W, b, W2, b2):
    """W2 (W x + b) + b2."""
    x = np.asarray(x)
    if W.shape[1] != x.shape[-1] or W2.shape[1] != W.shape[0] or b.shape[-1] != W.shape[0] \
            or b2.shape[-1] != W2.shape[0]:
        raise ShapeError(f"incompatible shapes x{x.shape} W{W.shape} b{b.shape} W'{W2.shape} b'{b2.shape}")
    return W2 @ (W @ x + b) + b2


def biaffine_apply_forward(x, W, b, W2, b2):
    u = W @ x + b
    return biaffine_apply(x, W, b, W2, b2), (x, W, W2, u)


def biaffine_apply_backward(dout, cache):
    x, W, W2, u = cache
    du = W2.T @ dout
    return {"x": W.T @ du, "W": np.outer(du, x), "b": du, "W2": np.outer(dout, u), "b2": dout}


def biaffine_arc_forward(Hh, Hd, U, u_head, u_dep, bias):
    """S[..., h, d] = Hh[h] U Hd[d] + u_head . Hh[h] + u_dep . Hd[d] + bias for (B, T, k) inputs."""
    HU = Hh @ U
    S = HU @ np.swapaxes(Hd, -1, -2)
    S = S + (Hh @ u_head)[..., :, None] + (Hd @ u_dep)[..., None, :] + bias
    return S, (Hh, Hd, U, u_head, u_dep, HU)


def biaffine_arc_backward(dS, cache):
    Hh, Hd, U, u_head, u_dep, HU = cache
    dHU = dS @ Hd
    rows = dS.sum(axis=-1)
    cols = dS.sum(axis=-2)
    dHh = dHU @ U.T + rows[..., None] * u_head
    dHd = np.swapaxes(dS, -1, -2) @ HU + cols[..., None] * u_dep
    Hh2 = Hh.reshape(-1, Hh.shape[-1])
    dU = Hh2.T @ dHU.reshape(-1, dHU.shape[-1])
    du_head = rows.reshape(-1) @ Hh2
    du_dep = cols.reshape(-1) @ Hd.reshape(-1, Hd.shape[-1])
    return {"Hh": dHh, "Hd": dHd, "U": dU, "u_head": du_head, "u_dep": du_dep, "bias": np.asarray(dS.sum())}


def biaffine_label_forward(hh, hd, U, W_head, W_dep, b):
    """Per-pair label scores (P, L) = hh U_l hd + W_head^T hh + W_dep^T hd + b."""
    S = np.einsum("pi,lij,pj->pl", hh, U, hd, optimize=True) + hh @ W_head + hd @ W_dep + b
    return S, (hh, hd, U, W_head, W_dep)


def biaffine_label_backward(dS, cache):
    hh, hd, U, W_head, W_dep = cache
    dhh = np.einsum("pl,lij,pj->pi", dS, U, hd, optimize=True) + dS @ W_head.T
    dhd = np.einsum("pl,lij,pi->pj", dS, U, hh, optimize=True) + dS @ W_dep.T
    dU = np.einsum("pl,pi,pj->lij", dS, hh, hd, optimize=True)
    return {"hh": dhh, "hd": dhd, "U": dU, "W_head": hh.T @ dS, "W_dep": hd.T @ dS, "b": dS.sum(axis=0)}


# -- gate fusion -------------------------------------------------------------

def gate_fuse_forward(hb, ha, Wg, bg):
    """g = sigmoid([hb; ha] Wg + bg); out = g * hb + (1 - g) * ha."""
    cat = np.concatenate([hb, ha], axis=-1)
    g = sigmoid(cat @ Wg + bg)
    return g * hb + (1.0 - g) * ha, (cat, hb, ha, g, Wg)


def gate_fuse_backward(dout, cache):
    cat, hb, ha, g, Wg = cache
    dg = dout * (hb - ha)
    dz = dg * g * (1.0 - g)
    dcat = dz @ Wg.T
    d = hb.shape[-1]
    cat2 = cat.reshape(-1, cat.shape[-1])
    dz2 = dz.reshape(-1, dz.shape[-1])
    return {"hb": dout * g + dcat[..., :d], "ha": dout * (1.0 - g) + dcat[..., d:],
            "Wg": cat2.T @ dz2, "bg": dz2.sum(axis=0)}


def gate_fuse(hb, ha, Wg, bg):
    return gate_fuse_forward(hb, ha, Wg, bg)[0]


# -- losses ------------------------------------------------------------------

def softmax_xent_forward(logits, targets, mask=None):
    """Mean cross-entropy of rows of ``logits`` (N, C); ``mask`` marks admissible classes."""
    z = logits if mask is None else np.where(mask, logits, -np.inf)
    zmax = z.max(axis=1, keepdims=True)
    e = np.exp(z - zmax)
    if mask is not None:
        e = np.where(mask, e, 0.0)
    Z = e.sum(axis=1, keepdims=True)
    p = e / Z
    N = logits.shape[0]
    logp = (z - zmax - np.log(Z))[np.arange(N), targets]
    return float(-logp.mean()), (p, targets, N)


def softmax_xent_backward(dloss, cache):
    p, targets, N = cache
    d = p.copy()
    d[np.arange(N), targets] -= 1.0
    return d * (dloss / N)
