"""Dense, convolutional, recurrent and graph layer primitives in numpy.

Every layer is a pair of pure functions ``*_forward(...) -> (out, cache)``
and ``*_backward(dout, cache) -> grads`` so that analytic gradients can be
compared against central finite differences layer by layer and end to end.
Arrays keep whatever float dtype they arrive with; trainers use float32,
gradient-check tests use float64.
"""

from __future__ import annotations

import numpy as np


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# dense / activation
# ---------------------------------------------------------------------------

def linear_forward(x, w, b):
    """x: (..., D) @ w: (D, F) + b."""
    return x @ w + b, (x, w)


def linear_backward(dout, cache):
    x, w = cache
    d = x.shape[-1]
    xm = x.reshape(-1, d)
    dm = dout.reshape(-1, dout.shape[-1])
    dw = xm.T @ dm
    db = dm.sum(axis=0)
    dx = (dm @ w.T).reshape(x.shape)
    return dx, dw, db


def relu_forward(x):
    return np.maximum(x, 0.0), (x > 0)


def relu_backward(dout, cache):
    return dout * cache


def mean_pool_forward(x, axes: tuple[int, ...]):
    """Global mean over `axes`; cache keeps enough to broadcast back."""
    return x.mean(axis=axes), (x.shape, axes)


def mean_pool_backward(dout, cache):
    shape, axes = cache
    count = 1
    expanded = list(dout.shape)
    for ax in sorted(axes):
        count *= shape[ax]
        expanded.insert(ax, 1)
    return np.broadcast_to(dout.reshape(expanded) / count, shape).copy()


# ---------------------------------------------------------------------------
# 2-D convolution (stride 1) via im2col
# ---------------------------------------------------------------------------

def _im2col(xp, kh, kw):
    n, c, h, w = xp.shape
    ho, wo = h - kh + 1, w - kw + 1
    s = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp, shape=(n, ho, wo, c, kh, kw),
        strides=(s[0], s[2], s[3], s[1], s[2], s[3]))
    return np.ascontiguousarray(windows).reshape(n * ho * wo, c * kh * kw), (ho, wo)


def conv2d_forward(x, w, b, pad=(0, 0)):
    """x: (N, C, H, W), w: (F, C, kh, kw), stride 1, zero padding `pad`."""
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    ph, pw = pad
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cols, (ho, wo) = _im2col(xp, kh, kw)
    wmat = w.reshape(f, -1)
    y = cols @ wmat.T + b
    out = y.reshape(n, ho, wo, f).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), (cols, x.shape, w.shape, pad, (ho, wo))


def conv2d_backward(dout, cache, w):
    cols, x_shape, w_shape, pad, (ho, wo) = cache
    n, c, h, wd = x_shape
    f, _, kh, kw = w_shape
    ph, pw = pad
    dmat = np.ascontiguousarray(dout.transpose(0, 2, 3, 1)).reshape(-1, f)
    dw = (dmat.T @ cols).reshape(w_shape)
    db = dmat.sum(axis=0)
    dcols = (dmat @ w.reshape(f, -1)).reshape(n, ho, wo, c, kh, kw)
    dxp = np.zeros((n, c, h + 2 * ph, wd + 2 * pw), dtype=dout.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + ho, j:j + wo] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    dx = dxp[:, :, ph:h + ph, pw:wd + pw]
    return np.ascontiguousarray(dx), dw, db


# ---------------------------------------------------------------------------
# gated recurrent layer (single direction)
# ---------------------------------------------------------------------------
#
# gate layout inside the (.., 3H) projections: [update z | reset r | candidate n]
#
#   z_t = sigmoid(x_t Wz + h_{t-1} Uz + bz)
#   r_t = sigmoid(x_t Wr + h_{t-1} Ur + br)
#   n_t = tanh(x_t Wn + r_t * (h_{t-1} Un) + bn)
#   h_t = (1 - z_t) * n_t + z_t * h_{t-1}

def gru_forward(x, w, u, b, reverse=False):
    """x: (N, T, D), w: (D, 3H), u: (H, 3H), b: (3H,) -> outputs (N, T, H).

    With reverse=True the sequence is consumed back to front and the output
    is returned re-flipped into original frame order; the "final" state is
    then the one produced after reading frame 0.
    """
    if reverse:
        x = x[:, ::-1]
    n, t, d = x.shape
    hdim = u.shape[0]
    xp = x @ w + b
    h = np.zeros((n, hdim), dtype=x.dtype)
    hs = np.empty((n, t, hdim), dtype=x.dtype)
    zs = np.empty_like(hs)
    rs = np.empty_like(hs)
    ns = np.empty_like(hs)
    qs = np.empty_like(hs)
    h_prevs = np.empty_like(hs)
    uz, ur, un = u[:, :hdim], u[:, hdim:2 * hdim], u[:, 2 * hdim:]
    for step in range(t):
        h_prevs[:, step] = h
        z = sigmoid(xp[:, step, :hdim] + h @ uz)
        r = sigmoid(xp[:, step, hdim:2 * hdim] + h @ ur)
        q = h @ un
        nn_ = np.tanh(xp[:, step, 2 * hdim:] + r * q)
        h = (1.0 - z) * nn_ + z * h
        zs[:, step], rs[:, step], ns[:, step], qs[:, step] = z, r, nn_, q
        hs[:, step] = h
    cache = (x, w, u, zs, rs, ns, qs, h_prevs, reverse)
    outputs = hs[:, ::-1] if reverse else hs
    return np.ascontiguousarray(outputs), h, cache


def gru_backward(doutputs, dh_final, cache):
    """Backprop through time.

    doutputs: (N, T, H) gradient on every per-frame output (frame order as
    returned by gru_forward), or None.  dh_final: extra gradient on the
    final state, or None.  Returns (dx, dw, du, db) with dx in original
    frame order.
    """
    x, w, u, zs, rs, ns, qs, h_prevs, reverse = cache
    n, t, d = x.shape
    hdim = u.shape[0]
    uz, ur, un = u[:, :hdim], u[:, hdim:2 * hdim], u[:, 2 * hdim:]
    if doutputs is None:
        doutputs = np.zeros((n, t, hdim), dtype=x.dtype)
    elif reverse:
        doutputs = doutputs[:, ::-1]
    dh = np.zeros((n, hdim), dtype=x.dtype) if dh_final is None else dh_final.copy()
    dxp = np.empty((n, t, 3 * hdim), dtype=x.dtype)
    du = np.zeros_like(u)
    for step in range(t - 1, -1, -1):
        dh_t = dh + doutputs[:, step]
        z, r, nn_, q, h_prev = (zs[:, step], rs[:, step], ns[:, step],
                                qs[:, step], h_prevs[:, step])
        dn = dh_t * (1.0 - z)
        dz = dh_t * (h_prev - nn_)
        dh = dh_t * z
        dan = dn * (1.0 - nn_ * nn_)
        dr = dan * q
        dq = dan * r
        daz = dz * z * (1.0 - z)
        dar = dr * r * (1.0 - r)
        dxp[:, step, :hdim] = daz
        dxp[:, step, hdim:2 * hdim] = dar
        dxp[:, step, 2 * hdim:] = dan
        dh += dq @ un.T + daz @ uz.T + dar @ ur.T
        du[:, :hdim] += h_prev.T @ daz
        du[:, hdim:2 * hdim] += h_prev.T @ dar
        du[:, 2 * hdim:] += h_prev.T @ dq
    dw = x.reshape(-1, d).T @ dxp.reshape(-1, 3 * hdim)
    db = dxp.sum(axis=(0, 1))
    dx = dxp @ w.T
    if reverse:
        dx = dx[:, ::-1]
    return np.ascontiguousarray(dx), dw, du, db


# ---------------------------------------------------------------------------
# graph convolution over a fixed per-actor adjacency
# ---------------------------------------------------------------------------

def graph_conv_forward(x, a_hat, w, b, actors=2):
    """x: (N, T, V, C) with V = actors * J; a_hat: normalized (J, J).

    Spatial mixing applies a_hat inside each actor block (disjoint
    components), then a shared channel map:  y = mix(x) @ w + b.
    """
    n, t, v, c = x.shape
    j = a_hat.shape[0]
    xr = x.reshape(n, t, actors, j, c)
    mixed = np.einsum("jk,ntmkc->ntmjc", a_hat, xr).reshape(n, t, v, c)
    y = mixed @ w + b
    return y, (mixed, x.shape, a_hat, w, actors)


def graph_conv_backward(dout, cache):
    mixed, x_shape, a_hat, w, actors = cache
    n, t, v, c = x_shape
    j = a_hat.shape[0]
    dmat = dout.reshape(-1, dout.shape[-1])
    dw = mixed.reshape(-1, c).T @ dmat
    db = dmat.sum(axis=0)
    dmixed = (dout @ w.T).reshape(n, t, actors, j, c)
    # mixed = A x  =>  dx = A^T dmixed  (einsum below contracts the first axis)
    dx = np.einsum("jk,ntmjc->ntmkc", a_hat, dmixed).reshape(x_shape)
    return dx, dw, db
