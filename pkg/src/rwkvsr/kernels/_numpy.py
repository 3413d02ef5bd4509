"""Pure-numpy kernel lane.

Implements the same contract as the compiled core (`_core.pyx`): a
time-sequential WKV recurrence and a depthwise 2-D convolution, both with
hand-written backward passes. The depthwise forward accumulates in float64
tap-by-tap in (ky, kx) order so that its rounded float32 output is
bit-identical to the compiled lane and to a naive loop oracle.
"""

import numpy as np

NAME = "numpy"


def _split_heads(a, heads):
    b, t, c = a.shape
    return a.reshape(b, t, heads, c // heads)


def wkv6_forward(r, k, v, d, u, heads):
    """Sequential WKV recurrence over the T axis.

    r, k, v, d: float32 (B, T, C); d is the per-step decay in (0, 1].
    u: float32 (C,) current-token bonus. Returns float32 (B, T, C).

    Per head (state S is D x D, zero-initialized):
        out_t = r_t . (S + diag(u) (k_t^T (x) v_t))
        S    <- diag(d_t) S + k_t^T (x) v_t
    """
    b, t, c = r.shape
    dd = c // heads
    rh = _split_heads(r, heads)
    kh = _split_heads(k, heads)
    vh = _split_heads(v, heads)
    dh = _split_heads(d, heads)
    uh = u.reshape(heads, dd)[None]

    out = np.empty((b, t, heads, dd), dtype=np.float32)
    state = np.zeros((b, heads, dd, dd), dtype=np.float32)
    for step in range(t):
        rt, kt, vt, dt = rh[:, step], kh[:, step], vh[:, step], dh[:, step]
        bonus = np.sum(rt * uh * kt, axis=-1, keepdims=True)
        out[:, step] = np.einsum("bhi,bhij->bhj", rt, state) + bonus * vt
        state = dt[..., None] * state + kt[..., None] * vt[..., None, :]
    return np.ascontiguousarray(out.reshape(b, t, c))


def wkv6_backward(r, k, v, d, u, heads, gy):
    """Gradients of wkv6_forward w.r.t. r, k, v, d and u.

    Recomputes the pre-update states forward (checkpoint-free), then walks
    the recurrence in reverse carrying the state adjoint.
    """
    b, t, c = r.shape
    dd = c // heads
    rh = _split_heads(r, heads).astype(np.float32)
    kh = _split_heads(k, heads)
    vh = _split_heads(v, heads)
    dh = _split_heads(d, heads)
    gh = _split_heads(gy, heads)
    uh = u.reshape(heads, dd)[None]

    # states[:, :, s] is S_{s-1}, the state read by step s.
    states = np.empty((b, heads, t, dd, dd), dtype=np.float32)
    state = np.zeros((b, heads, dd, dd), dtype=np.float32)
    for step in range(t):
        states[:, :, step] = state
        kt, vt, dt = kh[:, step], vh[:, step], dh[:, step]
        state = dt[..., None] * state + kt[..., None] * vt[..., None, :]

    dr = np.empty_like(rh)
    dk = np.empty_like(kh)
    dv = np.empty_like(vh)
    dd_out = np.empty_like(dh)
    du = np.zeros((heads, dd), dtype=np.float64)

    adj = np.zeros((b, heads, dd, dd), dtype=np.float32)  # dL/dS_t
    for step in range(t - 1, -1, -1):
        rt, kt, vt, dt = rh[:, step], kh[:, step], vh[:, step], dh[:, step]
        gt = gh[:, step]
        pre = states[:, :, step]
        gv = np.sum(gt * vt, axis=-1, keepdims=True)
        dr[:, step] = np.einsum("bhij,bhj->bhi", pre, gt) + uh * kt * gv
        dk[:, step] = uh * rt * gv + np.einsum("bhij,bhj->bhi", adj, vt)
        dv[:, step] = np.sum(rt * uh * kt, axis=-1, keepdims=True) * gt + np.einsum(
            "bhij,bhi->bhj", adj, kt
        )
        du += np.sum(rt * kt * gv, axis=0, dtype=np.float64)
        dd_out[:, step] = np.sum(adj * pre, axis=-1)
        adj = rt[..., None] * gt[..., None, :] + dt[..., None] * adj

    return (
        np.ascontiguousarray(dr.reshape(b, t, c)),
        np.ascontiguousarray(dk.reshape(b, t, c)),
        np.ascontiguousarray(dv.reshape(b, t, c)),
        np.ascontiguousarray(dd_out.reshape(b, t, c)),
        du.reshape(c).astype(np.float32),
    )


def _tap_slices(size, offset):
    """Valid output/input index ranges for a shifted read at `offset`.

    Degenerates to empty slices when |offset| >= size (kernel taps that
    never overlap the image).
    """
    lo = max(0, -offset)
    hi = max(lo, min(size, size - offset))
    return slice(lo, hi), slice(lo + offset, hi + offset)


def dwconv2d_forward(x, kern, dilation):
    """Depthwise same-padding convolution, float64 accumulation.

    x: float32 (N, C, H, W); kern: float32 (C, 1, kh, kw), kh == kw odd.
    Taps accumulate per element in (ky, kx) order, matching the compiled
    lane bit-for-bit after the single rounding to float32.
    """
    n, c, h, w = x.shape
    kh, kw = kern.shape[2], kern.shape[3]
    pad = dilation * (kh - 1) // 2
    acc = np.zeros((n, c, h, w), dtype=np.float64)
    for ky in range(kh):
        oy = ky * dilation - pad
        ys, iys = _tap_slices(h, oy)
        for kx in range(kw):
            ox = kx * dilation - pad
            xs, ixs = _tap_slices(w, ox)
            wvec = kern[:, 0, ky, kx].astype(np.float64)[None, :, None, None]
            acc[:, :, ys, xs] += wvec * x[:, :, iys, ixs]
    return acc.astype(np.float32)


def dwconv2d_backward(x, kern, dilation, gy):
    """Gradients of dwconv2d_forward w.r.t. the input and the kernel."""
    n, c, h, w = x.shape
    kh, kw = kern.shape[2], kern.shape[3]
    pad = dilation * (kh - 1) // 2
    dx = np.zeros((n, c, h, w), dtype=np.float64)
    dk = np.zeros((c, 1, kh, kw), dtype=np.float64)
    for ky in range(kh):
        oy = ky * dilation - pad
        ys, iys = _tap_slices(h, oy)
        for kx in range(kw):
            ox = kx * dilation - pad
            xs, ixs = _tap_slices(w, ox)
            wvec = kern[:, 0, ky, kx].astype(np.float64)[None, :, None, None]
            g = gy[:, :, ys, xs]
            dx[:, :, iys, ixs] += wvec * g
            dk[:, 0, ky, kx] = np.sum(
                x[:, :, iys, ixs].astype(np.float64) * g, axis=(0, 2, 3)
            )
    return dx.astype(np.float32), dk.astype(np.float32)
