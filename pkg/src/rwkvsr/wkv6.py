"""WKV linear-attention primitive.

Two implementations of one contract:

  * `wkv6_recurrent` -- the sequential matrix-state recurrence, O(T) time,
    differentiable, backed by the active kernel lane;
  * `wkv6_reference` -- a direct double-summation expansion used as the
    oracle in tests (T <= 64, forward only).

Per head with state S (D x D, zero-initialized) and decay
d_t = exp(-exp(w_t)) from the per-step decay logits w:

    out_t = r_t . (S + diag(u) (k_t^T (x) v_t))
    S    <- diag(d_t) S + k_t^T (x) v_t

so the state read at step t carries decays d_{i+1}..d_{t-1} applied to the
contribution of step i, and the current token enters through the bonus u.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .tensor import DTYPE, Tensor, as_tensor, record_op


def decay_from_ww(ww):
    """Map decay logits to multiplicative decay: d = exp(-exp(ww)) in (0, 1].

    Computed in float64 so extreme logits saturate cleanly (ww -> -inf gives
    d -> 1, ww -> +inf gives d -> 0) instead of overflowing.
    """
    ww = as_tensor(ww)
    e64 = np.exp(ww.data.astype(np.float64))
    d64 = np.exp(-e64)
    return record_op(
        d64.astype(DTYPE),
        (ww,),
        lambda g: ((g.astype(np.float64) * (-e64) * d64).astype(DTYPE),),
    )


@dataclass
class WkvInputs:
    """Inputs of one WKV call: rank-3 (N, T, C) tensors plus the bonus.

    `w` holds the per-step decay logits (the ww projection output); the
    decay map is applied inside the recurrence. `heads` is the head count,
    with head dimension D = C / heads.
    """

    r: Tensor
    k: Tensor
    v: Tensor
    w: Tensor
    u: object  # Param or Tensor, shape (C,)
    heads: int

    def __post_init__(self):
        self.r, self.k, self.v, self.w = (as_tensor(t) for t in (self.r, self.k, self.v, self.w))
        shape = self.r.shape
        if len(shape) != 3:
            raise ValueError(f"wkv inputs must be rank-3 (N, T, C), got {shape}")
        for name, t in (("k", self.k), ("v", self.v), ("w", self.w)):
            if t.shape != shape:
                raise ValueError(f"wkv input {name} has shape {t.shape}, expected {shape}")
        c = shape[2]
        if self.heads < 1 or c % self.heads != 0:
            raise ValueError(f"channels {c} not divisible by head count {self.heads}")
        if as_tensor(self.u).shape != (c,):
            raise ValueError(f"u must have shape ({c},), got {as_tensor(self.u).shape}")


def wkv6_recurrent(inputs):
    """Linear-time recurrent WKV; differentiable w.r.t. r, k, v, w and u."""
    r, k, v, w = inputs.r, inputs.k, inputs.v, inputs.w
    u = as_tensor(inputs.u)
    heads = inputs.heads

    # clip logits so exp stays finite in f32; decay saturates identically
    e32 = np.exp(np.minimum(w.data, DTYPE(30.0)))
    d = np.exp(-e32)
    out = kernels.wkv6_forward(r.data, k.data, v.data, d, u.data, heads)

    def bwd(g):
        dr, dk, dv, dd, du = kernels.wkv6_backward(
            r.data, k.data, v.data, d, u.data, heads, np.ascontiguousarray(g)
        )
        dw = dd * (-e32) * d
        return dr, dk, dv, dw, du

    return record_op(out, (r, k, v, w, u), bwd)


def wkv6_reference(inputs):
    """Direct double-summation expansion of the recurrence (oracle).

    out_t = r_t . ( sum_{i<t} diag(prod_{j=i+1}^{t-1} d_j) (k_i^T (x) v_i)
                    + diag(u) (k_t^T (x) v_t) )

    Float64 throughout, no carried state, forward only, T <= 64.
    """
    r, k, v, w = inputs.r, inputs.k, inputs.v, inputs.w
    u = as_tensor(inputs.u)
    heads = inputs.heads
    n, t, c = r.shape
    if t > 64:
        raise ValueError(f"wkv6_reference is a test oracle; T <= 64 required, got {t}")
    d = c // heads

    def split(a):
        return a.data.astype(np.float64).reshape(n, t, heads, d)

    rr, kk, vv = split(r), split(k), split(v)
    dd = np.exp(-np.exp(w.data.astype(np.float64))).reshape(n, t, heads, d)
    uu = u.data.astype(np.float64).reshape(heads, d)

    out = np.zeros((n, t, heads, d), dtype=np.float64)
    for b in range(n):
        for h in range(heads):
            for step in range(t):
                acc = np.zeros((d, d), dtype=np.float64)
                for i in range(step):
                    w_prod = np.ones(d, dtype=np.float64)
                    for j in range(i + 1, step):
                        w_prod *= dd[b, j, h]
                    acc += (w_prod * kk[b, i, h])[:, None] * vv[b, i, h][None, :]
                acc += (uu[h] * kk[b, step, h])[:, None] * vv[b, step, h][None, :]
                out[b, step, h] = rr[b, step, h] @ acc
    return Tensor(out.reshape(n, t, c).astype(DTYPE))


def bench_wkv(t_list, c, heads, reps, backend="auto"):
    """Time the recurrent forward at each sequence length.

    Returns a list of (T, mean_ms, std_ms) rows; reps == 0 yields no rows.
    """
    impl = kernels.get_backend(backend)
    rows = []
    if reps <= 0:
        return rows
    rng = np.random.default_rng(0)
    u = (0.5 + 0.01 * np.arange(c)).astype(DTYPE)
    for t in t_list:
        r, k, v = (rng.standard_normal((1, t, c)).astype(DTYPE) for _ in range(3))
        d = np.full((1, t, c), 0.9, dtype=DTYPE)
        impl.wkv6_forward(r, k, v, d, u, heads)  # warm-up
        times = []
        for _ in range(reps):
            t0 = time.perf_counter()
            impl.wkv6_forward(r, k, v, d, u, heads)
            times.append((time.perf_counter() - t0) * 1e3)
        rows.append((t, float(np.mean(times)), float(np.std(times))))
    return rows


def time_scaling_exponent(rows):
    """Least-squares slope of log(time) vs log(T) over bench rows."""
    ts = np.log([row[0] for row in rows])
    ms = np.log([max(row[1], 1e-9) for row in rows])
    slope = np.polyfit(ts, ms, 1)[0]
    return float(slope)
