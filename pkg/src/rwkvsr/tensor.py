"""NCHW float32 tensor algebra with reverse-mode differentiation.

The value type is `Tensor`: a rank <= 4 contiguous row-major float32 array.
Learnable weights are `Param` objects (a named Tensor plus an accumulated
gradient). Differentiable operations record themselves on the active `Tape`;
`Tape.backward(loss)` walks the record in reverse and accumulates gradients
into every reachable Param (and makes input gradients queryable).

Numerical conventions:
  * storage is float32 everywhere; reductions (convolution sums, norms,
    means) accumulate in float64 and round once,
  * convolutions on small spatial extents (H*W <= 256) use a fixed
    (channel, ky, kx) summation order so they match a naive loop oracle
    bit for bit,
  * tensors are treated as immutable once created; only the training loop
    updates Param values in place, and it owns the model exclusively.
"""

import math

import numpy as np

from . import kernels

DTYPE = np.float32

# spatial size at or below which convolutions take the deterministic
# fixed-order float64 path instead of BLAS
_SMALL_CONV_AREA = 256


class Tensor:
    """Rank <= 4 contiguous float32 array, interpreted N,C,H,W at rank 4."""

    # _f64: pre-rounding value of scalar reductions, kept so the
    # finite-difference oracle is not limited by float32 rounding of the loss
    __slots__ = ("data", "param", "_f64")

    def __init__(self, data):
        arr = np.ascontiguousarray(data, dtype=DTYPE)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if arr.ndim > 4:
            raise ValueError(f"tensor rank {arr.ndim} exceeds 4 (shape {arr.shape})")
        if arr.size == 0:
            raise ValueError(f"tensor extents must be positive, got shape {arr.shape}")
        self.data = arr
        self.param = None
        self._f64 = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ValueError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        """Copy of the underlying array (callers must not mutate tensors)."""
        return self.data.copy()

    def __repr__(self):
        return f"Tensor(shape={tuple(self.shape)})"


class Param:
    """Named learnable tensor with a same-shape accumulated gradient."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name, data):
        self.name = name
        self.value = Tensor(np.array(data, dtype=DTYPE, copy=True))
        self.value.param = self
        self.grad = np.zeros_like(self.value.data)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Param({self.name!r}, shape={tuple(self.shape)})"


def as_tensor(x):
    if isinstance(x, Param):
        return x.value
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


_ACTIVE_TAPE = None


class Tape:
    """Ordered record of differentiable operations for one forward pass."""

    def __init__(self):
        self._records = []
        self._grads = None

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("a Tape is already active; tapes do not nest")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def backward(self, loss):
        """Accumulate d(loss)/d(param) into every reachable Param.grad.

        `loss` must be a scalar tensor produced while this tape was active.
        Running backward twice without zeroing grads doubles them exactly.
        """
        loss = as_tensor(loss)
        if loss.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads = {id(loss): np.ones_like(loss.data)}
        touched = {}
        for out, inputs, fn in reversed(self._records):
            g = grads.get(id(out))
            if g is None:
                continue
            contribs = fn(g)
            for inp, gi in zip(inputs, contribs):
                if gi is None:
                    continue
                key = id(inp)
                prev = grads.get(key)
                grads[key] = gi if prev is None else prev + gi
                touched[key] = inp
        for key, t in touched.items():
            if t.param is not None:
                t.param.grad += grads[key]
        self._grads = grads

    def grad_of(self, t):
        """Gradient of the last backward() w.r.t. tensor `t` (zeros if unused)."""
        if self._grads is None:
            raise RuntimeError("grad_of called before backward")
        t = as_tensor(t)
        g = self._grads.get(id(t))
        return np.zeros_like(t.data) if g is None else g.copy()

    def reset(self):
        self._records.clear()
        self._grads = None


def record_op(data, inputs, backward):
    """Wrap raw op output in a Tensor, recording it if a tape is active.

    `backward(gout) -> tuple of gradients aligned with inputs` (None entries
    for non-differentiable arguments).
    """
    out = Tensor(data)
    if _ACTIVE_TAPE is not None:
        _ACTIVE_TAPE._records.append((out, tuple(as_tensor(i) for i in inputs), backward))
    return out


def is_recording():
    return _ACTIVE_TAPE is not None


# ---------------------------------------------------------------------------
# elementwise ops


def _check_broadcast(a, b, opname):
    try:
        res = np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        res = None
    if res != a.shape:
        raise ValueError(
            f"{opname}: shape {b.shape} does not broadcast into {a.shape}"
        )


def _reduce_to(g, shape):
    """Sum gradient over axes that were broadcast to reach g's shape."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return np.ascontiguousarray(g, dtype=DTYPE)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return record_op(
        a.data + b.data,
        (a, b),
        lambda g: (g, _reduce_to(g, b.shape)),
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return record_op(
        a.data - b.data,
        (a, b),
        lambda g: (g, -_reduce_to(g, b.shape)),
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data
    return record_op(
        ad * bd,
        (a, b),
        lambda g: (g * bd, _reduce_to(g * ad, b.shape)),
    )


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul}


def elementwise(op, a, b):
    """Dispatch add/sub/mul by name (b may broadcast into a, never the reverse)."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"elementwise op must be one of {sorted(_ELEMENTWISE)}, got {op!r}")
    return fn(a, b)


def smul(a, s):
    """Multiply by a python scalar."""
    a = as_tensor(a)
    s = float(s)
    return record_op(a.data * DTYPE(s), (a,), lambda g: (g * DTYPE(s),))


def sigmoid(x):
    x = as_tensor(x)
    xd = x.data
    # overflow-free form: exp of a non-positive argument only
    e = np.exp(-np.abs(xd))
    y = np.where(xd >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(DTYPE)
    return record_op(y, (x,), lambda g: (g * y * (1.0 - y),))


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return record_op(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def relu_sq(x):
    """relu(x)^2, fused (the squared-relu key activation)."""
    x = as_tensor(x)
    pos = np.maximum(x.data, 0.0)
    return record_op(pos * pos, (x,), lambda g: (g * (2.0 * pos),))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x):
    """tanh-form GELU (the artifact's definition of GELU)."""
    x = as_tensor(x)
    xd = x.data.astype(np.float64)
    inner = _GELU_C * (xd + 0.044715 * xd**3)
    th = np.tanh(inner)
    y = 0.5 * xd * (1.0 + th)

    def bwd(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * xd**2)
        dy = 0.5 * (1.0 + th) + 0.5 * xd * (1.0 - th**2) * dinner
        return (np.asarray(g * dy, dtype=DTYPE),)

    return record_op(y.astype(DTYPE), (x,), bwd)


def absval(x):
    """|x| with subgradient 0 at exact zeros."""
    x = as_tensor(x)
    s = np.sign(x.data)
    return record_op(np.abs(x.data), (x,), lambda g: (g * s,))


def sum_all(x):
    x = as_tensor(x)
    total = np.sum(x.data, dtype=np.float64)
    out = record_op(
        np.array([total], dtype=DTYPE),
        (x,),
        lambda g: (np.full_like(x.data, g.reshape(-1)[0]),),
    )
    out._f64 = float(total)
    return out


def mean_all(x):
    x = as_tensor(x)
    n = x.size
    total = np.sum(x.data, dtype=np.float64) / n
    out = record_op(
        np.array([total], dtype=DTYPE),
        (x,),
        lambda g: (np.full_like(x.data, g.reshape(-1)[0] / n),),
    )
    out._f64 = float(total)
    return out


def cvec(v):
    """View a (C,) vector as a (1, C, 1, 1) per-channel broadcast tensor."""
    v = as_tensor(v)
    if v.data.ndim != 1:
        raise ValueError(f"cvec expects a rank-1 tensor, got shape {v.shape}")
    c = v.shape[0]
    return record_op(
        v.data.reshape(1, c, 1, 1),
        (v,),
        lambda g: (g.reshape(c),),
    )


# ---------------------------------------------------------------------------
# linear / convolution ops


def linear_cw(x, w):
    """Per-pixel channel projection: out[n,:,h,w] = W @ x[n,:,h,w].

    x: (N, C_in, H, W); w: (C_out, C_in). Equivalent to a 1x1 convolution.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.data.ndim != 4:
        raise ValueError(f"linear_cw expects rank-4 input, got shape {x.shape}")
    if w.data.ndim != 2 or w.shape[1] != x.shape[1]:
        raise ValueError(
            f"linear_cw: weight {w.shape} incompatible with {x.shape[1]} input channels"
        )
    n, c, h, wd = x.shape
    co = w.shape[0]
    xm = x.data.reshape(n, c, h * wd)
    y = np.matmul(w.data, xm)

    def bwd(g):
        gm = g.reshape(n, co, h * wd)
        gx = np.matmul(w.data.T, gm).reshape(n, c, h, wd)
        xmt = np.ascontiguousarray(xm.transpose(0, 2, 1))
        gw = np.matmul(gm, xmt).sum(axis=0)
        return gx, gw

    return record_op(y.reshape(n, co, h, wd), (x, w), bwd)


def _conv3x3_small(xpad, kern, bias):
    """Fixed-order float64 path: accumulate taps in (c_in, ky, kx) order."""
    n = xpad.shape[0]
    co, ci = kern.shape[0], kern.shape[1]
    h, w = xpad.shape[2] - 2, xpad.shape[3] - 2
    acc = np.zeros((n, co, h, w), dtype=np.float64)
    acc += bias.astype(np.float64)[None, :, None, None]
    k64 = kern.astype(np.float64)
    x64 = xpad.astype(np.float64)
    for c in range(ci):
        for ky in range(3):
            for kx in range(3):
                acc += (
                    k64[:, c, ky, kx][None, :, None, None]
                    * x64[:, c, ky : ky + h, kx : kx + w][:, None]
                )
    return acc.astype(DTYPE)


def _im2col3x3(xpad, h, w):
    """(N, Cin, Hp, Wp) padded input -> contiguous (N, Cin*9, H*W) columns."""
    n, c = xpad.shape[0], xpad.shape[1]
    col = np.empty((n, c, 9, h, w), dtype=DTYPE)
    for ky in range(3):
        for kx in range(3):
            col[:, :, ky * 3 + kx] = xpad[:, :, ky : ky + h, kx : kx + w]
    return col.reshape(n, c * 9, h * w)


def conv2d_3x3(x, kern, bias):
    """Full cross-channel 3x3 convolution with same padding 1.

    kern: (C_out, C_in, 3, 3); bias: (C_out,).
    """
    x, kern, bias = as_tensor(x), as_tensor(kern), as_tensor(bias)
    if x.data.ndim != 4:
        raise ValueError(f"conv2d_3x3 expects rank-4 input, got shape {x.shape}")
    if kern.data.ndim != 4 or kern.shape[2:] != (3, 3):
        raise ValueError(f"conv2d_3x3 kernel must be (C_out, C_in, 3, 3), got {kern.shape}")
    if kern.shape[1] != x.shape[1]:
        raise ValueError(
            f"conv2d_3x3: kernel expects {kern.shape[1]} channels, input has {x.shape[1]}"
        )
    if bias.shape != (kern.shape[0],):
        raise ValueError(f"conv2d_3x3 bias {bias.shape} must be ({kern.shape[0]},)")
    n, c, h, w = x.shape
    co = kern.shape[0]
    xpad = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    small = h * w <= _SMALL_CONV_AREA
    col = None
    if small:
        y = _conv3x3_small(xpad, kern.data, bias.data)
    else:
        col = _im2col3x3(xpad, h, w)
        y = np.matmul(kern.data.reshape(co, c * 9), col).reshape(n, co, h, w)
        y += bias.data[None, :, None, None]

    def bwd(g):
        cols = _im2col3x3(xpad, h, w) if col is None else col
        gm = g.reshape(n, co, h * w)
        gk = np.einsum("nop,nip->oi", gm, cols, optimize=True).reshape(co, c, 3, 3)
        gpad = np.pad(g, ((0, 0), (0, 0), (1, 1), (1, 1)))
        gcol = _im2col3x3(gpad, h, w)
        kflip = np.ascontiguousarray(
            kern.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        ).reshape(c, co * 9)
        gx = np.matmul(kflip, gcol).reshape(n, c, h, w)
        gb = g.sum(axis=(0, 2, 3))
        return gx, np.ascontiguousarray(gk, dtype=DTYPE), gb.astype(DTYPE)

    return record_op(y, (x, kern, bias), bwd)


def depthwise_conv2d(x, kern, dilation=1):
    """Depthwise (per-channel) k x k convolution with same padding.

    kern: (C, 1, k, k) with odd k; dilation >= 1. Routed through the active
    kernel backend; float64 accumulation in fixed tap order in both lanes.
    """
    x, kern = as_tensor(x), as_tensor(kern)
    if x.data.ndim != 4:
        raise ValueError(f"depthwise_conv2d expects rank-4 input, got shape {x.shape}")
    if kern.data.ndim != 4 or kern.shape[1] != 1 or kern.shape[2] != kern.shape[3]:
        raise ValueError(f"depthwise kernel must be (C, 1, k, k), got {kern.shape}")
    if kern.shape[2] % 2 == 0:
        raise ValueError(f"depthwise kernel size must be odd, got {kern.shape[2]}")
    if int(dilation) < 1:
        raise ValueError(f"dilation must be >= 1, got {dilation}")
    if kern.shape[0] != x.shape[1]:
        raise ValueError(
            f"depthwise kernel channels {kern.shape[0]} != input channels {x.shape[1]}"
        )
    dilation = int(dilation)
    if kern.shape[2] == 1:
        # 1x1 depthwise is a per-channel scale; the single f32 multiply is
        # the correctly rounded product, identical to the kernel lanes
        kvec = kern.data.reshape(1, kern.shape[0], 1, 1)
        y = x.data * kvec

        def bwd1(g):
            gk = (g * x.data).sum(axis=(0, 2, 3), dtype=np.float64)
            return g * kvec, gk.astype(DTYPE).reshape(kern.shape)

        return record_op(y, (x, kern), bwd1)

    y = kernels.dwconv2d_forward(x.data, kern.data, dilation)

    def bwd(g):
        gx, gk = kernels.dwconv2d_backward(x.data, kern.data, dilation, np.ascontiguousarray(g))
        return gx, gk

    return record_op(y, (x, kern), bwd)


# ---------------------------------------------------------------------------
# layout ops (exact permutations)


def transpose_hw(x):
    """Swap the two spatial axes: out[n,c,j,i] == in[n,c,i,j]."""
    x = as_tensor(x)
    if x.data.ndim != 4:
        raise ValueError(f"transpose_hw expects rank-4 input, got shape {x.shape}")
    return record_op(
        np.ascontiguousarray(x.data.swapaxes(2, 3)),
        (x,),
        lambda g: (np.ascontiguousarray(g.swapaxes(2, 3)),),
    )


def pixel_shuffle(x, r):
    """Sub-pixel rearrangement: (N, C, H, W) -> (N, C/r^2, rH, rW).

    out[n, c, r*h+a, r*w+b] == in[n, c*r^2 + a*r + b, h, w].
    """
    x = as_tensor(x)
    r = int(r)
    if r < 1:
        raise ValueError(f"pixel_shuffle factor must be positive, got {r}")
    if x.data.ndim != 4:
        raise ValueError(f"pixel_shuffle expects rank-4 input, got shape {x.shape}")
    n, c, h, w = x.shape
    if c % (r * r) != 0:
        raise ValueError(f"channels {c} not divisible by r^2 = {r * r}")
    co = c // (r * r)
    y = (
        x.data.reshape(n, co, r, r, h, w)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(n, co, h * r, w * r)
    )

    def bwd(g):
        gx = (
            g.reshape(n, co, h, r, w, r)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(n, c, h, w)
        )
        return (np.ascontiguousarray(gx),)

    return record_op(np.ascontiguousarray(y), (x,), bwd)


# ---------------------------------------------------------------------------
# normalization


def layer_norm_cw(x, gamma, beta, eps=1e-5):
    """Per-pixel normalization over the channel axis, then scale and shift.

    gamma, beta: (C,). Mean/variance accumulate in float64.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.data.ndim != 4:
        raise ValueError(f"layer_norm_cw expects rank-4 input, got shape {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(
            f"layer_norm_cw: gamma {gamma.shape} / beta {beta.shape} must be ({c},)"
        )
    # reductions in float64, elementwise math in float32
    mu = x.data.mean(axis=1, keepdims=True, dtype=np.float64)
    var = x.data.var(axis=1, keepdims=True, dtype=np.float64)
    inv = (1.0 / np.sqrt(var + eps)).astype(DTYPE)
    xhat = (x.data - mu.astype(DTYPE)) * inv
    y = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    def bwd(g):
        dxhat = g * gamma.data[None, :, None, None]
        m1 = dxhat.mean(axis=1, keepdims=True, dtype=np.float64).astype(DTYPE)
        m2 = (dxhat * xhat).mean(axis=1, keepdims=True, dtype=np.float64).astype(DTYPE)
        gx = (dxhat - m1 - xhat * m2) * inv
        ggamma = (g * xhat).sum(axis=(0, 2, 3), dtype=np.float64)
        gbeta = g.sum(axis=(0, 2, 3), dtype=np.float64)
        return gx, ggamma.astype(DTYPE), gbeta.astype(DTYPE)

    return record_op(y, (x, gamma, beta), bwd)


# ---------------------------------------------------------------------------
# bicubic resampling (not differentiable; data synthesis and baseline only)


def _cubic_kernel(t):
    """Cubic convolution kernel with a = -0.5 (Catmull-Rom family)."""
    a = -0.5
    at = np.abs(t)
    out = np.zeros_like(at)
    m1 = at <= 1.0
    out[m1] = (a + 2.0) * at[m1] ** 3 - (a + 3.0) * at[m1] ** 2 + 1.0
    m2 = (at > 1.0) & (at < 2.0)
    out[m2] = a * at[m2] ** 3 - 5.0 * a * at[m2] ** 2 + 8.0 * a * at[m2] - 4.0 * a
    return out


def _resize_matrix(n_in, n_out):
    """Dense (n_out, n_in) float64 bicubic weight matrix, edge clamped."""
    scale = n_in / n_out
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * scale - 0.5
    base = np.floor(src).astype(np.int64)
    mat = np.zeros((n_out, n_in), dtype=np.float64)
    for tap in range(-1, 3):
        idx = base + tap
        wgt = _cubic_kernel(src - idx)
        np.add.at(mat, (np.arange(n_out), np.clip(idx, 0, n_in - 1)), wgt)
    return mat


def bicubic_resize(x, out_h, out_w):
    """Bicubic resampling (a = -0.5, edge clamp) to (out_h, out_w).

    Raises if called under an active tape: the op has no backward pass.
    """
    x = as_tensor(x)
    if x.data.ndim != 4:
        raise ValueError(f"bicubic_resize expects rank-4 input, got shape {x.shape}")
    out_h, out_w = int(out_h), int(out_w)
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target size must be positive, got {out_h}x{out_w}")
    if is_recording():
        raise RuntimeError("bicubic_resize is not differentiable; do not call it under a Tape")
    n, c, h, w = x.shape
    rm = _resize_matrix(h, out_h)
    cm = _resize_matrix(w, out_w)
    x64 = x.data.astype(np.float64)
    y = np.einsum("oi,ncij->ncoj", rm, x64, optimize=True)
    y = np.einsum("pj,ncoj->ncop", cm, y, optimize=True)
    return Tensor(y.astype(DTYPE))


# ---------------------------------------------------------------------------
# finite-difference gradient oracle


def fd_grad_check(f, x, h=1e-3):
    """Max relative error between tape gradients and central differences.

    `f` maps a Tensor to a scalar Tensor and must be deterministic. The
    check perturbs every coordinate of `x`; intended for small tensors.
    h must lie in [1e-4, 1e-2].
    """
    if not 1e-4 <= h <= 1e-2:
        raise ValueError(f"h must be in [1e-4, 1e-2], got {h}")
    x = as_tensor(x)
    xt = Tensor(x.data.copy())
    with Tape() as tape:
        loss = f(xt)
        tape.backward(loss)
    analytic = tape.grad_of(xt).astype(np.float64).ravel()

    def scalar(t):
        # prefer the pre-rounding float64 value of the final reduction
        return t._f64 if t._f64 is not None else t.item()

    flat = x.data.ravel()
    numeric = np.empty_like(analytic)
    for i in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += DTYPE(h)
        xm[i] -= DTYPE(h)
        fp = scalar(f(Tensor(xp.reshape(x.shape))))
        fm = scalar(f(Tensor(xm.reshape(x.shape))))
        step = float(xp[i]) - float(xm[i])  # the step actually taken in f32
        numeric[i] = (fp - fm) / step
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    return float(np.max(np.abs(analytic - numeric) / denom))


def fd_grad_check_param(make_loss, param, h=1e-3):
    """fd_grad_check against the accumulated Param.grad instead of an input.

    `make_loss()` must evaluate the loss with the parameter's current
    values; the probe perturbs `param.value` in place. This exercises the
    exact gradient route the optimizer consumes.
    """
    if not 1e-4 <= h <= 1e-2:
        raise ValueError(f"h must be in [1e-4, 1e-2], got {h}")
    param.zero_grad()
    with Tape() as tape:
        tape.backward(make_loss())
    analytic = param.grad.astype(np.float64).ravel().copy()

    def scalar(t):
        return t._f64 if t._f64 is not None else t.item()

    flat = param.value.data.reshape(-1)
    numeric = np.empty_like(analytic)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + DTYPE(h)
        hi = float(flat[i])
        fp = scalar(make_loss())
        flat[i] = orig - DTYPE(h)
        lo = float(flat[i])
        fm = scalar(make_loss())
        flat[i] = orig
        numeric[i] = (fp - fm) / (hi - lo)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    return float(np.max(np.abs(analytic - numeric) / denom))
