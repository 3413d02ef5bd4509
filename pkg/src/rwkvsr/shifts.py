"""Spatial shift mechanisms behind one common interface.

Three variants, selected by the `shift_mode` config key:

  * `qshift`    -- four channel quarters shifted one pixel left/right/up/down,
  * `omnishift` -- a single learnable 5x5 depthwise convolution,
  * `omniquad`  -- weighted sum of identity, depthwise 1/3/5/7 convolutions
                   and the quad shift (the default).

All three are linear in the input and preserve shape exactly.
"""

from dataclasses import dataclass

import numpy as np

from .tensor import (
    DTYPE,
    Param,
    add,
    as_tensor,
    depthwise_conv2d,
    mul,
    record_op,
)

SHIFT_MODES = ("qshift", "omnishift", "omniquad")

# quarter order: channel quarter q moves one pixel in _QDIRS[q]
_QDIRS = ("left", "right", "up", "down")


def qshift(x):
    """Quad-directional shift: quarter q of the channels moves one pixel
    (left, right, up, down for q = 0..3), zero-filled at the vacated border.
    """
    x = as_tensor(x)
    if x.data.ndim != 4:
        raise ValueError(f"qshift expects rank-4 input, got shape {x.shape}")
    n, c, h, w = x.shape
    if c % 4 != 0:
        raise ValueError(f"qshift needs channels divisible by 4, got {c}")
    q = c // 4
    out = np.zeros_like(x.data)
    out[:, 0 * q : 1 * q, :, : w - 1] = x.data[:, 0 * q : 1 * q, :, 1:]
    out[:, 1 * q : 2 * q, :, 1:] = x.data[:, 1 * q : 2 * q, :, : w - 1]
    out[:, 2 * q : 3 * q, : h - 1, :] = x.data[:, 2 * q : 3 * q, 1:, :]
    out[:, 3 * q : 4 * q, 1:, :] = x.data[:, 3 * q : 4 * q, : h - 1, :]

    def bwd(g):
        gx = np.zeros_like(g)
        gx[:, 0 * q : 1 * q, :, 1:] = g[:, 0 * q : 1 * q, :, : w - 1]
        gx[:, 1 * q : 2 * q, :, : w - 1] = g[:, 1 * q : 2 * q, :, 1:]
        gx[:, 2 * q : 3 * q, 1:, :] = g[:, 2 * q : 3 * q, : h - 1, :]
        gx[:, 3 * q : 4 * q, : h - 1, :] = g[:, 3 * q : 4 * q, 1:, :]
        return (gx,)

    return record_op(out, (x,), bwd)


def omni_shift(x, k5):
    """Learnable 5x5 depthwise same-padding convolution."""
    k5t = as_tensor(k5)
    if k5t.data.ndim != 4 or k5t.shape[1:] != (1, 5, 5):
        raise ValueError(f"omni_shift kernel must be (C, 1, 5, 5), got {k5t.shape}")
    return depthwise_conv2d(x, k5, 1)


@dataclass
class OmniQuadParams:
    """Learnable pieces of the multi-scale shift.

    Six scalar branch weights modulate identity, the four depthwise
    convolutions (1x1 / 3x3 / 5x5 / 7x7, each optionally dilated) and the
    quad shift. Kernel channel counts must match the feature width.
    """

    w_x: Param
    w_1: Param
    w_2: Param
    w_3: Param
    w_4: Param
    w_q: Param
    k1: Param
    k3: Param
    k5: Param
    k7: Param
    dilations: tuple = (1, 1, 1, 1)

    def params(self):
        return [self.w_x, self.w_1, self.w_2, self.w_3, self.w_4, self.w_q,
                self.k1, self.k3, self.k5, self.k7]


def init_omni_quad(prefix, channels, rng, dilations=(1, 1, 1, 1)):
    """Identity-at-init parameters: w_x = 1, other weights 0, near-delta kernels."""
    def near_delta(k):
        kern = rng.normal(0.0, 0.02, size=(channels, 1, k, k))
        kern[:, 0, k // 2, k // 2] += 1.0
        return kern.astype(DTYPE)

    return OmniQuadParams(
        w_x=Param(f"{prefix}.w_x", [1.0]),
        w_1=Param(f"{prefix}.w_1", [0.0]),
        w_2=Param(f"{prefix}.w_2", [0.0]),
        w_3=Param(f"{prefix}.w_3", [0.0]),
        w_4=Param(f"{prefix}.w_4", [0.0]),
        w_q=Param(f"{prefix}.w_q", [0.0]),
        k1=Param(f"{prefix}.k1", near_delta(1)),
        k3=Param(f"{prefix}.k3", near_delta(3)),
        k5=Param(f"{prefix}.k5", near_delta(5)),
        k7=Param(f"{prefix}.k7", near_delta(7)),
        dilations=tuple(dilations),
    )


def _pad_kernel_to(k, size):
    """Zero-pad a depthwise kernel (C, 1, s, s) to (C, 1, size, size)."""
    k = as_tensor(k)
    s = k.shape[2]
    m = (size - s) // 2

    def bwd(g):
        return (np.ascontiguousarray(g[:, :, m : m + s, m : m + s]),)

    out = np.zeros((k.shape[0], 1, size, size), dtype=DTYPE)
    out[:, :, m : m + s, m : m + s] = k.data
    return record_op(out, (k,), bwd)


def omni_quad_shift(x, p):
    """Weighted sum of identity, multi-scale depthwise branches and qshift:

        Y = w_x X + w_1 C1(X) + w_2 C3(X) + w_3 C5(X) + w_4 C7(X) + w_q QShift(X)

    When the 3/5/7 branches share one dilation factor they are folded into a
    single equivalent 7x7 depthwise convolution (weights folded into the
    kernel); otherwise each branch runs separately.
    """
    x = as_tensor(x)
    d1, d3, d5, d7 = p.dilations
    y = mul(x, p.w_x)
    y = add(y, mul(depthwise_conv2d(x, p.k1, d1), p.w_1))
    if d3 == d5 == d7:
        eff = add(
            mul(_pad_kernel_to(p.k3, 7), _scalar4(p.w_2)),
            add(
                mul(_pad_kernel_to(p.k5, 7), _scalar4(p.w_3)),
                mul(as_tensor(p.k7), _scalar4(p.w_4)),
            ),
        )
        y = add(y, depthwise_conv2d(x, eff, d7))
    else:
        y = add(y, mul(depthwise_conv2d(x, p.k3, d3), p.w_2))
        y = add(y, mul(depthwise_conv2d(x, p.k5, d5), p.w_3))
        y = add(y, mul(depthwise_conv2d(x, p.k7, d7), p.w_4))
    y = add(y, mul(qshift(x), p.w_q))
    return y


def _scalar4(w):
    """View a (1,) weight as rank-4 so it broadcasts over kernel tensors."""
    w = as_tensor(w)
    return record_op(
        w.data.reshape(1, 1, 1, 1),
        (w,),
        lambda g: (g.reshape(1),),
    )
