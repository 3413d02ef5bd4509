"""Registered finite-difference fixtures for the gradcheck command.

Every fixture freezes a small instance (fixed seeds) and reports the max
relative error of tape gradients against central differences. Fixture
design works around the float32 noise floor of finite differences:

  * linear/permutation ops use inputs on a coarse dyadic grid with a
    power-of-two step, making the whole computation exact in float32 and
    the expected error essentially zero (threshold 1e-4);
  * nonlinear composites use cancellation-free losses (plain sums over
    positive-weight paths, or sign projections chosen so every coordinate
    keeps an O(1) derivative), threshold 1e-3.
"""

import numpy as np

from . import blocks, model, shifts, training, wkv6
from .tensor import (
    Tensor,
    absval,
    add,
    conv2d_3x3,
    depthwise_conv2d,
    elementwise,
    fd_grad_check,
    fd_grad_check_param,
    gelu,
    layer_norm_cw,
    linear_cw,
    mean_all,
    mul,
    pixel_shuffle,
    relu_sq,
    sigmoid,
    sub,
    sum_all,
    transpose_hw,
)

LINEAR_TOL = 1e-4
TOL = 1e-3
_H_EXACT = 2.0**-7  # power-of-two step keeps dyadic-grid fixtures exact


def _grid(shape, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    return Tensor(np.round(rng.uniform(-2, 2, shape) * 64) / 64 * scale)


def _signs(shape, seed):
    return Tensor(np.random.default_rng(seed).choice([-1.0, 1.0], size=shape))


def _randn(shape, seed, scale=1.0):
    return Tensor(np.random.default_rng(seed).standard_normal(shape) * scale)


def _pos(shape, seed, lo=0.2, hi=0.6):
    return Tensor(np.random.default_rng(seed).uniform(lo, hi, shape))


def _proj_sum(y, seed, shape):
    return sum_all(mul(y, _signs(shape, seed)))


# ---------------------------------------------------------------------------
# tensor ops


def _fx_elementwise(op):
    def run():
        a = _grid((2, 4, 3, 3), 1)
        b = _grid((1, 4, 1, 1), 2)
        r = _signs((2, 4, 3, 3), 3)
        err_a = fd_grad_check(lambda v: sum_all(mul(elementwise(op, v, b), r)), a, _H_EXACT)
        err_b = fd_grad_check(lambda v: sum_all(mul(elementwise(op, a, v), r)), b, _H_EXACT)
        return max(err_a, err_b)

    return run


def _fx_sigmoid():
    x = _randn((1, 4, 4, 4), 4)
    return fd_grad_check(lambda v: sum_all(sigmoid(v)), x, 1e-2)


def _fx_gelu():
    x = _randn((1, 4, 4, 4), 5)
    return fd_grad_check(lambda v: sum_all(gelu(v)), x, 4e-3)


def _fx_relu_sq():
    x = _randn((1, 4, 4, 4), 6)
    return fd_grad_check(lambda v: sum_all(relu_sq(v)), x, 1e-2)


def _fx_abs():
    x = _randn((1, 4, 4, 4), 7)
    target = Tensor(x.data + 0.5)  # keep every coordinate away from the kink
    return fd_grad_check(lambda v: mean_all(absval(sub(v, target))), x, 1e-3)


def _fx_linear_cw():
    x = _grid((2, 4, 3, 3), 8)
    w = _grid((3, 4), 9, 0.25)
    r = _signs((2, 3, 3, 3), 10)
    err_x = fd_grad_check(lambda v: sum_all(mul(linear_cw(v, w), r)), x, _H_EXACT)
    err_w = fd_grad_check(lambda v: sum_all(mul(linear_cw(x, v), r)), w, _H_EXACT)
    return max(err_x, err_w)


def _fx_conv3x3():
    x = _grid((1, 4, 4, 4), 11)
    k = _grid((3, 4, 3, 3), 12, 0.25)
    b = _grid((3,), 13, 0.25)
    r = _signs((1, 3, 4, 4), 14)
    errs = [
        fd_grad_check(lambda v: sum_all(mul(conv2d_3x3(v, k, b), r)), x, _H_EXACT),
        fd_grad_check(lambda v: sum_all(mul(conv2d_3x3(x, v, b), r)), k, _H_EXACT),
        fd_grad_check(lambda v: sum_all(mul(conv2d_3x3(x, k, v), r)), b, _H_EXACT),
    ]
    return max(errs)


def _fx_depthwise():
    x = _grid((1, 4, 5, 5), 15)
    k = _grid((4, 1, 5, 5), 16, 0.25)
    r = _signs((1, 4, 5, 5), 17)
    err_x = fd_grad_check(lambda v: sum_all(mul(depthwise_conv2d(v, k, 2), r)), x, _H_EXACT)
    err_k = fd_grad_check(lambda v: sum_all(mul(depthwise_conv2d(x, v, 2), r)), k, _H_EXACT)
    return max(err_x, err_k)


def _fx_transpose():
    x = _grid((2, 3, 4, 5), 18)
    r = _signs((2, 3, 5, 4), 19)
    return fd_grad_check(lambda v: sum_all(mul(transpose_hw(v), r)), x, _H_EXACT)


def _fx_pixel_shuffle():
    x = _grid((2, 8, 3, 3), 20)
    r = _signs((2, 2, 6, 6), 21)
    return fd_grad_check(lambda v: sum_all(mul(pixel_shuffle(v, 2), r)), x, _H_EXACT)


def _fx_layer_norm():
    x = _randn((1, 6, 3, 3), 22)
    gamma = _pos((6,), 23, 0.8, 1.2)
    beta = _randn((6,), 24, 0.1)
    proj = _pos((1, 6, 3, 3), 25, 0.5, 1.5)  # positive weights, mean-free loss kept off
    errs = [
        fd_grad_check(lambda v: sum_all(mul(layer_norm_cw(v, gamma, beta), proj)), x, 1e-2),
        fd_grad_check(lambda v: sum_all(mul(layer_norm_cw(x, v, beta), proj)), gamma, 5e-3),
        fd_grad_check(lambda v: sum_all(mul(layer_norm_cw(x, gamma, v), proj)), beta, 5e-3),
    ]
    return max(errs)


# ---------------------------------------------------------------------------
# wkv


def _wkv_args(seed, t=3, heads=2, d=2):
    c = heads * d
    rng = np.random.default_rng(seed)
    return dict(
        r=Tensor(0.3 + 0.4 * rng.random((1, t, c))),
        k=Tensor(0.3 + 0.4 * rng.random((1, t, c))),
        v=Tensor(0.3 + 0.4 * rng.random((1, t, c))),
        w=Tensor(-1.0 + 0.5 * rng.random((1, t, c))),
        u=Tensor(0.3 + 0.4 * rng.random(c)),
        heads=heads,
    )


def _fx_wkv(which):
    def run():
        args = _wkv_args(26)

        def f(v):
            probe = dict(args)
            probe[which] = v
            return sum_all(wkv6.wkv6_recurrent(wkv6.WkvInputs(**probe)))

        return fd_grad_check(f, args[which], 5e-3)

    return run


def _fx_decay():
    x = _randn((1, 3, 4), 27)
    return fd_grad_check(lambda v: sum_all(wkv6.decay_from_ww(v)), x, 5e-3)


# ---------------------------------------------------------------------------
# shifts


def _fx_qshift():
    x = _grid((1, 8, 4, 4), 28)
    r = _signs((1, 8, 4, 4), 29)
    return fd_grad_check(lambda v: sum_all(mul(shifts.qshift(v), r)), x, _H_EXACT)


def _fx_omni_shift():
    x = _grid((1, 4, 5, 5), 30)
    k5 = _grid((4, 1, 5, 5), 31, 0.25)
    r = _signs((1, 4, 5, 5), 32)
    err_x = fd_grad_check(lambda v: sum_all(mul(shifts.omni_shift(v, k5), r)), x, _H_EXACT)
    err_k = fd_grad_check(lambda v: sum_all(mul(shifts.omni_shift(x, v), r)), k5, _H_EXACT)
    return max(err_x, err_k)


def _omni_params(seed):
    rng = np.random.default_rng(seed)
    p = shifts.init_omni_quad("fx", 4, rng)
    for wp in (p.w_x, p.w_1, p.w_2, p.w_3, p.w_4, p.w_q):
        wp.value.data[...] = rng.uniform(0.2, 0.5, 1)
    return p


def _fx_omni_quad():
    from dataclasses import replace

    p = _omni_params(33)
    x = _pos((1, 4, 5, 5), 34)  # positive input keeps kernel-tap derivatives off zero
    errs = [fd_grad_check(lambda v: sum_all(shifts.omni_quad_shift(v, p)), x, 1e-2)]
    for field in ("w_x", "w_1", "w_2", "w_3", "w_4", "w_q", "k1", "k3", "k5", "k7"):
        base = getattr(p, field)

        def f(v, field=field):
            return sum_all(shifts.omni_quad_shift(x, replace(p, **{field: v})))

        errs.append(fd_grad_check(f, base.value, 5e-3))
    return max(errs)


# ---------------------------------------------------------------------------
# blocks


def _fx_vrcm():
    from dataclasses import replace

    p = blocks.init_vrcm("fx", 4, np.random.default_rng(35), init_mode="random")
    x = _randn((1, 4, 4, 4), 36)
    anchor = Tensor(np.full((1, 4, 4, 4), 2.0, dtype=np.float32))
    errs = [
        fd_grad_check(
            lambda v: sum_all(add(blocks.vrcm(v, p), mul(v, anchor))), x, 1e-2
        )
    ]
    for field in ("dw", "w_r", "w_k", "w_up", "w_down"):
        base = getattr(p, field)

        def f(v, field=field):
            # anchor on the probe keeps small-derivative taps off the
            # fd noise floor; backward errors still surface one-for-one
            return add(sum_all(blocks.vrcm(x, replace(p, **{field: v}))), sum_all(v))

        errs.append(fd_grad_check(f, base.value, 5e-3))
    return max(errs)


def _fx_mlp():
    from dataclasses import replace

    p = blocks.init_mlp("fx", 4, np.random.default_rng(37), init_mode="random")
    x = _randn((1, 4, 4, 4), 38)
    anchor = Tensor(np.full((1, 4, 4, 4), 2.0, dtype=np.float32))
    errs = [
        fd_grad_check(
            lambda v: sum_all(add(blocks.mlp_ffn(v, p), mul(v, anchor))), x, 1e-2
        )
    ]
    for field in ("w1", "w2"):
        base = getattr(p, field)

        def f(v, field=field):
            return sum_all(blocks.mlp_ffn(x, replace(p, **{field: v})))

        errs.append(fd_grad_check(f, base.value, 5e-3))
    return max(errs)


def _soften_vrsm(vp):
    """Scale the r/k/v projections to the magnitudes normalization gives
    them in the real network; the raw random-init regime has curvature too
    high for float32 central differences (values feed a product chain)."""
    for w in (vp.w_r, vp.w_k, vp.w_v):
        w.value.data *= 0.4
    return vp


def _fx_wkv2d_scan():
    vp = blocks.init_vrsm("fx", 8, 2, np.random.default_rng(39), init_mode="random")
    _soften_vrsm(vp)
    x = _randn((1, 8, 4, 4), 40)
    anchor = Tensor(np.full((1, 8, 4, 4), 2.0, dtype=np.float32))
    # the anchor keeps every input coordinate's derivative O(1), away from
    # the fd noise floor; backward errors still surface one-for-one
    return fd_grad_check(
        lambda v: sum_all(add(blocks.wkv2d_scan(v, vp), mul(v, anchor))), x, 5e-3
    )


def _fx_vrb():
    blk = blocks.init_vrb("fx", 8, 2, np.random.default_rng(41), init_mode="random")
    _soften_vrsm(blk.vrsm)
    x = _randn((1, 8, 6, 6), 42)
    anchor = Tensor(np.full((1, 8, 6, 6), 2.0, dtype=np.float32))
    return fd_grad_check(
        lambda v: sum_all(add(blocks.vrb(v, blk), mul(v, anchor))), x, 5e-3
    )


# ---------------------------------------------------------------------------
# model (gradients w.r.t. parameters through the full depth + L1 loss)


def _fx_model():
    cfg = model.ModelConfig(
        channels=8, n_vrg=1, vrbs_per_vrg=1, scale=2, heads=2, init="random", seed=43
    )
    state = model.build_model(cfg)
    x = Tensor(np.random.default_rng(44).random((1, 3, 6, 6)))
    pred0 = model.forward(state, x)
    target = Tensor(pred0.data + 0.4)  # off every L1 kink
    by_name = {p.name: p for p in state.params()}
    checked = [
        "head.k",
        "tail.up.k",
        "vrg0.vrb0.vrsm.u",
        "vrg0.vrb0.vrsm.g2",
        "vrg0.vrb0.vrsm.h.tma_k",
        "vrg0.vrb0.vrcm.w_down",
        "vrg0.vrb0.conv.k",
    ]
    errs = []
    for name in checked:
        p = by_name[name]

        def make_loss(p=p):
            loss = training.l1_loss(model.forward(state, x), target)
            # anchor on the parameter itself: keeps every coordinate's
            # derivative off the float32 fd noise floor
            return add(loss, mul(sum_all(p.value), Tensor([0.5])))

        errs.append(fd_grad_check_param(make_loss, p, 5e-3))
    return max(errs)


FIXTURES = {
    "tensor": [
        ("elementwise.add", _fx_elementwise("add"), LINEAR_TOL),
        ("elementwise.sub", _fx_elementwise("sub"), LINEAR_TOL),
        ("elementwise.mul", _fx_elementwise("mul"), TOL),
        ("sigmoid", _fx_sigmoid, TOL),
        ("gelu", _fx_gelu, TOL),
        ("relu_sq", _fx_relu_sq, TOL),
        ("abs_l1", _fx_abs, TOL),
        ("linear_cw", _fx_linear_cw, LINEAR_TOL),
        ("conv2d_3x3", _fx_conv3x3, LINEAR_TOL),
        ("depthwise_conv2d", _fx_depthwise, LINEAR_TOL),
        ("transpose_hw", _fx_transpose, LINEAR_TOL),
        ("pixel_shuffle", _fx_pixel_shuffle, LINEAR_TOL),
        ("layer_norm_cw", _fx_layer_norm, TOL),
    ],
    "wkv6": [
        ("wkv6.r", _fx_wkv("r"), TOL),
        ("wkv6.k", _fx_wkv("k"), TOL),
        ("wkv6.v", _fx_wkv("v"), TOL),
        ("wkv6.w", _fx_wkv("w"), TOL),
        ("wkv6.u", _fx_wkv("u"), TOL),
        ("decay_from_ww", _fx_decay, TOL),
    ],
    "shifts": [
        ("qshift", _fx_qshift, LINEAR_TOL),
        ("omni_shift", _fx_omni_shift, LINEAR_TOL),
        ("omni_quad_shift", _fx_omni_quad, TOL),
    ],
    "blocks": [
        ("vrcm", _fx_vrcm, TOL),
        ("mlp_ffn", _fx_mlp, TOL),
        ("wkv2d_scan", _fx_wkv2d_scan, TOL),
        ("vrb", _fx_vrb, TOL),
    ],
    "model": [
        ("tiny_model_l1", _fx_model, TOL),
    ],
}

MODULES = tuple(FIXTURES)


def run_gradchecks(module="all"):
    """Run fixtures for one module (or all); returns (name, err, tol) rows."""
    if module == "all":
        groups = [name for name in MODULES]
    elif module in FIXTURES:
        groups = [module]
    else:
        raise KeyError(f"unknown gradcheck module {module!r}; pick one of {('all',) + MODULES}")
    rows = []
    for group in groups:
        for name, fn, tol in FIXTURES[group]:
            rows.append((name, float(fn()), tol))
    return rows
