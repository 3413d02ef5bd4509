"""Shift mechanisms: definitions, oracles, linearity, identity degeneracies."""

import numpy as np
import pytest

from rwkvsr.shifts import init_omni_quad, omni_quad_shift, omni_shift, qshift
from rwkvsr.tensor import Tensor, depthwise_conv2d

from test_tensor_ops import naive_depthwise


def test_qshift_single_pixel_moves():
    x = np.zeros((1, 8, 5, 5), np.float32)
    for quarter in range(4):
        x[0, quarter * 2, 2, 2] = 1.0
    y = qshift(Tensor(x)).data
    assert y[0, 0, 2, 1] == 1.0  # quarter 0: left
    assert y[0, 2, 2, 3] == 1.0  # quarter 1: right
    assert y[0, 4, 1, 2] == 1.0  # quarter 2: up
    assert y[0, 6, 3, 2] == 1.0  # quarter 3: down


def test_qshift_border_content_vanishes():
    x = np.zeros((1, 4, 3, 3), np.float32)
    x[0, 0, 1, 0] = 7.0  # leftmost column of the left-shift quarter
    y = qshift(Tensor(x)).data
    assert np.all(y == 0.0)


def test_qshift_constant_borders():
    y = qshift(Tensor(np.ones((1, 4, 4, 4)))).data
    assert np.all(y[0, 0, :, :3] == 1.0) and np.all(y[0, 0, :, 3] == 0.0)
    assert np.all(y[0, 1, :, 1:] == 1.0) and np.all(y[0, 1, :, 0] == 0.0)
    assert np.all(y[0, 2, :3, :] == 1.0) and np.all(y[0, 2, 3, :] == 0.0)
    assert np.all(y[0, 3, 1:, :] == 1.0) and np.all(y[0, 3, 0, :] == 0.0)


def test_qshift_index_oracle(rng):
    x = rng.standard_normal((2, 8, 5, 5)).astype(np.float32)
    y = qshift(Tensor(x)).data
    h, w = 5, 5
    offsets = {0: (0, 1), 1: (0, -1), 2: (1, 0), 3: (-1, 0)}  # source offsets
    for n in range(2):
        for c in range(8):
            dy, dx = offsets[c // 2]
            for i in range(h):
                for j in range(w):
                    si, sj = i + dy, j + dx
                    expect = x[n, c, si, sj] if 0 <= si < h and 0 <= sj < w else 0.0
                    assert y[n, c, i, j] == expect


def test_qshift_needs_divisible_channels():
    with pytest.raises(ValueError, match="divisible by 4"):
        qshift(Tensor(np.zeros((1, 6, 4, 4))))


def test_omni_shift_delta_identity(rng):
    x = Tensor(rng.standard_normal((1, 3, 6, 6)))
    k = np.zeros((3, 1, 5, 5), np.float32)
    k[:, 0, 2, 2] = 1.0
    assert np.array_equal(omni_shift(x, Tensor(k)).data, x.data)


def test_omni_shift_as_pixel_shift(rng):
    x = Tensor(rng.standard_normal((1, 2, 6, 6)))
    k = np.zeros((2, 1, 5, 5), np.float32)
    k[:, 0, 2, 3] = 1.0  # one tap right of center reads the right neighbor
    y = omni_shift(x, Tensor(k)).data
    assert np.array_equal(y[:, :, :, :-1], x.data[:, :, :, 1:])
    assert np.all(y[:, :, :, -1] == 0.0)


def test_omni_shift_naive_oracle(rng):
    x = rng.standard_normal((1, 3, 7, 7)).astype(np.float32)
    k = rng.standard_normal((3, 1, 5, 5)).astype(np.float32)
    assert np.array_equal(omni_shift(Tensor(x), Tensor(k)).data, naive_depthwise(x, k, 1))


def test_omni_shift_kernel_shape_checked():
    with pytest.raises(ValueError, match="5, 5"):
        omni_shift(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((2, 1, 3, 3))))


# ---------------------------------------------------------------------------
# omni-quad


def random_omni_params(c, seed):
    rng = np.random.default_rng(seed)
    p = init_omni_quad("t", c, rng)
    for w in (p.w_x, p.w_1, p.w_2, p.w_3, p.w_4, p.w_q):
        w.value.data[...] = rng.standard_normal(1) * 0.4
    return p


def test_omni_quad_identity_degenerate(rng):
    x = Tensor(rng.standard_normal((2, 4, 6, 6)))
    p = init_omni_quad("t", 4, np.random.default_rng(0))  # w_x=1, others 0
    assert np.abs(omni_quad_shift(x, p).data - x.data).max() <= 1e-6


def test_omni_quad_qshift_only(rng):
    x = Tensor(rng.standard_normal((1, 4, 5, 5)))
    p = init_omni_quad("t", 4, np.random.default_rng(1))
    p.w_x.value.data[...] = 0.0
    p.w_q.value.data[...] = 1.0
    assert np.abs(omni_quad_shift(x, p).data - qshift(x).data).max() <= 1e-6


def test_omni_quad_branch_sum_oracle(rng):
    x = Tensor(rng.standard_normal((1, 4, 6, 6)))
    p = random_omni_params(4, 2)
    got = omni_quad_shift(x, p).data
    expect = (
        p.w_x.value.data * x.data
        + p.w_1.value.data * depthwise_conv2d(x, p.k1, 1).data
        + p.w_2.value.data * depthwise_conv2d(x, p.k3, 1).data
        + p.w_3.value.data * depthwise_conv2d(x, p.k5, 1).data
        + p.w_4.value.data * depthwise_conv2d(x, p.k7, 1).data
        + p.w_q.value.data * qshift(x).data
    )
    assert np.abs(got - expect).max() <= 1e-6


def test_omni_quad_custom_dilations_branch_sum(rng):
    x = Tensor(rng.standard_normal((1, 4, 9, 9)))
    p = random_omni_params(4, 3)
    p.dilations = (1, 1, 2, 3)
    got = omni_quad_shift(x, p).data
    expect = (
        p.w_x.value.data * x.data
        + p.w_1.value.data * depthwise_conv2d(x, p.k1, 1).data
        + p.w_2.value.data * depthwise_conv2d(x, p.k3, 1).data
        + p.w_3.value.data * depthwise_conv2d(x, p.k5, 2).data
        + p.w_4.value.data * depthwise_conv2d(x, p.k7, 3).data
        + p.w_q.value.data * qshift(x).data
    )
    assert np.abs(got - expect).max() <= 1e-6


@pytest.mark.parametrize("mechanism", ["qshift", "omnishift", "omniquad"])
def test_shift_mechanisms_preserve_shape(rng, mechanism):
    x = Tensor(rng.standard_normal((2, 8, 5, 7)))
    if mechanism == "qshift":
        y = qshift(x)
    elif mechanism == "omnishift":
        y = omni_shift(x, Tensor(rng.standard_normal((8, 1, 5, 5))))
    else:
        y = omni_quad_shift(x, random_omni_params(8, 4))
    assert y.shape == x.shape


@pytest.mark.parametrize("mechanism", ["qshift", "omnishift", "omniquad"])
@pytest.mark.parametrize("seed", range(3))
def test_shift_mechanisms_are_linear(mechanism, seed):
    rng = np.random.default_rng(100 + seed)
    x = Tensor(rng.standard_normal((1, 4, 5, 5)))
    y = Tensor(rng.standard_normal((1, 4, 5, 5)))
    a, b = float(rng.uniform(-2, 2)), float(rng.uniform(-2, 2))
    k5 = Tensor(rng.standard_normal((4, 1, 5, 5)))
    p = random_omni_params(4, 200 + seed)

    def f(t):
        if mechanism == "qshift":
            return qshift(t).data
        if mechanism == "omnishift":
            return omni_shift(t, k5).data
        return omni_quad_shift(t, p).data

    lhs = f(Tensor(a * x.data + b * y.data))
    rhs = a * f(x) + b * f(y)
    assert np.abs(lhs - rhs).max() <= 1e-4


def test_omni_quad_zero_kernels_identity(rng):
    # zeroed conv kernels with w_x=1, w_q=0 reduce to the identity exactly
    x = Tensor(rng.standard_normal((1, 4, 5, 5)))
    p = init_omni_quad("t", 4, np.random.default_rng(5))
    for k in (p.k1, p.k3, p.k5, p.k7):
        k.value.data[...] = 0.0
    p.w_1.value.data[...] = 0.7  # nonzero weights on zero kernels change nothing
    assert np.array_equal(omni_quad_shift(x, p).data, x.data)
