"""Tape mechanics and the finite-difference oracle."""

import numpy as np
import pytest

from rwkvsr.tensor import (
    Param,
    Tape,
    Tensor,
    absval,
    add,
    fd_grad_check,
    fd_grad_check_param,
    linear_cw,
    mean_all,
    mul,
    sigmoid,
    sub,
    sum_all,
)


def test_backward_sum_gives_ones(rng):
    p = Param("p", rng.standard_normal((2, 3)))
    with Tape() as t:
        t.backward(sum_all(p.value))
    assert np.array_equal(p.grad, np.ones((2, 3), np.float32))


def test_backward_quadratic():
    p = Param("p", [3.0])
    with Tape() as t:
        t.backward(sum_all(mul(p.value, p.value)))
    assert np.allclose(p.grad, [6.0])


def test_backward_requires_scalar(rng):
    p = Param("p", rng.standard_normal(4))
    with Tape() as t:
        y = mul(p.value, p.value)
        with pytest.raises(ValueError, match="scalar"):
            t.backward(y)


def test_accumulation_exact_double(rng):
    p = Param("w", rng.standard_normal((3, 4)) * 0.5)
    x = Tensor(rng.standard_normal((1, 4, 3, 3)))
    with Tape() as t:
        loss = sum_all(sigmoid(linear_cw(x, p)))
        t.backward(loss)
    once = p.grad.copy()
    t.backward(loss)
    assert np.array_equal(p.grad, 2.0 * once)


def test_zero_grad_resets(rng):
    p = Param("p", rng.standard_normal(4))
    with Tape() as t:
        t.backward(sum_all(p.value))
    p.zero_grad()
    assert np.all(p.grad == 0)


def test_tapes_do_not_nest():
    with Tape():
        with pytest.raises(RuntimeError, match="nest"):
            with Tape():
                pass


def test_grad_of_input_tensor(rng):
    x = Tensor(rng.standard_normal((2, 2)))
    with Tape() as t:
        t.backward(sum_all(mul(x, x)))
    assert np.allclose(t.grad_of(x), 2 * x.data, atol=1e-6)


def test_fan_out_accumulates(rng):
    # x used by two branches: gradients add
    x = Tensor(rng.standard_normal(5))
    with Tape() as t:
        t.backward(add(sum_all(x), sum_all(x)))
    assert np.allclose(t.grad_of(x), 2.0)


def test_fd_linear_function_tiny_error():
    # small values keep |f| low so the f32 rounding floor stays below 1e-6
    x = Tensor(np.random.default_rng(1).uniform(-0.01, 0.01, 8))
    assert fd_grad_check(lambda v: sum_all(v), x, 1e-2) <= 1e-6


def test_fd_quadratic():
    x = Tensor(np.random.default_rng(2).standard_normal(6) * 0.5)
    err = fd_grad_check(lambda v: mean_all(mul(v, v)), x, 5e-3)
    assert err <= 1e-4


def test_fd_micro_net(rng):
    w = Param("w", 0.2 + 0.3 * rng.random((3, 4)))
    x = Tensor(rng.standard_normal((1, 4, 4, 4)))
    err = fd_grad_check(lambda v: sum_all(sigmoid(linear_cw(v, w))), x, 1e-2)
    assert err <= 1e-3


def test_fd_rejects_bad_h(rng):
    x = Tensor(rng.standard_normal(4))
    with pytest.raises(ValueError, match="h must be"):
        fd_grad_check(lambda v: sum_all(v), x, 1.0)


def test_fd_param_variant(rng):
    w = Param("w", 0.2 + 0.3 * rng.random((3, 4)))
    x = Tensor(rng.standard_normal((1, 4, 3, 3)))

    def make_loss():
        return sum_all(sigmoid(linear_cw(x, w)))

    assert fd_grad_check_param(make_loss, w, 5e-3) <= 1e-3


def test_l1_subgradient_zero_at_ties(rng):
    x = Tensor(rng.standard_normal(6))
    with Tape() as t:
        t.backward(sum_all(absval(sub(x, Tensor(x.data.copy())))))
    assert np.all(t.grad_of(x) == 0.0)
