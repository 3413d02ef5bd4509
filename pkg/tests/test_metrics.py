"""Metrics: luma conversion and the two quality scores."""

import numpy as np
import pytest

from rwkvsr.metrics import EvalReport, psnr_y, rgb_to_y, ssim_y
from rwkvsr.tensor import Tensor


def const_rgb(r, g, b, size=(1, 3, 16, 16)):
    arr = np.empty(size, np.float32)
    arr[:, 0], arr[:, 1], arr[:, 2] = r, g, b
    return Tensor(arr)


# ---------------------------------------------------------------------------
# luma


def test_rgb_to_y_black():
    y = rgb_to_y(const_rgb(0, 0, 0)).data
    assert np.abs(y - 16.0).max() <= 1e-3


def test_rgb_to_y_white():
    y = rgb_to_y(const_rgb(1, 1, 1)).data
    assert np.abs(y - 235.0).max() <= 1e-3


def test_rgb_to_y_green():
    # coefficient arithmetic: 128.553 + 16
    y = rgb_to_y(const_rgb(0, 1, 0)).data
    assert np.abs(y - 144.553).max() <= 1e-3


def test_rgb_to_y_range(rng):
    y = rgb_to_y(Tensor(rng.random((2, 3, 8, 8)))).data
    assert y.min() >= 16.0 - 1e-3 and y.max() <= 235.0 + 1e-3


def test_rgb_to_y_rejects_non_rgb():
    with pytest.raises(ValueError, match="3"):
        rgb_to_y(Tensor(np.zeros((1, 1, 4, 4))))


# ---------------------------------------------------------------------------
# psnr


def test_psnr_identical_capped(rng):
    x = Tensor(rng.random((1, 3, 12, 12)))
    assert psnr_y(x, x) == 100.0


def test_psnr_uniform_unit_y_error():
    # equal RGB offset of 1/219 moves Y by exactly 1.0 on the 255 scale
    a = const_rgb(0.3, 0.3, 0.3)
    delta = 1.0 / 219.0
    b = const_rgb(0.3 + delta, 0.3 + delta, 0.3 + delta)
    assert abs(psnr_y(a, b) - 48.1308) <= 1e-3


def test_psnr_scalar_transcription(rng):
    a = Tensor(rng.random((1, 3, 10, 10)))
    b = Tensor(rng.random((1, 3, 10, 10)))
    got = psnr_y(a, b, crop=2)
    ya = rgb_to_y(a).data.astype(np.float64)[0, 0, 2:-2, 2:-2]
    yb = rgb_to_y(b).data.astype(np.float64)[0, 0, 2:-2, 2:-2]
    expect = 10 * np.log10(255.0**2 / np.mean((ya - yb) ** 2))
    assert abs(got - expect) <= 1e-6


def test_psnr_symmetry(rng):
    a = Tensor(rng.random((1, 3, 9, 9)))
    b = Tensor(rng.random((1, 3, 9, 9)))
    assert psnr_y(a, b) == psnr_y(b, a)


def test_psnr_monotone_in_noise(rng):
    base = Tensor(rng.random((1, 3, 24, 24)))
    noise = rng.standard_normal(base.shape)
    values = []
    for amp in (0.01, 0.02, 0.04):
        noisy = Tensor(np.clip(base.data + amp * noise, 0, 1))
        values.append(psnr_y(base, noisy))
    assert values[0] > values[1] > values[2]


def test_psnr_rejects_shape_mismatch(rng):
    with pytest.raises(ValueError, match="shape"):
        psnr_y(Tensor(np.zeros((1, 3, 8, 8))), Tensor(np.zeros((1, 3, 9, 8))))


def test_psnr_rejects_big_crop():
    with pytest.raises(ValueError, match="crop"):
        psnr_y(Tensor(np.zeros((1, 3, 8, 8))), Tensor(np.zeros((1, 3, 8, 8))), crop=4)


# ---------------------------------------------------------------------------
# ssim


def naive_ssim(a, b):
    """Direct sliding-window oracle (no separability tricks)."""
    from rwkvsr.metrics import _gaussian_window

    g1 = _gaussian_window()
    win = np.outer(g1, g1)
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    h, w = a.shape
    vals = []
    for i in range(h - 10):
        for j in range(w - 10):
            pa = a[i : i + 11, j : j + 11]
            pb = b[i : i + 11, j : j + 11]
            mx = (win * pa).sum()
            my = (win * pb).sum()
            vx = (win * pa * pa).sum() - mx * mx
            vy = (win * pb * pb).sum() - my * my
            cxy = (win * pa * pb).sum() - mx * my
            vals.append(
                ((2 * mx * my + c1) * (2 * cxy + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2))
            )
    return float(np.mean(vals))


def test_ssim_identical_is_one(rng):
    x = Tensor(rng.random((1, 3, 16, 16)))
    assert ssim_y(x, x) == 1.0


def test_ssim_matches_direct_oracle(rng):
    a = Tensor(rng.random((1, 3, 18, 18)))
    b = Tensor(np.clip(a.data + 0.1 * rng.standard_normal(a.shape), 0, 1))
    got = ssim_y(a, b)
    ya = rgb_to_y(a).data.astype(np.float64)[0, 0]
    yb = rgb_to_y(b).data.astype(np.float64)[0, 0]
    assert abs(got - naive_ssim(ya, yb)) <= 1e-5


def test_ssim_inverted_image_low(rng):
    base = (rng.random((1, 3, 24, 24)) > 0.5).astype(np.float32)  # high variance
    a = Tensor(base)
    b = Tensor(1.0 - base)
    assert ssim_y(a, b) < 0.1


def test_ssim_bounded(rng):
    for seed in range(3):
        r = np.random.default_rng(seed)
        a = Tensor(r.random((1, 3, 14, 14)))
        b = Tensor(r.random((1, 3, 14, 14)))
        v = ssim_y(a, b)
        assert -1.0 <= v <= 1.0
        assert v < 1.0  # different images never reach 1


def test_ssim_symmetry(rng):
    a = Tensor(rng.random((1, 3, 14, 14)))
    b = Tensor(rng.random((1, 3, 14, 14)))
    assert abs(ssim_y(a, b) - ssim_y(b, a)) <= 1e-12


def test_ssim_too_small_after_crop():
    with pytest.raises(ValueError, match="small"):
        ssim_y(Tensor(np.zeros((1, 3, 12, 12))), Tensor(np.zeros((1, 3, 12, 12))), crop=2)


# ---------------------------------------------------------------------------
# report


def test_eval_report_aggregates():
    rep = EvalReport(scale=2, crop=2)
    rep.add("a.png", 30.0, 0.9)
    rep.add("b.png", 34.0, 0.8)
    assert rep.mean_psnr == 32.0
    assert abs(rep.mean_ssim - 0.85) <= 1e-12
    csv = rep.to_csv()
    assert "a.png,30.0000,0.900000" in csv and csv.startswith("name,psnr,ssim")
