"""Quality metrics on the luma channel.

PSNR and SSIM are computed on the BT.601 Y channel (studio swing: black 16,
white 235 on the 255 scale) after cropping a border from both images, which
is the standard super-resolution evaluation protocol. All metric math runs
in float64.
"""

from dataclasses import dataclass, field

import numpy as np

from .tensor import DTYPE, Tensor, as_tensor

PSNR_CAP_DB = 100.0

_YR, _YG, _YB, _YOFF = 65.481, 128.553, 24.966, 16.0


def rgb_to_y(x):
    """BT.601 luma of an RGB tensor in [0, 1]: Y in [16, 235] (255 scale)."""
    x = as_tensor(x)
    if x.data.ndim != 4 or x.shape[1] != 3:
        raise ValueError(f"rgb_to_y expects (N, 3, H, W), got {x.shape}")
    d = x.data.astype(np.float64)
    y = _YR * d[:, 0] + _YG * d[:, 1] + _YB * d[:, 2] + _YOFF
    return Tensor(y[:, None].astype(DTYPE))


def _y_planes(a, b, crop):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"metric inputs differ in shape: {a.shape} vs {b.shape}")
    h, w = a.shape[2], a.shape[3]
    if crop < 0 or 2 * crop >= min(h, w):
        raise ValueError(f"crop {crop} too large for {h}x{w} images")
    ya = rgb_to_y(a).data.astype(np.float64)[:, 0]
    yb = rgb_to_y(b).data.astype(np.float64)[:, 0]
    if crop:
        ya = ya[:, crop:-crop, crop:-crop]
        yb = yb[:, crop:-crop, crop:-crop]
    return ya, yb


def psnr_y(a, b, crop=0):
    """Peak signal-to-noise ratio in dB on Y, capped at 100 dB."""
    ya, yb = _y_planes(a, b, crop)
    mse = float(np.mean((ya - yb) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(255.0**2 / mse))


def _gaussian_window(size=11, sigma=1.5):
    g = np.exp(-((np.arange(size) - (size - 1) / 2.0) ** 2) / (2 * sigma**2))
    return g / g.sum()


_SSIM_WIN = _gaussian_window()


def _filter_valid(img, g):
    """Separable valid-mode correlation of a 2-D image with window g (x) g."""
    k = g.size
    win = np.lib.stride_tricks.sliding_window_view(img, k, axis=0)
    img = np.tensordot(win, g, axes=([2], [0]))
    win = np.lib.stride_tricks.sliding_window_view(img, k, axis=1)
    return np.tensordot(win, g, axes=([2], [0]))


def ssim_y(a, b, crop=0):
    """Single-scale SSIM on Y: 11x11 Gaussian window (sigma 1.5), K1=0.01,
    K2=0.03, L=255, averaged over valid (unpadded) window positions."""
    ya, yb = _y_planes(a, b, crop)
    if ya.shape[1] < 11 or ya.shape[2] < 11:
        raise ValueError(f"image too small for SSIM after crop: {ya.shape[1]}x{ya.shape[2]}")
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    g = _SSIM_WIN
    vals = []
    for i in range(ya.shape[0]):
        x, y = ya[i], yb[i]
        mx = _filter_valid(x, g)
        my = _filter_valid(y, g)
        mxx = _filter_valid(x * x, g)
        myy = _filter_valid(y * y, g)
        mxy = _filter_valid(x * y, g)
        vx = mxx - mx * mx
        vy = myy - my * my
        cxy = mxy - mx * my
        num = (2 * mx * my + c1) * (2 * cxy + c2)
        den = (mx * mx + my * my + c1) * (vx + vy + c2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))


@dataclass
class EvalRow:
    name: str
    psnr: float
    ssim: float


@dataclass
class EvalReport:
    """Per-image scores plus aggregate means (PSNR averaged in dB)."""

    scale: int
    crop: int
    rows: list = field(default_factory=list)

    def add(self, name, psnr, ssim):
        self.rows.append(EvalRow(name, psnr, ssim))

    @property
    def mean_psnr(self):
        return float(np.mean([r.psnr for r in self.rows])) if self.rows else float("nan")

    @property
    def mean_ssim(self):
        return float(np.mean([r.ssim for r in self.rows])) if self.rows else float("nan")

    def to_csv(self):
        lines = ["name,psnr,ssim"]
        for r in self.rows:
            lines.append(f"{r.name},{r.psnr:.4f},{r.ssim:.6f}")
        lines.append(f"mean,{self.mean_psnr:.4f},{self.mean_ssim:.6f}")
        return "\n".join(lines) + "\n"
