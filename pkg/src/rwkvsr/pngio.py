"""8-bit RGB PNG input/output.

The only image codec of the project. 16-bit files are rejected; grayscale
and palette images are promoted to RGB, alpha is dropped.
"""

import numpy as np
from PIL import Image

from .tensor import DTYPE


class ImageError(ValueError):
    pass


def load_png(path):
    """Read a PNG as a (3, H, W) float32 array in [0, 1]."""
    try:
        img = Image.open(path)
    except Exception as exc:
        raise ImageError(f"{path}: cannot read image ({exc})") from exc
    if img.mode.startswith("I;16") or img.mode == "I":
        raise ImageError(f"{path}: 16-bit images are not supported; convert to 8-bit RGB")
    if img.mode != "RGB":
        img = img.convert("RGB")
    arr = np.asarray(img, dtype=np.uint8)
    return (arr.astype(DTYPE) / 255.0).transpose(2, 0, 1).copy()


def save_png(path, arr):
    """Write a (3, H, W) array in [0, 1] as 8-bit RGB (round-half-up to 255)."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ImageError(f"save_png expects (3, H, W), got {arr.shape}")
    q = np.clip(np.floor(arr * 255.0 + 0.5), 0, 255).astype(np.uint8)
    Image.fromarray(q.transpose(1, 2, 0), mode="RGB").save(path, format="PNG")


def quantize(arr):
    """The exact quantization save_png applies, as floats in [0, 1]."""
    q = np.clip(np.floor(np.asarray(arr, dtype=np.float64) * 255.0 + 0.5), 0, 255)
    return (q / 255.0).astype(DTYPE)
