"""Procedural toy HR image set for desk-scale training runs.

Sixteen deterministic 256x256 images mixing texture families a small model
can learn: warped checkerboards, line gratings, concentric rings, flat-color
geometric scenes, value-noise clouds, glyph-like strokes and soft photo-ish
composites. Two images are held out in val.txt.

Usage:  python -m rwkvsr.toyset OUTDIR [--n 16] [--size 256] [--seed 0]
"""

import argparse
import os

import numpy as np

from .pngio import save_png
from .tensor import Tensor, bicubic_resize

# held-out images: a warped checkerboard and a hard grating, families where
# bicubic upscaling aliases badly and a trained model has real headroom
VAL_NAMES = ("toy_08.png", "toy_09.png")


def _grid(size):
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    return y / size, x / size


def _colorize(field, rng):
    """Map a scalar field in [0, 1] to RGB with a random smooth palette."""
    base = rng.uniform(0.1, 0.5, size=3)
    gain = rng.uniform(0.4, 0.9, size=3)
    img = base[:, None, None] + gain[:, None, None] * field[None]
    return np.clip(img, 0.0, 1.0)


def _checker(size, rng):
    y, x = _grid(size)
    f = rng.uniform(6, 14)
    wy = 0.05 * np.sin(2 * np.pi * rng.uniform(1, 3) * x)
    wx = 0.05 * np.sin(2 * np.pi * rng.uniform(1, 3) * y)
    field = ((np.floor((y + wy) * f) + np.floor((x + wx) * f)) % 2).astype(np.float64)
    return _colorize(field, rng)


def _grating(size, rng):
    y, x = _grid(size)
    theta = rng.uniform(0, np.pi)
    freq = rng.uniform(12, 40)
    phase = rng.uniform(0, 2 * np.pi)
    field = 0.5 + 0.5 * np.sign(np.sin(2 * np.pi * freq * (np.cos(theta) * x + np.sin(theta) * y) + phase))
    return _colorize(field, rng)


def _rings(size, rng):
    y, x = _grid(size)
    cy, cx = rng.uniform(0.2, 0.8, size=2)
    rad = np.hypot(y - cy, x - cx)
    field = 0.5 + 0.5 * np.sin(2 * np.pi * rng.uniform(10, 25) * rad)
    return _colorize(field, rng)


def _shapes(size, rng):
    y, x = _grid(size)
    img = np.empty((3, size, size))
    top, bottom = rng.uniform(0.1, 0.9, size=(2, 3))
    for ch in range(3):
        img[ch] = top[ch] + (bottom[ch] - top[ch]) * y
    for _ in range(int(rng.integers(6, 12))):
        cy, cx = rng.uniform(0.1, 0.9, size=2)
        color = rng.uniform(0, 1, size=3)
        kind = rng.integers(0, 2)
        if kind == 0:
            r = rng.uniform(0.04, 0.18)
            mask = (y - cy) ** 2 + (x - cx) ** 2 < r * r
        else:
            hh, ww = rng.uniform(0.05, 0.2, size=2)
            mask = (np.abs(y - cy) < hh) & (np.abs(x - cx) < ww)
        img[:, mask] = color[:, None]
    return np.clip(img, 0, 1)


def _clouds(size, rng):
    field = np.zeros((size, size))
    for cells, amp in ((8, 0.6), (16, 0.3), (32, 0.15)):
        coarse = rng.uniform(0, 1, size=(1, 1, cells, cells)).astype(np.float32)
        up = bicubic_resize(Tensor(coarse), size, size).data[0, 0].astype(np.float64)
        field += amp * up
    field = (field - field.min()) / max(np.ptp(field), 1e-9)
    return _colorize(field, rng)


def _glyphs(size, rng):
    img = np.full((3, size, size), rng.uniform(0.75, 0.95, size=3)[:, None, None])
    ink = rng.uniform(0.0, 0.25, size=3)
    cell = size // 16
    for gy in range(2, 14):
        for gx in range(2, 14):
            if rng.random() < 0.45:
                continue
            oy, ox = gy * cell, gx * cell
            strokes = rng.integers(2, 5)
            for _ in range(strokes):
                if rng.random() < 0.5:
                    row = oy + int(rng.integers(1, cell - 1))
                    img[:, row, ox + 1 : ox + cell - 1] = ink[:, None]
                else:
                    col = ox + int(rng.integers(1, cell - 1))
                    img[:, oy + 1 : oy + cell - 1, col] = ink[:, None]
    return img


def _composite(size, rng):
    a = _clouds(size, rng)
    b = _grating(size, rng)
    mix = rng.uniform(0.3, 0.7)
    return np.clip(mix * a + (1 - mix) * b, 0, 1)


def _soft_scene(size, rng):
    img = _clouds(size, rng)
    y, x = _grid(size)
    for _ in range(int(rng.integers(3, 6))):
        cy, cx = rng.uniform(0.2, 0.8, size=2)
        r = rng.uniform(0.08, 0.25)
        soft = np.clip(1.0 - np.hypot(y - cy, x - cx) / r, 0, 1) ** 2
        color = rng.uniform(0, 1, size=3)
        img = img * (1 - soft[None]) + color[:, None, None] * soft[None]
    return np.clip(img, 0, 1)


_RECIPES = (_checker, _grating, _rings, _shapes, _clouds, _glyphs, _composite, _soft_scene)


def generate_toyset(out_dir, n=16, size=256, seed=0):
    """Write n deterministic PNGs plus val.txt; returns the image names."""
    os.makedirs(out_dir, exist_ok=True)
    names = []
    for i in range(n):
        rng = np.random.default_rng(seed * 10007 + i)
        img = _RECIPES[i % len(_RECIPES)](size, rng)
        name = f"toy_{i:02d}.png"
        save_png(os.path.join(out_dir, name), img.astype(np.float32))
        names.append(name)
    with open(os.path.join(out_dir, "val.txt"), "w") as fh:
        for name in VAL_NAMES:
            if name in names:
                fh.write(name + "\n")
    return names


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir")
    ap.add_argument("--n", type=int, default=16)
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    names = generate_toyset(args.out_dir, args.n, args.size, args.seed)
    print(f"wrote {len(names)} images to {args.out_dir}")


if __name__ == "__main__":
    main()
