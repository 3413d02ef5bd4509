"""Training loop: paired patch sampling, L1 loss, Adam, periodic validation.

Patches are sampled as aligned HR crops with the LR side synthesized by
bicubic downscaling, then augmented (rot90 multiples x horizontal flip)
identically on both sides. The optimizer is plain Adam with bias correction
at a constant learning rate. Everything is deterministic in the seed.
"""

import os
import time
from dataclasses import dataclass

import numpy as np

from .metrics import EvalReport, psnr_y, ssim_y
from .model import forward, save_checkpoint
from .pngio import load_png
from .tensor import DTYPE, Tape, Tensor, absval, bicubic_resize, mean_all, sub


@dataclass
class TrainConfig:
    batch: int = 16
    iters: int = 20000
    lr: float = 1e-4
    patch_lr: int = 48
    scale: int = 4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    val_every: int = 500

    def __post_init__(self):
        if self.batch < 1 or self.iters < 0 or self.patch_lr < 1:
            raise ValueError("batch/iters/patch_lr out of range")
        if self.scale not in (2, 4):
            raise ValueError(f"scale must be 2 or 4, got {self.scale}")


@dataclass
class SamplePair:
    lr_patch: np.ndarray  # (3, p, p)
    hr_patch: np.ndarray  # (3, s*p, s*p)
    source: str
    crop: tuple  # LR-grid offset (oy, ox); the HR offset is scale * this
    aug: int  # 0..7: rot90 count in the low 2 bits, flip in bit 2


class TrainingDiverged(RuntimeError):
    pass


# augmentation codes: rotate by 90 deg `code & 3` times, then flip
# horizontally if bit 2 is set; all are bijections on square patches


def apply_aug(img, code):
    out = np.rot90(img, code & 3, axes=(1, 2))
    if code & 4:
        out = out[:, :, ::-1]
    return np.ascontiguousarray(out)


def invert_aug(img, code):
    out = img
    if code & 4:
        out = out[:, :, ::-1]
    out = np.rot90(out, -(code & 3), axes=(1, 2))
    return np.ascontiguousarray(out)


def synth_pair(hr_image, scale, rng, patch_lr=48, name=""):
    """Aligned random crop + bicubic LR synthesis + shared augmentation."""
    c, h, w = hr_image.shape
    need = scale * patch_lr
    if h < need or w < need:
        raise ValueError(
            f"image {name or '<array>'} is {h}x{w}; need at least {need}x{need} "
            f"for scale {scale} with {patch_lr}x{patch_lr} LR patches"
        )
    oy = int(rng.integers(0, h // scale - patch_lr + 1))
    ox = int(rng.integers(0, w // scale - patch_lr + 1))
    hr_crop = hr_image[:, scale * oy : scale * oy + need, scale * ox : scale * ox + need]
    lr = bicubic_resize(Tensor(hr_crop[None]), patch_lr, patch_lr).data[0]
    lr = np.clip(lr, 0.0, 1.0)
    code = int(rng.integers(0, 8))
    return SamplePair(
        lr_patch=apply_aug(lr, code),
        hr_patch=apply_aug(np.ascontiguousarray(hr_crop), code),
        source=name,
        crop=(oy, ox),
        aug=code,
    )


def l1_loss(pred, target):
    """Mean absolute error (subgradient 0 at exact ties)."""
    if pred.shape != target.shape:
        raise ValueError(f"l1_loss shapes differ: {pred.shape} vs {target.shape}")
    return mean_all(absval(sub(pred, target)))


class AdamState:
    """First/second moment buffers per parameter, keyed by name."""

    def __init__(self, params):
        self.m = {p.name: np.zeros_like(p.value.data) for p in params}
        self.v = {p.name: np.zeros_like(p.value.data) for p in params}

    def step(self, params, t, cfg):
        if t < 1:
            raise ValueError("Adam step index starts at 1")
        b1, b2 = cfg.beta1, cfg.beta2
        corr1 = 1.0 - b1**t
        corr2 = 1.0 - b2**t
        for p in params:
            g = p.grad
            m = self.m[p.name]
            v = self.v[p.name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / corr1
            vhat = v / corr2
            p.value.data -= (cfg.lr * mhat / (np.sqrt(vhat) + cfg.eps)).astype(DTYPE)


def adam_step(params, state, t, cfg):
    state.step(params, t, cfg)


def load_dataset(dataset_dir):
    """Sorted (name, image) pairs plus the held-out names from val.txt.

    A missing val.txt means no held-out split (validation rows are skipped).
    """
    if not os.path.isdir(dataset_dir):
        raise FileNotFoundError(f"dataset directory not found: {dataset_dir}")
    names = sorted(f for f in os.listdir(dataset_dir) if f.lower().endswith(".png"))
    if not names:
        raise FileNotFoundError(f"no PNG images in {dataset_dir}")
    images = [(n, load_png(os.path.join(dataset_dir, n))) for n in names]
    val_names = set()
    val_file = os.path.join(dataset_dir, "val.txt")
    if os.path.isfile(val_file):
        with open(val_file) as fh:
            val_names = {line.strip() for line in fh if line.strip()}
    train = [(n, im) for n, im in images if n not in val_names]
    val = [(n, im) for n, im in images if n in val_names]
    if not train:
        raise FileNotFoundError(f"{dataset_dir}: every image is held out in val.txt")
    return train, val


def evaluate_images(state, hr_images, crop=None):
    """Full-image evaluation against bicubic-downscaled inputs.

    Returns (model_report, bicubic_report); images are cropped to a multiple
    of the scale factor first.
    """
    scale = state.config.scale
    crop = scale if crop is None else crop
    model_rep = EvalReport(scale=scale, crop=crop)
    bicubic_rep = EvalReport(scale=scale, crop=crop)
    for name, img in hr_images:
        c, h, w = img.shape
        h -= h % scale
        w -= w % scale
        hr = Tensor(np.ascontiguousarray(img[:, :h, :w])[None])
        lr = bicubic_resize(hr, h // scale, w // scale)
        lr = Tensor(np.clip(lr.data, 0.0, 1.0))
        pred = forward(state, lr)
        pred = Tensor(np.clip(pred.data, 0.0, 1.0))
        up = bicubic_resize(lr, h, w)
        up = Tensor(np.clip(up.data, 0.0, 1.0))
        model_rep.add(name, psnr_y(pred, hr, crop), ssim_y(pred, hr, crop))
        bicubic_rep.add(name, psnr_y(up, hr, crop), ssim_y(up, hr, crop))
    return model_rep, bicubic_rep


def train(state, dataset_dir, cfg, out_dir, quiet=True):
    """Run the training protocol; returns the list of (iter, loss, ms) rows.

    Writes log.csv (iter,loss,ms_per_iter), val.csv (iter,psnr,ssim), the
    best-validation-PSNR checkpoint and the final checkpoint under out_dir.
    Aborts with TrainingDiverged (after writing a diagnostic checkpoint) if
    the loss stops being finite.
    """
    if cfg.scale != state.config.scale:
        raise ValueError(
            f"train scale {cfg.scale} does not match model scale {state.config.scale}"
        )
    os.makedirs(out_dir, exist_ok=True)
    train_imgs, val_imgs = load_dataset(dataset_dir)
    rng = np.random.default_rng(cfg.seed)
    params = state.params()
    adam = AdamState(params)
    log_rows = []
    val_rows = []
    best_psnr = float("-inf")

    log_path = os.path.join(out_dir, "log.csv")
    val_path = os.path.join(out_dir, "val.csv")
    with open(log_path, "w") as log_fh:
        log_fh.write("iter,loss,ms_per_iter\n")
        for it in range(1, cfg.iters + 1):
            t0 = time.perf_counter()
            idx = rng.integers(0, len(train_imgs), size=cfg.batch)
            pairs = [
                synth_pair(train_imgs[i][1], cfg.scale, rng, cfg.patch_lr, train_imgs[i][0])
                for i in idx
            ]
            lr_batch = Tensor(np.stack([p.lr_patch for p in pairs]))
            hr_batch = Tensor(np.stack([p.hr_patch for p in pairs]))
            state.zero_grads()
            with Tape() as tape:
                pred = forward(state, lr_batch)
                loss = l1_loss(pred, hr_batch)
                loss_val = loss.item()
                if not np.isfinite(loss_val):
                    save_checkpoint(state, os.path.join(out_dir, "diverged.ckpt"))
                    raise TrainingDiverged(
                        f"non-finite loss at iteration {it}; "
                        f"diagnostic checkpoint written to {out_dir}/diverged.ckpt"
                    )
                tape.backward(loss)
            adam.step(params, it, cfg)
            ms = (time.perf_counter() - t0) * 1e3
            log_rows.append((it, loss_val, ms))
            log_fh.write(f"{it},{loss_val:.8e},{ms:.3f}\n")
            if not quiet and (it % 50 == 0 or it == 1):
                print(f"iter {it}/{cfg.iters} loss {loss_val:.5f} ({ms:.0f} ms)", flush=True)
            if cfg.val_every and val_imgs and it % cfg.val_every == 0:
                rep, _ = evaluate_images(state, val_imgs)
                val_rows.append((it, rep.mean_psnr, rep.mean_ssim))
                if rep.mean_psnr > best_psnr:
                    best_psnr = rep.mean_psnr
                    save_checkpoint(state, os.path.join(out_dir, "best.ckpt"))
                if not quiet:
                    print(
                        f"val @ {it}: psnr {rep.mean_psnr:.3f} ssim {rep.mean_ssim:.4f}",
                        flush=True,
                    )
    with open(val_path, "w") as fh:
        fh.write("iter,psnr,ssim\n")
        for it, p, s in val_rows:
            fh.write(f"{it},{p:.4f},{s:.6f}\n")
    save_checkpoint(state, os.path.join(out_dir, "final.ckpt"))
    return log_rows
