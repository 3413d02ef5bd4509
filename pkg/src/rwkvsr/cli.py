"""Operator surface: train, infer, eval, gradcheck, bench and ablate.

Configuration comes from an optional `key = value` file (# comments
allowed) overridden by command-line flags; unknown keys are rejected.
Exit codes: 0 success, 1 internal failure, 2 bad input.
"""

import argparse
import os
import sys


class UsageError(Exception):
    """Operator error: bad flags, missing files, invalid config (exit 2)."""


# ---------------------------------------------------------------------------
# config file handling

_MODEL_KEYS = {
    "channels": int,
    "n_vrg": int,
    "vrbs_per_vrg": int,
    "scale": int,
    "heads": int,
    "ffn": str,
    "shift_mode": str,
    "scan": str,
    "seq": str,
    "hidden_mult": int,
    "use_norm": bool,
    "long_skip": bool,
    "init": str,
    "seed": int,
}
_TRAIN_KEYS = {
    "batch": int,
    "iters": int,
    "lr": float,
    "patch_lr": int,
    "beta1": float,
    "beta2": float,
    "eps": float,
    "val_every": int,
}
_PATH_KEYS = {"data": str, "out": str, "preset": str}
_SPECIAL_KEYS = {"dilations": str}
CONFIG_SCHEMA = {**_MODEL_KEYS, **_TRAIN_KEYS, **_PATH_KEYS, **_SPECIAL_KEYS}


def _parse_value(key, raw):
    typ = CONFIG_SCHEMA[key]
    if typ is bool:
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise UsageError(f"config key {key}: expected a boolean, got {raw!r}")
    try:
        return typ(raw)
    except ValueError:
        raise UsageError(f"config key {key}: expected {typ.__name__}, got {raw!r}")


def read_config_file(path):
    if not os.path.isfile(path):
        raise UsageError(f"config file not found: {path}")
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key not in CONFIG_SCHEMA:
                raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _parse_value(key, raw)
    return values


def print_config_schema():
    print("# configuration keys (file `key = value`, flags override)")
    for group, keys in (
        ("model", _MODEL_KEYS),
        ("training", _TRAIN_KEYS),
        ("paths", _PATH_KEYS),
        ("special", _SPECIAL_KEYS),
    ):
        print(f"[{group}]")
        for key, typ in keys.items():
            print(f"  {key}: {typ.__name__}")


def _merged_config(args):
    """File values overridden by explicitly set flags."""
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for key in CONFIG_SCHEMA:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if getattr(args, "no_norm", False):
        values["use_norm"] = False
    if getattr(args, "no_long_skip", False):
        values["long_skip"] = False
    return values


def _build_model_config(values):
    from .model import PRESETS, ModelConfig

    kwargs = {}
    preset = values.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise UsageError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        kwargs.update(PRESETS[preset])
    for key in _MODEL_KEYS:
        if key in values:
            kwargs[key] = values[key]
    if "dilations" in values:
        try:
            kwargs["dilations"] = tuple(int(v) for v in values["dilations"].split(","))
        except ValueError:
            raise UsageError(f"dilations must be four comma-separated ints, got {values['dilations']!r}")
    try:
        return ModelConfig(**kwargs)
    except ValueError as exc:
        raise UsageError(str(exc))


def _build_train_config(values, model_cfg):
    from .training import TrainConfig

    kwargs = {key: values[key] for key in _TRAIN_KEYS if key in values}
    kwargs["scale"] = model_cfg.scale
    kwargs.setdefault("seed", model_cfg.seed)
    try:
        return TrainConfig(**kwargs)
    except ValueError as exc:
        raise UsageError(str(exc))


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args):
    from .model import build_model
    from .training import train

    values = _merged_config(args)
    model_cfg = _build_model_config(values)
    train_cfg = _build_train_config(values, model_cfg)
    data_dir = values.get("data")
    out_dir = values.get("out", "runs/train")
    if not data_dir:
        raise UsageError("no dataset directory (set --data or the config key `data`)")
    if not os.path.isdir(data_dir):
        raise UsageError(f"dataset directory not found: {data_dir}")
    state = build_model(model_cfg)
    print(f"model: {state.param_count():,} parameters; writing to {out_dir}")
    train(state, data_dir, train_cfg, out_dir, quiet=args.quiet)
    print(f"done: {out_dir}/final.ckpt")
    return 0


def _iter_input_images(path):
    if os.path.isdir(path):
        names = sorted(f for f in os.listdir(path) if f.lower().endswith(".png"))
        if not names:
            raise UsageError(f"no PNG images in {path}")
        return [os.path.join(path, n) for n in names]
    if os.path.isfile(path):
        return [path]
    raise UsageError(f"input not found: {path}")


def cmd_infer(args):
    import numpy as np

    from .model import forward
    from .pngio import load_png, save_png
    from .tensor import Tensor

    state = _load_ckpt(args.ckpt)
    if args.scale is not None and args.scale != state.config.scale:
        raise UsageError(
            f"--scale {args.scale} does not match checkpoint scale {state.config.scale}"
        )
    os.makedirs(args.out, exist_ok=True)
    scale = state.config.scale
    for path in _iter_input_images(args.input):
        img = load_png(path)
        pred = forward(state, Tensor(img[None]))
        out = np.clip(pred.data[0], 0.0, 1.0)
        stem = os.path.splitext(os.path.basename(path))[0]
        dest = os.path.join(args.out, f"{stem}_x{scale}.png")
        save_png(dest, out)
        print(dest)
    return 0


def _load_ckpt(path):
    from .model import CheckpointError, load_checkpoint

    if not os.path.isfile(path):
        raise UsageError(f"checkpoint not found: {path}")
    try:
        return load_checkpoint(path)
    except CheckpointError as exc:
        raise UsageError(str(exc))


def _load_hr_dir(path):
    from .pngio import load_png

    if not os.path.isdir(path):
        raise UsageError(f"HR directory not found: {path}")
    names = sorted(f for f in os.listdir(path) if f.lower().endswith(".png"))
    if not names:
        raise UsageError(f"no PNG images in {path}")
    return [(n, load_png(os.path.join(path, n))) for n in names]


def _print_eval_table(model_rep, bicubic_rep):
    print(f"{'image':<20} {'model PSNR':>11} {'model SSIM':>11} {'bicubic PSNR':>13} {'bicubic SSIM':>13}")
    for mr, br in zip(model_rep.rows, bicubic_rep.rows):
        print(f"{mr.name:<20} {mr.psnr:>11.4f} {mr.ssim:>11.6f} {br.psnr:>13.4f} {br.ssim:>13.6f}")
    print(
        f"{'mean':<20} {model_rep.mean_psnr:>11.4f} {model_rep.mean_ssim:>11.6f} "
        f"{bicubic_rep.mean_psnr:>13.4f} {bicubic_rep.mean_ssim:>13.6f}"
    )


def cmd_eval(args):
    from .training import evaluate_images

    state = _load_ckpt(args.ckpt)
    if args.scale is not None and args.scale != state.config.scale:
        raise UsageError(
            f"--scale {args.scale} does not match checkpoint scale {state.config.scale}"
        )
    images = _load_hr_dir(args.hr)
    model_rep, bicubic_rep = evaluate_images(state, images, crop=args.crop)
    _print_eval_table(model_rep, bicubic_rep)
    if args.out_csv:
        with open(args.out_csv, "w") as fh:
            fh.write("column,name,psnr,ssim\n")
            for rep, col in ((model_rep, "model"), (bicubic_rep, "bicubic")):
                for r in rep.rows:
                    fh.write(f"{col},{r.name},{r.psnr:.4f},{r.ssim:.6f}\n")
                fh.write(f"{col},mean,{rep.mean_psnr:.4f},{rep.mean_ssim:.6f}\n")
    return 0


def cmd_gradcheck(args):
    from .gradchecks import MODULES, run_gradchecks

    if args.module != "all" and args.module not in MODULES:
        raise UsageError(f"unknown gradcheck module {args.module!r}; choose all|" + "|".join(MODULES))
    rows = run_gradchecks(args.module)
    worst_fail = None
    for name, err, tol in rows:
        ok = err <= tol
        print(f"{'PASS' if ok else 'FAIL'} {name}: max rel err {err:.3e} (tol {tol:g})")
        if not ok and (worst_fail is None or err > worst_fail[1]):
            worst_fail = (name, err)
    if worst_fail:
        print(f"FAILED: {worst_fail[0]} at {worst_fail[1]:.3e}")
        return 1
    return 0


def cmd_bench(args):
    from .wkv6 import bench_wkv, time_scaling_exponent

    if args.mode == "wkv":
        sizes = ([int(v) for v in args.sizes.split(",") if v.strip()]
                 if args.sizes is not None else [1024, 2048, 4096, 8192])
        backends = ["compiled", "numpy"] if args.compare else [args.backend]
        if args.compare:
            print("backend,T,mean_ms,std_ms")
        else:
            print("T,mean_ms,std_ms")
        for backend in backends:
            try:
                rows = bench_wkv(sizes, args.channels, args.heads, args.reps, backend=backend)
            except ImportError:
                print(f"# backend {backend} unavailable", file=sys.stderr)
                continue
            for t, mean, std in rows:
                prefix = f"{backend}," if args.compare else ""
                print(f"{prefix}{t},{mean:.4f},{std:.4f}")
            if rows and len(rows) > 1:
                print(f"# {backend}: log-log slope {time_scaling_exponent(rows):.3f}", file=sys.stderr)
        return 0

    # full-model forward timing
    import time as _time

    import numpy as np

    from .model import ModelConfig, build_model, forward
    from .tensor import Tensor

    sizes = ([int(v) for v in args.sizes.split(",") if v.strip()]
             if args.sizes is not None else [48, 96])
    cfg = ModelConfig(channels=32, n_vrg=2, vrbs_per_vrg=2, scale=2, seed=0)
    state = build_model(cfg)
    print("size,mean_ms,std_ms")
    rng = np.random.default_rng(0)
    for size in sizes:
        x = Tensor(rng.random((1, 3, size, size)))
        forward(state, x)  # warm-up
        times = []
        for _ in range(max(args.reps, 1)):
            t0 = _time.perf_counter()
            forward(state, x)
            times.append((_time.perf_counter() - t0) * 1e3)
        print(f"{size},{np.mean(times):.3f},{np.std(times):.3f}")
    return 0


# reference results from the original full-scale experiments (96 channels,
# 16 groups, DF2K+RSSCN7 training); printed for orientation, never asserted
FULLSCALE_REF = {
    "ffn": {"mlp": (28.0689, 0.7188), "channelmix": (28.0720, 0.7192)},
    "shift": {
        "omnishift": (30.1034, 0.8453),
        "qshift": (30.0965, 0.8411),
        "omniquad": (30.1390, 0.8458),
    },
    "scan": {"wkv1d": (30.1149, 0.8449), "wkv2d": (30.1390, 0.8458)},
}

_AXIS_KEY = {"ffn": "ffn", "shift": "shift_mode", "scan": "scan"}


def cmd_ablate(args):
    from .model import build_model, clone_config
    from .training import evaluate_images, load_dataset, train

    values = _merged_config(args)
    model_cfg = _build_model_config(values)
    train_cfg = _build_train_config(values, model_cfg)
    data_dir = values.get("data")
    out_dir = values.get("out", "runs/ablate")
    if not data_dir:
        raise UsageError("no dataset directory (set --data or the config key `data`)")
    if not os.path.isdir(data_dir):
        raise UsageError(f"dataset directory not found: {data_dir}")
    axis = args.axis
    variants = list(FULLSCALE_REF[axis])
    cfg_key = _AXIS_KEY[axis]
    _, val_imgs = load_dataset(data_dir)
    if not val_imgs:
        raise UsageError(f"{data_dir}: ablation needs a held-out split (val.txt)")

    results = []
    for variant in variants:
        cfg = clone_config(model_cfg, **{cfg_key: variant})
        state = build_model(cfg)
        run_dir = os.path.join(out_dir, f"{axis}_{variant}")
        print(f"[{axis}={variant}] training {train_cfg.iters} iters -> {run_dir}")
        train(state, data_dir, train_cfg, run_dir, quiet=args.quiet)
        rep, _ = evaluate_images(state, val_imgs)
        results.append((variant, rep.mean_psnr, rep.mean_ssim))

    print(f"\naxis: {axis} (toy scale; fullscale_ref columns are non-binding reference values)")
    print(f"{'variant':<12} {'psnr':>9} {'ssim':>9} {'ref_psnr':>10} {'ref_ssim':>10}")
    for variant, psnr, ssim in results:
        ref_p, ref_s = FULLSCALE_REF[axis][variant]
        print(f"{variant:<12} {psnr:>9.4f} {ssim:>9.6f} {ref_p:>10.4f} {ref_s:>10.6f}")
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(
        prog="rwkvsr",
        description="linear-attention single-image super-resolution toolkit",
    )
    ap.add_argument("--help-config", action="store_true", help="print the config-file schema and exit")
    sub = ap.add_subparsers(dest="command")

    def add_model_flags(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--preset", choices=("desk", "full", "toy"))
        for key, typ in _MODEL_KEYS.items():
            if typ is bool:
                continue
            p.add_argument(f"--{key.replace('_', '-')}", type=typ, dest=key)
        p.add_argument("--dilations", type=str, dest="dilations")
        p.add_argument("--no-norm", action="store_true", help="disable pre-mix normalization")
        p.add_argument("--no-long-skip", action="store_true", help="disable the long skip connection")

    def add_train_flags(p):
        for key, typ in _TRAIN_KEYS.items():
            p.add_argument(f"--{key.replace('_', '-')}", type=typ, dest=key)
        p.add_argument("--data", dest="data", help="directory of HR PNGs (+ optional val.txt)")
        p.add_argument("--out", dest="out", help="output directory")
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("train", help="run the training protocol")
    add_model_flags(p)
    add_train_flags(p)

    p = sub.add_parser("infer", help="super-resolve PNGs with a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", required=True, help="input PNG or directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--scale", type=int, help="must match the checkpoint scale")

    p = sub.add_parser("eval", help="score a checkpoint against HR images (plus bicubic baseline)")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--hr", required=True, help="directory of HR PNGs")
    p.add_argument("--scale", type=int)
    p.add_argument("--crop", type=int, default=None, help="border crop (default: scale)")
    p.add_argument("--out-csv", help="also write the report as CSV")

    p = sub.add_parser("gradcheck", help="finite-difference gradient fixtures")
    p.add_argument("--module", default="all", help="all|tensor|wkv6|shifts|blocks|model")

    p = sub.add_parser("bench", help="kernel and model timing")
    p.add_argument("--mode", choices=("wkv", "forward"), default="wkv")
    p.add_argument("--sizes", help="comma-separated T values (wkv) or image sizes (forward)")
    p.add_argument("--channels", type=int, default=64)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--backend", choices=("auto", "compiled", "numpy"), default="auto")
    p.add_argument("--compare", action="store_true", help="emit rows for both kernel lanes")

    p = sub.add_parser("ablate", help="train and compare component variants")
    p.add_argument("--axis", choices=("ffn", "shift", "scan"), required=True)
    add_model_flags(p)
    add_train_flags(p)

    return ap


_COMMANDS = {
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "bench": cmd_bench,
    "ablate": cmd_ablate,
}


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.help_config:
        print_config_schema()
        return 0
    if not args.command:
        ap.print_usage()
        return 2
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (KeyboardInterrupt, BrokenPipeError):
        return 1
    except Exception as exc:  # internal failure contract: exit 1
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
