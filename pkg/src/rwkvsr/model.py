"""End-to-end super-resolution network.

Pipeline: per-image statistics removal, shallow 3x3 feature extraction,
a chain of residual groups, reconstruction (3x3 conv, channel expansion,
one-step pixel shuffle) and statistics restore:

    out = mu_LR + sigma_LR (.) F_HR

Checkpoints use a self-describing text header (magic "ORWKVSR1", config
key=value lines, one line per tensor) followed by raw little-endian
float32 payloads in header order.
"""

import io
from dataclasses import dataclass, fields, replace

import numpy as np

from .blocks import (
    FFN_MODES,
    SCAN_MODES,
    SEQ_MODES,
    init_vrb,
    vrg,
)
from .shifts import SHIFT_MODES
from .tensor import DTYPE, Param, Tensor, add, as_tensor, conv2d_3x3, mul, pixel_shuffle

CHECKPOINT_MAGIC = "ORWKVSR1"

PRESETS = {
    # desk-scale default: 16 residual blocks total
    "desk": dict(channels=96, n_vrg=4, vrbs_per_vrg=4),
    # full-fidelity layout: 96 channels, 16 groups
    "full": dict(channels=96, n_vrg=16, vrbs_per_vrg=4),
    # acceptance-run scale
    "toy": dict(channels=32, n_vrg=2, vrbs_per_vrg=2),
}


@dataclass
class ModelConfig:
    channels: int = 96
    n_vrg: int = 4
    vrbs_per_vrg: int = 4
    scale: int = 4
    heads: int = 0  # 0 selects channels // 16 (at least 1)
    ffn: str = "channelmix"
    shift_mode: str = "omniquad"
    scan: str = "wkv2d"
    seq: str = "rowwise"
    hidden_mult: int = 2
    dilations: tuple = (1, 1, 1, 1)
    use_norm: bool = True
    long_skip: bool = True
    init: str = "warm"
    seed: int = 0

    def __post_init__(self):
        if self.heads == 0:
            self.heads = max(1, self.channels // 16)
        if self.scale not in (2, 4):
            raise ValueError(f"scale must be 2 or 4, got {self.scale}")
        if self.channels % (4 * self.heads) != 0:
            raise ValueError(
                f"channels {self.channels} must be divisible by 4*heads = {4 * self.heads}"
            )
        for key, val, allowed in (
            ("ffn", self.ffn, FFN_MODES),
            ("shift_mode", self.shift_mode, SHIFT_MODES),
            ("scan", self.scan, SCAN_MODES),
            ("seq", self.seq, SEQ_MODES),
            ("init", self.init, ("zero", "warm", "random")),
        ):
            if val not in allowed:
                raise ValueError(f"{key} must be one of {allowed}, got {val!r}")
        self.dilations = tuple(int(d) for d in self.dilations)
        if len(self.dilations) != 4:
            raise ValueError("dilations must list four factors (for 1/3/5/7 kernels)")


class ModelState:
    """Config snapshot plus the ordered parameter collection."""

    def __init__(self, config, head_k, head_b, groups, feat_k, feat_b, up_k, up_b):
        self.config = config
        self.head_k = head_k
        self.head_b = head_b
        self.groups = groups  # list of lists of VrbParams
        self.feat_k = feat_k
        self.feat_b = feat_b
        self.up_k = up_k
        self.up_b = up_b
        self._params = None

    def params(self):
        if self._params is None:
            out = [self.head_k, self.head_b]
            for blocks in self.groups:
                for blk in blocks:
                    out.extend(blk.params())
            out += [self.feat_k, self.feat_b, self.up_k, self.up_b]
            names = [p.name for p in out]
            if len(set(names)) != len(names):
                raise RuntimeError("duplicate parameter names in model")
            self._params = out
        return self._params

    def param_count(self):
        return int(sum(p.value.size for p in self.params()))

    def zero_grads(self):
        for p in self.params():
            p.zero_grad()


def _conv_init(rng, co, ci, zero=False):
    if zero:
        return np.zeros((co, ci, 3, 3), dtype=DTYPE)
    return rng.normal(0.0, np.sqrt(2.0 / (ci * 9)), size=(co, ci, 3, 3)).astype(DTYPE)


def _bilinear_phase_kernel(r, a, b):
    """3x3 taps of bilinear x r upsampling for the (a, b) sub-pixel phase."""

    def axis_weights(phase):
        off = (phase + 0.5) / r - 0.5  # source offset in input coordinates
        w = np.zeros(3)
        w[1] = 1.0 - abs(off)
        w[0 if off < 0 else 2] = abs(off)
        return w

    return np.outer(axis_weights(a), axis_weights(b))


def build_model(config):
    """Create a freshly initialized model; deterministic in config.seed."""
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    c = cfg.channels
    groups = []
    for gi in range(cfg.n_vrg):
        blocks = [
            init_vrb(
                f"vrg{gi}.vrb{bi}", c, cfg.heads, rng,
                ffn_mode=cfg.ffn, shift_mode=cfg.shift_mode, scan_mode=cfg.scan,
                seq_mode=cfg.seq, dilations=cfg.dilations,
                hidden_mult=cfg.hidden_mult, use_norm=cfg.use_norm,
                init_mode=cfg.init,
            )
            for bi in range(cfg.vrbs_per_vrg)
        ]
        groups.append(blocks)
    out_c = 3 * cfg.scale * cfg.scale
    head_k = _conv_init(rng, c, 3)
    feat_k = _conv_init(rng, c, c)
    up_k = _conv_init(rng, out_c, c)
    if cfg.init in ("zero", "warm"):
        # seed the linear reconstruction path as a bilinear upsampler so
        # the untrained model already behaves like a plain interpolator:
        # the first three feature channels carry RGB straight through, the
        # feature conv undoes the (2^n_vrg + 1)-fold gain of the
        # identity-initialized group chain, and each shuffle phase of the
        # upsampling conv holds the matching bilinear taps
        gain = DTYPE(1.0 / (2.0**cfg.n_vrg + 1.0))
        head_k *= 0.25
        head_k[:3] = 0.0
        for ch in range(3):
            head_k[ch, ch, 1, 1] = 1.0
        feat_k *= 0.02
        feat_k[:3] = 0.0
        for ch in range(3):
            feat_k[ch, ch, 1, 1] = gain
        up_k *= 0.02
        r = cfg.scale
        for ch in range(3):
            for a in range(r):
                for b in range(r):
                    up_k[ch * r * r + a * r + b, :3] = 0.0
                    up_k[ch * r * r + a * r + b, ch] = _bilinear_phase_kernel(r, a, b)
    return ModelState(
        cfg,
        head_k=Param("head.k", head_k),
        head_b=Param("head.b", np.zeros(c, dtype=DTYPE)),
        groups=groups,
        feat_k=Param("tail.feat.k", feat_k),
        feat_b=Param("tail.feat.b", np.zeros(c, dtype=DTYPE)),
        up_k=Param("tail.up.k", up_k),
        up_b=Param("tail.up.b", np.zeros(out_c, dtype=DTYPE)),
    )


# ---------------------------------------------------------------------------
# statistics removal / restore

_SIGMA_FLOOR = 1e-6


def normalize(x):
    """Remove per-image, per-channel statistics of the input.

    Returns (x_n, mu, sigma) with mu/sigma of shape (N, C, 1, 1); sigma is
    clamped from below so flat patches stay finite.
    """
    x = as_tensor(x)
    if x.data.ndim != 4:
        raise ValueError(f"normalize expects rank-4 input, got shape {x.shape}")
    x64 = x.data.astype(np.float64)
    mu = x64.mean(axis=(2, 3), keepdims=True)
    sigma = np.maximum(x64.std(axis=(2, 3), keepdims=True), _SIGMA_FLOOR)
    x_n = ((x64 - mu) / sigma).astype(DTYPE)
    return Tensor(x_n), Tensor(mu.astype(DTYPE)), Tensor(sigma.astype(DTYPE))


def denormalize(f, mu, sigma):
    """Restore statistics: out = mu + sigma (.) f (differentiable in f)."""
    return add(mul(f, as_tensor(sigma)), as_tensor(mu))


def forward(state, lr):
    """Super-resolve a batch: (N, 3, h, w) in [0, 1] -> (N, 3, s*h, s*w)."""
    lr = as_tensor(lr)
    if lr.data.ndim != 4 or lr.shape[1] != 3:
        raise ValueError(f"forward expects (N, 3, H, W) input, got {lr.shape}")
    cfg = state.config
    x_n, mu, sigma = normalize(lr)
    f1 = conv2d_3x3(x_n, state.head_k, state.head_b)
    f = f1
    for blocks in state.groups:
        f = vrg(f, blocks)
    if cfg.long_skip:
        f = add(f, f1)
    f = conv2d_3x3(f, state.feat_k, state.feat_b)
    f = conv2d_3x3(f, state.up_k, state.up_b)
    f = pixel_shuffle(f, cfg.scale)
    return denormalize(f, mu, sigma)


# ---------------------------------------------------------------------------
# checkpoint I/O


def _config_items(cfg):
    for f in fields(ModelConfig):
        val = getattr(cfg, f.name)
        if isinstance(val, tuple):
            val = ",".join(str(v) for v in val)
        yield f.name, val


def _parse_config(pairs):
    kwargs = {}
    for key, raw in pairs.items():
        if key == "dilations":
            kwargs[key] = tuple(int(v) for v in raw.split(","))
        elif key in ("ffn", "shift_mode", "scan", "seq", "init"):
            kwargs[key] = raw
        elif key in ("use_norm", "long_skip"):
            kwargs[key] = raw == "True"
        else:
            kwargs[key] = int(raw)
    return ModelConfig(**kwargs)


def save_checkpoint(state, path):
    header = io.StringIO()
    header.write(CHECKPOINT_MAGIC + "\n")
    for key, val in _config_items(state.config):
        header.write(f"config.{key}={val}\n")
    params = state.params()
    for p in params:
        shape = ",".join(str(s) for s in p.value.shape)
        header.write(f"tensor {p.name} f32 {shape}\n")
    with open(path, "wb") as fh:
        fh.write(header.getvalue().encode("utf-8"))
        fh.write(b"\n")
        for p in params:
            fh.write(np.ascontiguousarray(p.value.data, dtype="<f4").tobytes())


class CheckpointError(ValueError):
    pass


def load_checkpoint(path):
    """Rebuild a ModelState from a checkpoint; byte-exact round trip."""
    with open(path, "rb") as fh:
        blob = fh.read()
    sep = blob.find(b"\n\n")
    if sep < 0:
        raise CheckpointError(f"{path}: missing header terminator; file truncated?")
    lines = blob[:sep].decode("utf-8").splitlines()
    payload = blob[sep + 2 :]
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        got = lines[0] if lines else "<empty>"
        raise CheckpointError(
            f"{path}: format {got!r} not supported (expected {CHECKPOINT_MAGIC!r})"
        )
    cfg_pairs = {}
    tensor_specs = []
    for line in lines[1:]:
        if line.startswith("config."):
            key, _, val = line[len("config.") :].partition("=")
            cfg_pairs[key] = val
        elif line.startswith("tensor "):
            _, name, dtype, shape = line.split(" ")
            if dtype != "f32":
                raise CheckpointError(f"{path}: unsupported dtype tag {dtype!r} for {name}")
            tensor_specs.append((name, tuple(int(s) for s in shape.split(","))))
        else:
            raise CheckpointError(f"{path}: unrecognized header line {line!r}")

    state = build_model(_parse_config(cfg_pairs))
    by_name = {p.name: p for p in state.params()}
    if set(by_name) != {name for name, _ in tensor_specs}:
        missing = set(by_name) - {n for n, _ in tensor_specs}
        extra = {n for n, _ in tensor_specs} - set(by_name)
        raise CheckpointError(
            f"{path}: parameter set mismatch (missing {sorted(missing)[:3]}, "
            f"unknown {sorted(extra)[:3]})"
        )
    offset = 0
    for name, shape in tensor_specs:
        p = by_name[name]
        if p.value.shape != shape:
            raise CheckpointError(
                f"{path}: parameter {name} has shape {shape} in file, "
                f"config implies {tuple(p.value.shape)}"
            )
        nbytes = int(np.prod(shape)) * 4
        chunk = payload[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"{path}: payload truncated at parameter {name}")
        p.value.data[...] = np.frombuffer(chunk, dtype="<f4").reshape(shape)
        offset += nbytes
    if offset != len(payload):
        raise CheckpointError(f"{path}: {len(payload) - offset} trailing payload bytes")
    return state


def clone_config(cfg, **overrides):
    return replace(cfg, **overrides)
