"""Residual building blocks: spatial mixing, channel mixing, blocks, groups.

The spatial-mix block runs a shifted, token-mixed projection stack through
the WKV recurrence along image rows (and, in 2-D mode, along columns of the
transposed map), then fuses the two passes with learnable per-channel
weights and a sigmoid gate. The channel-mix block is the gated squared-relu
feed-forward with a depthwise convolution as its token mixer; a plain
two-layer GELU MLP is available as the ablation alternative.

Blocks keep (N, C, H, W) shape exactly, and with zero-initialized
residual-branch tails every block is the identity map at init.
"""

from dataclasses import dataclass

import numpy as np

from .shifts import OmniQuadParams, init_omni_quad, omni_quad_shift, omni_shift, qshift
from .tensor import (
    DTYPE,
    Param,
    add,
    as_tensor,
    conv2d_3x3,
    cvec,
    depthwise_conv2d,
    gelu,
    layer_norm_cw,
    linear_cw,
    mul,
    record_op,
    relu_sq,
    sigmoid,
    transpose_hw,
)
from .wkv6 import WkvInputs, wkv6_recurrent

FFN_MODES = ("channelmix", "mlp")
SCAN_MODES = ("wkv2d", "wkv1d")
SEQ_MODES = ("rowwise", "rasterflat")


# ---------------------------------------------------------------------------
# sequence layout


def nchw_to_seq(x, seq_mode):
    """Flatten the scan axis into sequences: rowwise (N*H, W, C) where each
    image row is an independent sequence, or rasterflat (N, H*W, C)."""
    x = as_tensor(x)
    n, c, h, w = x.shape

    def fwd(arr):
        moved = arr.transpose(0, 2, 3, 1)
        if seq_mode == "rowwise":
            return np.ascontiguousarray(moved.reshape(n * h, w, c))
        return np.ascontiguousarray(moved.reshape(n, h * w, c))

    def bwd(g):
        back = g.reshape(n, h, w, c).transpose(0, 3, 1, 2)
        return (np.ascontiguousarray(back),)

    return record_op(fwd(x.data), (x,), bwd)


def seq_to_nchw(x, shape_nchw):
    """Inverse of nchw_to_seq for the given original shape."""
    x = as_tensor(x)
    n, c, h, w = shape_nchw
    rowwise = x.shape[0] == n * h

    def bwd(g):
        moved = g.transpose(0, 2, 3, 1)
        if rowwise:
            out = moved.reshape(n * h, w, c)
        else:
            out = moved.reshape(n, h * w, c)
        return (np.ascontiguousarray(out),)

    arr = x.data.reshape(n, h, w, c).transpose(0, 3, 1, 2)
    return record_op(np.ascontiguousarray(arr), (x,), bwd)


# ---------------------------------------------------------------------------
# fused elementwise ops (hot path; semantics match the op-by-op composition)


def _to_cvec(p):
    v = as_tensor(p)
    return v.data.reshape(1, v.shape[0], 1, 1)


def token_mix(x, x_ssh, x_ss, tvec):
    """m = x + x_ssh (.) (x_ss + tvec), tvec broadcast per channel."""
    x, x_ssh, x_ss = as_tensor(x), as_tensor(x_ssh), as_tensor(x_ss)
    tv = _to_cvec(tvec)
    inner = x_ss.data + tv
    out = x.data + x_ssh.data * inner

    def bwd(g):
        g_ssh = g * inner
        g_inner = g * x_ssh.data
        gt = g_inner.sum(axis=(0, 2, 3), dtype=np.float64).astype(DTYPE)
        return g, g_ssh, g_inner, gt

    return record_op(out, (x, x_ssh, x_ss, tvec), bwd)


def scale3_add(parts):
    """sum of x_i (.) gamma_i over (tensor, per-channel gamma) pairs."""
    pairs = [(as_tensor(t), gam) for t, gam in parts]
    cvecs = [_to_cvec(gam) for _, gam in pairs]
    out = None
    for (t, _), cv in zip(pairs, cvecs):
        term = t.data * cv
        out = term if out is None else out + term

    inputs = []
    for t, gam in pairs:
        inputs += [t, gam]

    def bwd(g):
        grads = []
        for (t, _), cv in zip(pairs, cvecs):
            grads.append(g * cv)
            grads.append((g * t.data).sum(axis=(0, 2, 3), dtype=np.float64).astype(DTYPE))
        return grads

    return record_op(out, inputs, bwd)


def sigmoid_gate(x_out, pre):
    """y = x_out (.) sigmoid(pre)."""
    x_out, pre = as_tensor(x_out), as_tensor(pre)
    e = np.exp(-np.abs(pre.data))
    s = np.where(pre.data >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(DTYPE)
    out = x_out.data * s

    def bwd(g):
        return g * s, g * x_out.data * s * (1.0 - s)

    return record_op(out, (x_out, pre), bwd)


# ---------------------------------------------------------------------------
# parameter bundles


@dataclass
class ScanParams:
    """Per-direction token-mix vectors plus that direction's shift params."""

    tma_x: Param
    tma_xb: Param
    tma_r: Param
    tma_k: Param
    tma_v: Param
    tma_g: Param
    shift_mode: str
    shift: object  # OmniQuadParams | Param (5x5 kernel) | None for qshift

    def params(self):
        out = [self.tma_x, self.tma_xb, self.tma_r, self.tma_k, self.tma_v, self.tma_g]
        if isinstance(self.shift, OmniQuadParams):
            out += self.shift.params()
        elif isinstance(self.shift, Param):
            out.append(self.shift)
        return out


@dataclass
class VrsmParams:
    """Spatial-mix parameters: shared projections, two scan directions,
    per-channel fusion weights and the WKV bonus/decay-bias."""

    w_r: Param
    w_k: Param
    w_v: Param
    w_g: Param
    w_ww: Param
    ww_bias: Param
    u: Param
    heads: int
    horizontal: ScanParams
    vertical: ScanParams  # None in 1-D scan mode
    g1: Param
    g2: Param
    g3: Param
    g4: Param
    g5: Param
    scan_mode: str = "wkv2d"
    seq_mode: str = "rowwise"

    def params(self):
        out = [self.w_r, self.w_k, self.w_v, self.w_g, self.w_ww, self.ww_bias, self.u]
        out += self.horizontal.params()
        if self.vertical is not None:
            out += self.vertical.params()
        gammas = [self.g1, self.g2, self.g4]
        if self.vertical is not None:
            gammas = [self.g1, self.g2, self.g3, self.g4, self.g5]
        out += gammas
        return out


@dataclass
class VrcmParams:
    """Channel-mix parameters: depthwise token mixer plus the gated
    squared-relu projection stack (hidden width = mult * C)."""

    dw: Param
    w_r: Param
    w_k: Param
    w_up: Param
    w_down: Param

    def params(self):
        return [self.dw, self.w_r, self.w_k, self.w_up, self.w_down]


@dataclass
class MlpParams:
    w1: Param
    w2: Param

    def params(self):
        return [self.w1, self.w2]


@dataclass
class NormParams:
    gamma: Param
    beta: Param

    def params(self):
        return [self.gamma, self.beta]


@dataclass
class VrbParams:
    """One residual block: norm -> spatial mix -> norm -> ffn -> 3x3 conv,
    each stage folded back through a residual connection."""

    norm1: NormParams
    norm2: NormParams
    vrsm: VrsmParams
    ffn_mode: str
    ffn: object  # VrcmParams | MlpParams
    conv_k: Param
    conv_b: Param
    use_norm: bool = True

    def params(self):
        out = self.norm1.params() + self.norm2.params() + self.vrsm.params()
        out += self.ffn.params()
        out += [self.conv_k, self.conv_b]
        return out


# ---------------------------------------------------------------------------
# initialization

# decay-ish bias so exp(-exp(ww)) starts near 0.9
_WW_BIAS = -2.2504


def _ramp(c):
    return (np.arange(c, dtype=np.float64) / max(c, 1)).astype(DTYPE)


def init_scan_params(prefix, c, rng, shift_mode, dilations):
    if shift_mode == "omniquad":
        shift = init_omni_quad(f"{prefix}.shift", c, rng, dilations)
    elif shift_mode == "omnishift":
        kern = rng.normal(0.0, 0.02, size=(c, 1, 5, 5))
        kern[:, 0, 2, 2] += 1.0
        shift = Param(f"{prefix}.shift.k5", kern.astype(DTYPE))
    elif shift_mode == "qshift":
        shift = None
    else:
        raise ValueError(f"unknown shift_mode {shift_mode!r}")
    return ScanParams(
        tma_x=Param(f"{prefix}.tma_x", rng.uniform(0.0, 1.0, c).astype(DTYPE)),
        tma_xb=Param(f"{prefix}.tma_xb", np.zeros(c, dtype=DTYPE)),
        tma_r=Param(f"{prefix}.tma_r", rng.uniform(0.0, 1.0, c).astype(DTYPE)),
        tma_k=Param(f"{prefix}.tma_k", rng.uniform(0.0, 1.0, c).astype(DTYPE)),
        tma_v=Param(f"{prefix}.tma_v", rng.uniform(0.0, 1.0, c).astype(DTYPE)),
        tma_g=Param(f"{prefix}.tma_g", rng.uniform(0.0, 1.0, c).astype(DTYPE)),
        shift_mode=shift_mode,
        shift=shift,
    )


def _proj(rng, co, ci):
    return rng.normal(0.0, 1.0 / np.sqrt(ci), size=(co, ci)).astype(DTYPE)


def init_vrsm(prefix, c, heads, rng, shift_mode="omniquad", scan_mode="wkv2d",
              seq_mode="rowwise", dilations=(1, 1, 1, 1), init_mode="zero"):
    def gamma(name):
        if init_mode == "zero":
            return Param(f"{prefix}.{name}", np.zeros(c, dtype=DTYPE))
        if init_mode == "warm":
            # small but nonzero so the scan path receives gradient from the
            # first step while blocks stay near the identity
            return Param(f"{prefix}.{name}", np.full(c, 0.02, dtype=DTYPE))
        return Param(f"{prefix}.{name}", rng.normal(0.4, 0.15, c).astype(DTYPE))

    vertical = None
    if scan_mode == "wkv2d":
        vertical = init_scan_params(f"{prefix}.v", c, rng, shift_mode, dilations)
    return VrsmParams(
        w_r=Param(f"{prefix}.w_r", _proj(rng, c, c)),
        w_k=Param(f"{prefix}.w_k", _proj(rng, c, c)),
        w_v=Param(f"{prefix}.w_v", _proj(rng, c, c)),
        w_g=Param(f"{prefix}.w_g", _proj(rng, c, c)),
        w_ww=Param(f"{prefix}.w_ww", (0.1 * _proj(rng, c, c)).astype(DTYPE)),
        ww_bias=Param(f"{prefix}.ww_bias", (_WW_BIAS + 0.2 * _ramp(c)).astype(DTYPE)),
        u=Param(f"{prefix}.u", (0.5 + 0.1 * _ramp(c)).astype(DTYPE)),
        heads=heads,
        horizontal=init_scan_params(f"{prefix}.h", c, rng, shift_mode, dilations),
        vertical=vertical,
        g1=gamma("g1"),
        g2=gamma("g2"),
        g3=gamma("g3"),
        g4=gamma("g4"),
        g5=gamma("g5"),
        scan_mode=scan_mode,
        seq_mode=seq_mode,
    )


def init_vrcm(prefix, c, rng, hidden_mult=2, init_mode="zero"):
    hidden = hidden_mult * c
    dw = rng.normal(0.0, 0.02, size=(c, 1, 3, 3))
    dw[:, 0, 1, 1] += 1.0
    if init_mode == "zero":
        down = np.zeros((c, hidden), dtype=DTYPE)
    elif init_mode == "warm":
        down = (0.1 * _proj(rng, c, hidden)).astype(DTYPE)
    else:
        down = _proj(rng, c, hidden)
    return VrcmParams(
        dw=Param(f"{prefix}.dw", dw.astype(DTYPE)),
        w_r=Param(f"{prefix}.w_r", _proj(rng, c, c)),
        w_k=Param(f"{prefix}.w_k", _proj(rng, c, c)),
        w_up=Param(f"{prefix}.w_up", _proj(rng, hidden, c)),
        w_down=Param(f"{prefix}.w_down", down),
    )


def init_mlp(prefix, c, rng, hidden_mult=2, init_mode="zero"):
    hidden = hidden_mult * c
    if init_mode == "zero":
        w2 = np.zeros((c, hidden), dtype=DTYPE)
    elif init_mode == "warm":
        w2 = (0.1 * _proj(rng, c, hidden)).astype(DTYPE)
    else:
        w2 = _proj(rng, c, hidden)
    return MlpParams(
        w1=Param(f"{prefix}.w1", (np.sqrt(2.0) * _proj(rng, hidden, c)).astype(DTYPE)),
        w2=Param(f"{prefix}.w2", w2),
    )


def init_norm(prefix, c):
    return NormParams(
        gamma=Param(f"{prefix}.gamma", np.ones(c, dtype=DTYPE)),
        beta=Param(f"{prefix}.beta", np.zeros(c, dtype=DTYPE)),
    )


def init_vrb(prefix, c, heads, rng, ffn_mode="channelmix", shift_mode="omniquad",
             scan_mode="wkv2d", seq_mode="rowwise", dilations=(1, 1, 1, 1),
             hidden_mult=2, use_norm=True, init_mode="zero"):
    if ffn_mode == "channelmix":
        ffn = init_vrcm(f"{prefix}.vrcm", c, rng, hidden_mult, init_mode)
    elif ffn_mode == "mlp":
        ffn = init_mlp(f"{prefix}.mlp", c, rng, hidden_mult, init_mode)
    else:
        raise ValueError(f"unknown ffn mode {ffn_mode!r}")
    if init_mode == "zero":
        conv_k = np.zeros((c, c, 3, 3), dtype=DTYPE)
    else:
        conv_k = (0.1 * rng.normal(0.0, np.sqrt(2.0 / (c * 9)), size=(c, c, 3, 3))).astype(DTYPE)
    conv_b = np.zeros(c, dtype=DTYPE)
    return VrbParams(
        norm1=init_norm(f"{prefix}.norm1", c),
        norm2=init_norm(f"{prefix}.norm2", c),
        vrsm=init_vrsm(f"{prefix}.vrsm", c, heads, rng, shift_mode, scan_mode,
                       seq_mode, dilations, init_mode),
        ffn_mode=ffn_mode,
        ffn=ffn,
        conv_k=Param(f"{prefix}.conv.k", conv_k),
        conv_b=Param(f"{prefix}.conv.b", conv_b),
        use_norm=use_norm,
    )


# ---------------------------------------------------------------------------
# forward passes


def apply_shift(x, sp):
    if sp.shift_mode == "omniquad":
        return omni_quad_shift(x, sp.shift)
    if sp.shift_mode == "omnishift":
        return omni_shift(x, sp.shift)
    return qshift(x)


def wkv_scan(x, vp, sp):
    """One directional scan: shift, token mix, project, run WKV along rows.

    Returns (x_o, g_o): the scanned feature map and the untouched gate path.
    The caller passes the transposed feature map (and the vertical
    ScanParams) for the second direction.
    """
    x = as_tensor(x)
    shape = x.shape
    x_ssh = apply_shift(x, sp)
    x_ss = add(mul(x_ssh, cvec(sp.tma_x)), cvec(sp.tma_xb))

    m_r = token_mix(x, x_ssh, x_ss, sp.tma_r)
    r_s = linear_cw(m_r, vp.w_r)
    k_s = linear_cw(token_mix(x, x_ssh, x_ss, sp.tma_k), vp.w_k)
    v_s = linear_cw(token_mix(x, x_ssh, x_ss, sp.tma_v), vp.w_v)
    g_s = linear_cw(token_mix(x, x_ssh, x_ss, sp.tma_g), vp.w_g)
    # the decay logits reuse the r-mix (fifth projection row)
    ww_s = add(linear_cw(m_r, vp.w_ww), cvec(vp.ww_bias))

    seq = vp.seq_mode
    wkv_out = wkv6_recurrent(
        WkvInputs(
            nchw_to_seq(r_s, seq),
            nchw_to_seq(k_s, seq),
            nchw_to_seq(v_s, seq),
            nchw_to_seq(ww_s, seq),
            vp.u,
            vp.heads,
        )
    )
    x_o = seq_to_nchw(wkv_out, shape)
    return x_o, g_s


def wkv2d_scan(x, vp):
    """Fuse the horizontal scan (and, in 2-D mode, the vertical scan over
    the transposed map) with per-channel weights and a sigmoid gate:

        x_out = x (.) g1 + x_o1 (.) g2 + x_o2 (.) g3
        g_out = sigmoid(g_o1 (.) g4 + g_o2 (.) g5)
        y     = x_out (.) g_out
    """
    x = as_tensor(x)
    x_o1, g_o1 = wkv_scan(x, vp, vp.horizontal)
    if vp.scan_mode == "wkv2d":
        xt = transpose_hw(x)
        x_o2t, g_o2t = wkv_scan(xt, vp, vp.vertical)
        x_o2 = transpose_hw(x_o2t)
        g_o2 = transpose_hw(g_o2t)
        x_out = scale3_add([(x, vp.g1), (x_o1, vp.g2), (x_o2, vp.g3)])
        gate_pre = scale3_add([(g_o1, vp.g4), (g_o2, vp.g5)])
    else:
        x_out = scale3_add([(x, vp.g1), (x_o1, vp.g2)])
        gate_pre = scale3_add([(g_o1, vp.g4)])
    return sigmoid_gate(x_out, gate_pre)


def vrcm(x, p):
    """Channel mix: depthwise token mixer, sigmoid receptance gate over a
    squared-relu key path projected through the hidden width."""
    s = depthwise_conv2d(x, p.dw, 1)
    kk = relu_sq(linear_cw(s, p.w_k))
    val = linear_cw(linear_cw(kk, p.w_up), p.w_down)
    return sigmoid_gate(val, linear_cw(s, p.w_r))


def mlp_ffn(x, p):
    """Two channel projections with GELU between (ablation alternative)."""
    return linear_cw(gelu(linear_cw(x, p.w1)), p.w2)


def apply_ffn(x, p):
    if p.ffn_mode == "channelmix":
        return vrcm(x, p.ffn)
    return mlp_ffn(x, p.ffn)


def _maybe_norm(x, norm, use_norm):
    if not use_norm:
        return x
    return layer_norm_cw(x, norm.gamma, norm.beta)


def vrb(x, p):
    """Residual block: x + spatial mix, then + channel mix, then the block
    input plus a 3x3 convolution of the result."""
    x = as_tensor(x)
    a = add(x, wkv2d_scan(_maybe_norm(x, p.norm1, p.use_norm), p.vrsm))
    b = add(a, apply_ffn(_maybe_norm(a, p.norm2, p.use_norm), p))
    return add(x, conv2d_3x3(b, p.conv_k, p.conv_b))


def vrg(x, blocks):
    """Residual group: sequential blocks plus one group-level skip."""
    x = as_tensor(x)
    y = x
    for blk in blocks:
        y = vrb(y, blk)
    return add(x, y)
