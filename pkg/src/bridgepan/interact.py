"""Full-order feature interaction kernels and the UNet denoiser built on them.

The geometric kernel 1/(1-u) and exponential kernel exp(u) equal the infinite
sums of k-fold Hadamard powers sum_k u^(.k) and sum_k u^(.k)/k!, so a single
elementwise evaluation captures every interaction order at once. The denoiser
is a 4-stage encoder/decoder with time-conditioned residual blocks, per-stage
interaction blocks against a strided PAN feature pyramid, and interleaved
linear/standard attention; it predicts the clean latent from (z_t, z_T, P, t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError, DomainError, NumericError
from .tensor import Prng, Tensor, concat, conv2d, matmul, softmax


def interaction_space_dim(d: int, k: int) -> int:
    """Number of degree-k monomials over d features: C(d + k - 1, k), exact."""
    if d < 1 or k < 0:
        raise ConfigurationError("need d >= 1, k >= 0")
    val = math.comb(d + k - 1, k)
    if val >= 2 ** 63:
        raise NumericError(f"interaction dimension overflows 64-bit: C({d + k - 1},{k})")
    return val


def geo_kernel(u: Tensor) -> Tensor:
    """Geometric-series kernel 1/(1-u); diverges unless |u| < 1."""
    if np.max(np.abs(u.data)) >= 1.0:
        raise DomainError("geometric kernel requires |u| < 1 (series diverges)")
    return (1.0 - u).recip()


def exp_kernel(u: Tensor) -> Tensor:
    """Exponential-series kernel exp(u); factorial decay on higher orders."""
    return u.exp()


def truncated_hadamard_series(u: Tensor, order: int, kind: str) -> Tensor:
    """Explicit partial sum of Hadamard powers, the oracle for the kernels.

    kind='geo' gives sum_{k<=order} u^(.k); kind='exp' divides each term by k!.
    """
    if order < 0:
        raise ConfigurationError("order must be >= 0")
    if kind not in ("geo", "exp"):
        raise ConfigurationError(f"unknown series kind {kind!r}")
    acc = Tensor.ones(u.shape, dtype=u.dtype)
    term = Tensor.ones(u.shape, dtype=u.dtype)
    for k in range(1, order + 1):
        term = term * u
        acc = acc + (term * (1.0 / math.factorial(k)) if kind == "exp" else term)
    return acc


def sinusoidal_time_embed(t: float, dim: int) -> np.ndarray:
    """Frequency-ladder embedding; pairs (sin, cos) of t / 10000^(2i/dim)."""
    if dim % 2:
        raise ConfigurationError("time embedding dimension must be even")
    out = np.zeros(dim)
    for i in range(dim // 2):
        f = 1.0 / (10000.0 ** (2.0 * i / dim))
        out[2 * i] = math.sin(t * f)
        out[2 * i + 1] = math.cos(t * f)
    return out


@dataclass
class UNetConfig:
    """Capacity knobs of the denoiser."""

    base_channels: int = 8
    channel_mult: tuple = (1, 1, 1, 1)
    attention_kinds: tuple = ("linear", "standard", "standard", "linear")

    VARIANTS = {
        "micro": (8, (1, 1, 1, 1)),
        "t": (32, (1, 1, 1, 1)),
        "s": (64, (1, 1, 1, 1)),
        "b": (32, (1, 2, 2, 4)),
        "l": (64, (1, 2, 2, 4)),
    }

    def __post_init__(self):
        if len(self.channel_mult) != 4 or len(self.attention_kinds) != 4:
            raise ConfigurationError("channel_mult and attention_kinds need 4 entries")
        if self.base_channels < 4:
            raise ConfigurationError("base_channels must be >= 4")
        self.channel_mult = tuple(int(m) for m in self.channel_mult)

    @property
    def time_embed_dim(self) -> int:
        return 4 * self.base_channels

    @classmethod
    def variant(cls, name: str) -> "UNetConfig":
        key = name.lower()
        if key not in cls.VARIANTS:
            raise ConfigurationError(
                f"unknown variant {name!r}; choose from {sorted(cls.VARIANTS)}"
            )
        d, mult = cls.VARIANTS[key]
        return cls(base_channels=d, channel_mult=mult)


# -- functional pieces -----------------------------------------------------------


def idi_block(pan_feat: Tensor, latent_feat: Tensor, params: dict, prefix: str) -> Tensor:
    """Interaction block: kernel-modulated Hadamard fusion with a residual path.

    concat -> 1x1 mix -> two kernel branches (geometric branch pre-squashed to
    (-0.99, 0.99) by tanh so the series converges) -> Hadamard product ->
    output projection added back onto the latent features.
    """
    if pan_feat.shape[-2:] != latent_feat.shape[-2:]:
        raise DimensionError(
            f"misaligned interaction inputs: {pan_feat.shape} vs {latent_feat.shape}"
        )
    v = concat([pan_feat, latent_feat], axis=1)
    mixed = _conv(v, params, f"{prefix}.mix", pad=0)
    branch_geo = geo_kernel((_conv(mixed, params, f"{prefix}.geo", pad=0)).tanh() * 0.99)
    branch_exp = exp_kernel(_conv(mixed, params, f"{prefix}.exp", pad=0))
    fused = _conv(branch_geo * branch_exp, params, f"{prefix}.out", pad=0)
    return fused + latent_feat


def _conv(x: Tensor, params: dict, name: str, stride: int = 1, pad: int = 1) -> Tensor:
    out = conv2d(x, params[f"{name}.w"], stride=stride, pad=pad)
    b = params[f"{name}.b"]
    return out + b.reshape(b.shape[0], 1, 1)


def _linear(x: Tensor, params: dict, name: str) -> Tensor:
    return matmul(x, params[f"{name}.w"]) + params[f"{name}.b"]


def _rms_norm(x: Tensor) -> Tensor:
    """Parameter-free global RMS rescaling; stops scale compounding across
    stages (the exponential kernel otherwise overflows with depth)."""
    return x * (((x * x).mean() + 1e-6) ** -0.5)


def _res_block(x: Tensor, temb: Tensor, params: dict, prefix: str, cin: int, cout: int) -> Tensor:
    h = _conv(_rms_norm(x), params, f"{prefix}.conv1").silu()
    film = _linear(temb.reshape(1, -1), params, f"{prefix}.film").reshape(2 * cout)
    scale = film[:cout].reshape(cout, 1, 1)
    shift = film[cout:].reshape(cout, 1, 1)
    h = h * (1.0 + scale) + shift
    h = _conv(h.silu(), params, f"{prefix}.conv2")
    skip = _conv(x, params, f"{prefix}.skip", pad=0) if cin != cout else x
    return h + skip


def _tokens(x: Tensor) -> tuple[Tensor, int, int, int]:
    _, c, h, w = x.shape
    return x.reshape(c, h * w).transpose(1, 0), c, h, w


def _untokens(t: Tensor, c: int, h: int, w: int) -> Tensor:
    return t.transpose(1, 0).reshape(1, c, h, w)


def _std_attention(x: Tensor, params: dict, prefix: str) -> Tensor:
    xn = _rms_norm(x)
    q, c, h, w = _tokens(_conv(xn, params, f"{prefix}.q", pad=0))
    k, _, _, _ = _tokens(_conv(xn, params, f"{prefix}.k", pad=0))
    v, _, _, _ = _tokens(_conv(xn, params, f"{prefix}.v", pad=0))
    attn = softmax(matmul(q, k.transpose(1, 0)) * (1.0 / math.sqrt(c)), axis=-1)
    out = _untokens(matmul(attn, v), c, h, w)
    return _conv(out, params, f"{prefix}.proj", pad=0) + x


def linear_attention_weights(q: Tensor, k: Tensor) -> Tensor:
    """Materialized implicit attention of the kernelized form (testing aid).

    Rows are nonnegative and sum to 1 because the feature map elu(x)+1 is
    strictly positive.
    """
    qf, kf = q.elu1(), k.elu1()
    num = matmul(qf, kf.transpose(1, 0))
    return num / num.sum(axis=-1, keepdims=True)


def _lin_attention(x: Tensor, params: dict, prefix: str) -> Tensor:
    xn = _rms_norm(x)
    q, c, h, w = _tokens(_conv(xn, params, f"{prefix}.q", pad=0))
    k, _, _, _ = _tokens(_conv(xn, params, f"{prefix}.k", pad=0))
    v, _, _, _ = _tokens(_conv(xn, params, f"{prefix}.v", pad=0))
    qf, kf = q.elu1(), k.elu1()
    kv = matmul(kf.transpose(1, 0), v)  # (c, c)
    denom = matmul(qf, kf.sum(axis=0).reshape(c, 1))  # (hw, 1)
    out = _untokens(matmul(qf, kv) / denom, c, h, w)
    return _conv(out, params, f"{prefix}.proj", pad=0) + x


def _attention(x: Tensor, kind: str, params: dict, prefix: str) -> Tensor:
    return (_lin_attention if kind == "linear" else _std_attention)(x, params, prefix)


# -- the denoiser ------------------------------------------------------------------


class DenoiserModel:
    """Predicts the clean latent from (z_t, z_T, PAN, t)."""

    _INPUT_GAIN = 8.0  # fixed gain ahead of the head and its long skip
    _SKIP_ALPHA = 0.5  # initial passthrough fraction of the z_t block

    def __init__(self, cfg: UNetConfig | None = None, latent_channels: int = 16,
                 seed: int = 0, dtype=np.float32):
        self.cfg = cfg or UNetConfig()
        self.latent_channels = latent_channels
        self.dtype = np.dtype(dtype)
        prng = Prng(seed ^ 0x5EED)
        self.params: dict[str, Tensor] = {}

        def conv_init(name, cin, cout, k=3, zero=False, gain=1.0):
            if zero:
                w = np.zeros((cout, cin, k, k))
            else:
                limit = gain * math.sqrt(6.0 / ((cin + cout) * k * k))
                w = (prng.uniform((cout, cin, k, k)) * 2.0 - 1.0) * limit
            self.params[f"{name}.w"] = Tensor(w, requires_grad=True, dtype=self.dtype)
            self.params[f"{name}.b"] = Tensor.zeros((cout,), requires_grad=True,
                                                    dtype=self.dtype)

        def lin_init(name, din, dout):
            limit = math.sqrt(6.0 / (din + dout))
            w = (prng.uniform((din, dout)) * 2.0 - 1.0) * limit
            self.params[f"{name}.w"] = Tensor(w, requires_grad=True, dtype=self.dtype)
            self.params[f"{name}.b"] = Tensor.zeros((dout,), requires_grad=True,
                                                    dtype=self.dtype)

        d = self.cfg.base_channels
        ch = [d * m for m in self.cfg.channel_mult]
        td = self.cfg.time_embed_dim
        c_lat = latent_channels

        lin_init("time.fc1", td, td)
        lin_init("time.fc2", td, td)
        conv_init("stem", 2 * c_lat, ch[0])
        conv_init("pan.stage0", 1, ch[0])
        for i in range(1, 4):
            conv_init(f"pan.stage{i}", ch[i - 1], ch[i])
        for i in range(4):
            c = ch[i]
            conv_init(f"enc{i}.res.conv1", c, c)
            conv_init(f"enc{i}.res.conv2", c, c)
            lin_init(f"enc{i}.res.film", td, 2 * c)
            conv_init(f"enc{i}.idi.mix", 2 * c, c, k=1)
            conv_init(f"enc{i}.idi.geo", c, c, k=1)
            conv_init(f"enc{i}.idi.exp", c, c, k=1)
            conv_init(f"enc{i}.idi.out", c, c, k=1, gain=0.05)
            for nm in ("q", "k", "v", "proj"):
                conv_init(f"enc{i}.attn.{nm}", c, c, k=1)
            if i < 3:
                conv_init(f"down{i}", c, ch[i + 1])
        for i in range(2, -1, -1):
            conv_init(f"up{i}.conv", ch[i + 1], ch[i])
            conv_init(f"dec{i}.res.conv1", 2 * ch[i], ch[i])
            conv_init(f"dec{i}.res.conv2", ch[i], ch[i])
            conv_init(f"dec{i}.res.skip", 2 * ch[i], ch[i], k=1)
            lin_init(f"dec{i}.res.film", td, 2 * ch[i])
            for nm in ("q", "k", "v", "proj"):
                conv_init(f"dec{i}.attn.{nm}", ch[i], ch[i], k=1)
        conv_init("head", ch[0], c_lat, zero=True)
        # long skips into the head: a 1x1 branch from the raw (z_t, z_T) pair,
        # initialized as a partial passthrough of the z_t block so the
        # clean-latent prediction starts near the noisy input, and a zero-init
        # 1x1 lateral from the full-resolution PAN features for first-order
        # detail injection
        conv_init("head_skip", 2 * c_lat, c_lat, k=1, zero=True)
        w = self.params["head_skip.w"].data
        for j in range(c_lat):
            w[j, j, 0, 0] = self._SKIP_ALPHA / self._INPUT_GAIN
        conv_init("head_pan", ch[0], c_lat, k=1, zero=True)

    def named_parameters(self) -> dict[str, Tensor]:
        return self.params

    def forward(self, z_t: Tensor, z_T: Tensor, pan: Tensor, t: float) -> Tensor:
        """(H, W, C) latents and (H, W, 1) PAN in; predicted clean latent out."""
        if z_t.shape != z_T.shape:
            raise DimensionError(f"latent shapes differ: {z_t.shape} vs {z_T.shape}")
        h, w, c = z_t.shape
        if c != self.latent_channels:
            raise DimensionError(f"latent has {c} channels, model expects {self.latent_channels}")
        if pan.shape[:2] != (h, w):
            raise DimensionError(f"PAN dims {pan.shape[:2]} do not match latent {h}x{w}")
        if h % 8 or w % 8:
            raise DimensionError(f"spatial dims must be divisible by 8, got {h}x{w}")
        p = self.params
        cfg = self.cfg
        ch = [cfg.base_channels * m for m in cfg.channel_mult]

        temb = Tensor(sinusoidal_time_embed(float(t), cfg.time_embed_dim), dtype=self.dtype)
        temb = _linear(_linear(temb.reshape(1, -1), p, "time.fc1").silu(), p, "time.fc2").reshape(-1)

        x = concat([z_t, z_T], axis=2).transpose(2, 0, 1).reshape(1, 2 * c, h, w)
        pan_feat = _conv(pan.transpose(2, 0, 1).reshape(1, 1, h, w), p, "pan.stage0").silu()
        pan_pyramid = [_rms_norm(pan_feat)]
        for i in range(1, 4):
            pan_feat = _conv(pan_feat, p, f"pan.stage{i}", stride=2).silu()
            pan_pyramid.append(_rms_norm(pan_feat))

        hcur = _conv(x, p, "stem")
        skips = []
        for i in range(4):
            hcur = _res_block(hcur, temb, p, f"enc{i}.res", ch[i], ch[i])
            hcur = idi_block(pan_pyramid[i], _rms_norm(hcur), p, f"enc{i}.idi")
            hcur = _attention(hcur, cfg.attention_kinds[i], p, f"enc{i}.attn")
            skips.append(hcur)
            if i < 3:
                hcur = _conv(hcur, p, f"down{i}", stride=2)

        for i in range(2, -1, -1):
            hcur = _conv(hcur.nearest_upsample2d(2), p, f"up{i}.conv")
            hcur = concat([hcur, skips[i]], axis=1)
            hcur = _res_block(hcur, temb, p, f"dec{i}.res", 2 * ch[i], ch[i])
            hcur = _attention(hcur, cfg.attention_kinds[i], p, f"dec{i}.attn")

        # fixed input gains keep the weight magnitudes the zero-init head and
        # its long skips must reach within a short-horizon Adam budget
        out = _conv(_rms_norm(hcur) * self._INPUT_GAIN, p, "head")
        out = out + _conv(x * self._INPUT_GAIN, p, "head_skip", pad=0)
        out = out + _conv(pan_pyramid[0] * self._INPUT_GAIN, p, "head_pan", pad=0)
        return out.reshape(c, h, w).transpose(1, 2, 0)
