"""Band-agnostic spectral projection via routed experts.

An upsampled multi-band image is patchified band-wise, summarized by
attention pooling, and routed to a per-band subset of experts whose outputs
form the rows of a reversible mapping tensor T (B x C, leading B x B block
pinned to the identity). T projects any B-band image into a fixed C-channel
latent space; its right inverse T* = T^T (T T^T)^-1 projects back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError
from .tensor import Prng, Tensor, concat, mat_inverse, matmul, softmax


@dataclass
class MiTConfig:
    """Shape hyper-parameters of the spectral projector."""

    patch_size: int = 8
    latent_channels: int = 16
    expert_count: int = 16
    expert_hidden_dim: int = 64
    attention_layers: int = 2
    max_bands: int = 10

    @property
    def embed_dim(self) -> int:
        return self.patch_size * self.patch_size

    def __post_init__(self):
        if self.latent_channels < self.max_bands:
            raise ConfigurationError(
                f"latent_channels {self.latent_channels} < max_bands {self.max_bands}"
            )
        if self.expert_count < self.max_bands:
            raise ConfigurationError(
                f"expert_count {self.expert_count} < max_bands {self.max_bands}"
            )


@dataclass
class MappingTensor:
    """Reversible spectral basis: T (B x C) and its right inverse T* (C x B)."""

    T: Tensor
    T_star: Tensor
    selected_experts: list[int]
    gate_probs: Tensor  # length-L, sums to 1

    @property
    def bands(self) -> int:
        return self.T.shape[0]

    @property
    def channels(self) -> int:
        return self.T.shape[1]


@dataclass
class RouterState:
    """Per-expert routing statistics for the load-balance penalty."""

    gate_mean: Tensor  # length-L mean gate probability (on tape)
    routed_fraction: np.ndarray  # length-L fraction of routed slots (constant)

    def __post_init__(self):
        f = np.asarray(self.routed_fraction, dtype=np.float64)
        if f.min() < 0 or abs(f.sum() - 1.0) > 1e-6:
            raise ConfigurationError("routed_fraction must be a distribution")


def sinusoidal_position_2d(grid_h: int, grid_w: int, dim: int) -> np.ndarray:
    """Fixed 2-d positional code over the patch grid; half of dim per axis."""
    half = dim // 2

    def ladder(pos, d):
        out = np.zeros((len(pos), d))
        for i in range(d // 2):
            f = 1.0 / (10000.0 ** (2.0 * i / d))
            out[:, 2 * i] = np.sin(pos * f)
            out[:, 2 * i + 1] = np.cos(pos * f)
        return out

    ys = np.repeat(np.arange(grid_h), grid_w).astype(np.float64)
    xs = np.tile(np.arange(grid_w), grid_h).astype(np.float64)
    enc = np.concatenate([ladder(ys, half), ladder(xs, dim - half)], axis=1)
    return enc


# -- functional ops -------------------------------------------------------------


def patch_embed(x_up: Tensor, cfg: MiTConfig, weight: Tensor, bias: Tensor,
                band_embed: Tensor) -> Tensor:
    """Band-wise patchify, flatten, affine-map, and add positional codes.

    Returns (N, p^2) with N = B * (H/p) * (W/p); patches are ordered
    band-major, then row-major over the patch grid.
    """
    h, w, b = x_up.shape
    p = cfg.patch_size
    if h % p or w % p:
        raise DimensionError(f"patch size {p} does not divide image dims {h}x{w}")
    gh, gw = h // p, w // p
    patches = (
        x_up.transpose(2, 0, 1)
        .reshape(b, gh, p, gw, p)
        .transpose(0, 1, 3, 2, 4)
        .reshape(b * gh * gw, p * p)
    )
    emb = matmul(patches, weight) + bias
    pos = Tensor(
        np.tile(sinusoidal_position_2d(gh, gw, p * p), (b, 1)), dtype=x_up.dtype
    )
    slots = band_embed[:b].reshape(b, 1, p * p)
    emb = (emb + pos).reshape(b, gh * gw, p * p) + slots
    return emb.reshape(b * gh * gw, p * p)


def self_attention(e: Tensor, layers: int = 1) -> Tensor:
    """Parameter-free token mixing: softmax(E E^T / sqrt(d)) E per layer."""
    d = e.shape[-1]
    scale = 1.0 / math.sqrt(d)
    for _ in range(layers):
        attn = softmax(matmul(e, e.transpose(1, 0)) * scale, axis=-1)
        e = matmul(attn, e)
    return e


def attention_pool(h: Tensor, q: Tensor) -> Tensor:
    """Query-cached pooling: replicate q over rows, cross-attend, sum rows."""
    n, d = h.shape
    big_q = Tensor.zeros((n, 1), dtype=h.dtype) + q.reshape(1, d)
    attn = softmax(matmul(big_q, h.transpose(1, 0)) * (1.0 / math.sqrt(d)), axis=-1)
    pooled = big_q + matmul(attn, h)
    return pooled.sum(axis=0)


def route(h_p: Tensor, b: int, router_params: dict) -> tuple[list[int], Tensor]:
    """Score all experts, return the top-b indices and the full softmax vector.

    Selection lists indices in descending probability, ties broken by
    ascending expert index; it is hard (non-differentiable) by design.
    """
    hidden = (matmul(h_p.reshape(1, -1), router_params["w1"]) + router_params["b1"]).tanh()
    logits = matmul(hidden, router_params["w2"]) + router_params["b2"]
    probs = softmax(logits.reshape(-1), axis=-1)
    l = probs.shape[0]
    if b > l:
        raise ConfigurationError(f"cannot select top-{b} of {l} experts")
    order = np.lexsort((np.arange(l), -probs.data.astype(np.float64)))
    return [int(i) for i in order[:b]], probs


def _expert_forward(h_p: Tensor, ep: dict) -> Tensor:
    """Two-layer gated perceptron producing one spectral basis row (1, C)."""
    x = h_p.reshape(1, -1)
    gate = (matmul(x, ep["gate_w"]) + ep["gate_b"]).tanh()
    value = matmul(x, ep["value_w"]) + ep["value_b"]
    return matmul(gate * value, ep["out_w"]) + ep["out_b"]


def build_mapping_tensor(h_p: Tensor, selected: list[int], experts: list[dict],
                         b: int, c: int) -> MappingTensor:
    """Assemble T from expert rows; normalize, pin the identity block, invert.

    Rows with L2 norm below 1e-8 fall back to the canonical unit vector of
    their own slot, which the identity overwrite then subsumes (so degenerate
    experts contribute an all-zero right block); full row rank is preserved.
    """
    if len(selected) != b or len(set(selected)) != b:
        raise ConfigurationError("selected experts must be b distinct indices")
    rows = []
    for slot in range(b):
        row = _expert_forward(h_p, experts[selected[slot]])
        norm = float(np.sqrt(np.sum(row.data.astype(np.float64) ** 2)))
        if norm < 1e-8:
            unit = np.zeros((1, c), dtype=np.float64)
            unit[0, slot] = 1.0
            rows.append(Tensor(unit, dtype=h_p.dtype))
        else:
            rows.append(row / (row * row).sum(axis=1, keepdims=True).sqrt())
    full = concat(rows, axis=0)
    ident = Tensor(np.eye(b), dtype=h_p.dtype)
    t = concat([ident, full[:, b:]], axis=1) if c > b else ident
    gram = matmul(t, t.transpose(1, 0))
    t_star = matmul(t.transpose(1, 0), mat_inverse(gram))
    return MappingTensor(T=t, T_star=t_star, selected_experts=list(selected),
                         gate_probs=Tensor(np.zeros(len(experts)), dtype=h_p.dtype))


def project(x_up: Tensor, mt: MappingTensor) -> Tensor:
    """Per-pixel contraction over the band axis: (H, W, B) -> (H, W, C)."""
    if x_up.shape[-1] != mt.bands:
        raise DimensionError(
            f"image has {x_up.shape[-1]} bands, mapping tensor expects {mt.bands}"
        )
    return matmul(x_up, mt.T)


def unproject(z: Tensor, mt: MappingTensor) -> Tensor:
    """Inverse projection via the right inverse: (H, W, C) -> (H, W, B)."""
    if z.shape[-1] != mt.channels:
        raise DimensionError(
            f"latent has {z.shape[-1]} channels, mapping tensor expects {mt.channels}"
        )
    return matmul(z, mt.T_star)


def load_balance_loss(rs: RouterState) -> Tensor:
    """Sum_k P_k * f_k; 1/L at uniform routing, 1 at full collapse."""
    return (rs.gate_mean * Tensor(rs.routed_fraction, dtype=rs.gate_mean.dtype)).sum()


# -- the bundled model -----------------------------------------------------------


class SpectralProjector:
    """Owns the patch embedding, pooling query, router, and expert bank."""

    def __init__(self, cfg: MiTConfig | None = None, seed: int = 0,
                 dtype=np.float32):
        self.cfg = cfg or MiTConfig()
        self.dtype = np.dtype(dtype)
        prng = Prng(seed)
        d = self.cfg.embed_dim
        hid = self.cfg.expert_hidden_dim
        c = self.cfg.latent_channels
        l = self.cfg.expert_count

        def glorot(*shape):
            limit = math.sqrt(6.0 / (shape[0] + shape[-1]))
            vals = (prng.uniform(shape) * 2.0 - 1.0) * limit
            return Tensor(vals, requires_grad=True, dtype=self.dtype)

        def zeros(*shape):
            return Tensor.zeros(shape, requires_grad=True, dtype=self.dtype)

        self.params: dict[str, Tensor] = {}
        p = self.params
        p["embed.weight"] = glorot(d, d)
        p["embed.bias"] = zeros(d)
        p["embed.band"] = glorot(self.cfg.max_bands, d)
        p["pool.query"] = glorot(1, d).reshape(d)
        p["router.w1"] = glorot(d, hid)
        p["router.b1"] = zeros(hid)
        p["router.w2"] = glorot(hid, l)
        p["router.b2"] = zeros(l)
        for k in range(l):
            p[f"expert{k}.gate_w"] = glorot(d, hid)
            p[f"expert{k}.gate_b"] = zeros(hid)
            p[f"expert{k}.value_w"] = glorot(d, hid)
            p[f"expert{k}.value_b"] = zeros(hid)
            p[f"expert{k}.out_w"] = glorot(hid, c)
            p[f"expert{k}.out_b"] = zeros(c)

    def named_parameters(self) -> dict[str, Tensor]:
        return self.params

    def _router_params(self) -> dict:
        return {k: self.params[f"router.{k}"] for k in ("w1", "b1", "w2", "b2")}

    def _experts(self) -> list[dict]:
        out = []
        for k in range(self.cfg.expert_count):
            out.append({
                name: self.params[f"expert{k}.{name}"]
                for name in ("gate_w", "gate_b", "value_w", "value_b", "out_w", "out_b")
            })
        return out

    def pooled_descriptor(self, x_up: Tensor) -> Tensor:
        emb = patch_embed(x_up, self.cfg, self.params["embed.weight"],
                          self.params["embed.bias"], self.params["embed.band"])
        hidden = self_attention(emb, layers=self.cfg.attention_layers)
        return attention_pool(hidden, self.params["pool.query"])

    def mapping(self, x_up: Tensor) -> tuple[MappingTensor, RouterState]:
        """Full pipeline: descriptor, routing, mapping-tensor assembly."""
        b = x_up.shape[-1]
        if b > self.cfg.max_bands:
            raise ConfigurationError(
                f"{b} bands exceeds supported maximum {self.cfg.max_bands}"
            )
        h_p = self.pooled_descriptor(x_up)
        selected, probs = route(h_p, b, self._router_params())
        mt = build_mapping_tensor(h_p, selected, self._experts(), b,
                                  self.cfg.latent_channels)
        mt.gate_probs = probs
        fractions = np.zeros(self.cfg.expert_count)
        fractions[selected] = 1.0 / b
        rs = RouterState(gate_mean=probs, routed_fraction=fractions)
        return mt, rs
