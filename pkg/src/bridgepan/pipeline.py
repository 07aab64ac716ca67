"""End-to-end training and guided sampling.

Training follows the coupled-loss recipe: one mapping tensor per image per
step projects both endpoints, a random bridge time is noised with the
closed-form marginal, the denoiser predicts the clean latent, and Adam steps
the joint loss (latent L1 + image L1 + gamma * load balance). Sampling walks
the reverse grid with the clean-latent prediction mode and optional
measurement-consistency guidance, then unprojects and clamps to [0, 1].
"""

from __future__ import annotations

import json
import os
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .bridge import (
    BridgeSchedule,
    bps_guidance,
    build_schedule,
    make_degrade_op,
    reverse_step_eps,
    reverse_step_z0,
    reverse_time_grid,
)
from .errors import ConfigurationError, ContractViolation, DimensionError, FormatError
from .interact import DenoiserModel, UNetConfig
from .raster import Raster, WaldPair, upsample_bicubic
from .spectral import (
    MappingTensor,
    MiTConfig,
    RouterState,
    SpectralProjector,
    load_balance_loss,
    project,
    unproject,
)
from .tensor import Prng, Tensor

_CKPT_FORMAT = "bridgepan-ckpt"


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch: int = 4
    steps: int = 500
    gamma: float = 0.001
    t_steps: int = 1000
    lam: float = 0.001
    theta0: float = 1.0
    variant: str = "micro"
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.gamma < 0 or self.batch < 1:
            raise ConfigurationError("need lr > 0, gamma >= 0, batch >= 1")


@dataclass
class SampleConfig:
    nfe: int = 3
    eta: float = 0.0
    mode: str = "state"  # guidance target: z0 | eps | state

    def __post_init__(self):
        if self.nfe < 1 or self.eta < 0:
            raise ConfigurationError("need nfe >= 1 and eta >= 0")
        if self.mode not in ("z0", "eps", "state"):
            raise ConfigurationError(f"unknown guidance mode {self.mode!r}")


# -- losses --------------------------------------------------------------------


def loss_ref(z0_hat: Tensor, y: Tensor, mt: MappingTensor) -> Tensor:
    """Cross-domain L1: mean |z0_hat - project(y)| + mean |unproject(z0_hat) - y|."""
    if z0_hat.shape[:2] != y.shape[:2]:
        raise DimensionError(f"latent {z0_hat.shape} vs reference {y.shape}")
    latent_term = (z0_hat - project(y, mt)).abs().mean()
    image_term = (unproject(z0_hat, mt) - y).abs().mean()
    return latent_term + image_term


def loss_total(z0_hat: Tensor, y: Tensor, mt: MappingTensor, rs: RouterState,
               gamma: float) -> Tensor:
    if gamma < 0:
        raise ConfigurationError("gamma must be >= 0")
    return loss_ref(z0_hat, y, mt) + gamma * load_balance_loss(rs)


# -- optimizer -----------------------------------------------------------------


class Adam:
    """Adam with beta = (0.9, 0.999), eps = 1e-8; no warmup or decay."""

    def __init__(self, params: dict, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad.astype(np.float64)
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            update = (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)
            p.data = (p.data - self.lr * update).astype(p.dtype)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


# -- the bundled model ------------------------------------------------------------


class FusionModel:
    """Spectral projector + denoiser + schedule under one checkpointable roof."""

    def __init__(self, variant: str = "micro", mit_cfg: MiTConfig | None = None,
                 seed: int = 0, dtype=np.float32):
        self.variant = variant
        self.mit_cfg = mit_cfg or MiTConfig()
        self.projector = SpectralProjector(self.mit_cfg, seed=seed, dtype=dtype)
        self.denoiser = DenoiserModel(UNetConfig.variant(variant),
                                      latent_channels=self.mit_cfg.latent_channels,
                                      seed=seed, dtype=dtype)
        self.seed = seed
        self.trained_steps = 0

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for k, v in self.projector.named_parameters().items():
            out[f"mit.{k}"] = v
        for k, v in self.denoiser.named_parameters().items():
            out[f"unet.{k}"] = v
        return out

    def save(self, path: str) -> None:
        params = self.named_parameters()
        manifest = {
            "format": _CKPT_FORMAT,
            "version": 1,
            "variant": self.variant,
            "seed": self.seed,
            "trained_steps": self.trained_steps,
            "mit": {
                "patch_size": self.mit_cfg.patch_size,
                "latent_channels": self.mit_cfg.latent_channels,
                "expert_count": self.mit_cfg.expert_count,
                "expert_hidden_dim": self.mit_cfg.expert_hidden_dim,
                "attention_layers": self.mit_cfg.attention_layers,
                "max_bands": self.mit_cfg.max_bands,
            },
            "params": [{"name": k, "shape": list(v.shape)} for k, v in params.items()],
        }
        tmp = f"{path}.tmp.{os.getpid()}"
        with open(tmp, "wb") as fh:
            fh.write(json.dumps(manifest, separators=(",", ":")).encode("utf-8"))
            fh.write(b"\n")
            for v in params.values():
                fh.write(np.ascontiguousarray(v.data, dtype="<f4").tobytes())
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str) -> "FusionModel":
        with open(path, "rb") as fh:
            raw = fh.read()
        nl = raw.find(b"\n")
        if nl < 0:
            raise FormatError("missing checkpoint manifest", byte_offset=0)
        try:
            manifest = json.loads(raw[:nl].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"unparseable manifest: {exc}", byte_offset=0) from None
        if manifest.get("format") != _CKPT_FORMAT:
            raise FormatError(f"bad checkpoint format {manifest.get('format')!r}")
        model = cls(variant=manifest["variant"], mit_cfg=MiTConfig(**manifest["mit"]),
                    seed=manifest.get("seed", 0))
        model.trained_steps = int(manifest.get("trained_steps", 0))
        params = model.named_parameters()
        offset = nl + 1
        for entry in manifest["params"]:
            name, shape = entry["name"], tuple(entry["shape"])
            if name not in params:
                raise FormatError(f"unknown parameter {name!r} in checkpoint")
            n = int(np.prod(shape)) if shape else 1
            blob = raw[offset : offset + 4 * n]
            if len(blob) != 4 * n:
                raise FormatError("truncated checkpoint payload", byte_offset=offset)
            params[name].data = np.frombuffer(blob, dtype="<f4").reshape(shape).copy()
            offset += 4 * n
        if offset != len(raw):
            raise FormatError("trailing bytes after parameters", byte_offset=offset)
        return model


# -- training ----------------------------------------------------------------------


def _ratio_of(pair: WaldPair) -> int:
    return pair.ratio


def _to_hwc_tensor(r: Raster, dtype=np.float32) -> Tensor:
    return Tensor(r.hwc(), dtype=dtype)


def train_step(samples: list[WaldPair], model: FusionModel, sched: BridgeSchedule,
               cfg: TrainConfig, prng: Prng, adam: Adam) -> dict:
    """One optimization step over a batch of reduced-scale triples (Alg-style:
    project both endpoints with one mapping tensor, noise a random time,
    denoise, and descend the coupled loss)."""
    total = None
    ref_sum = 0.0
    aux_sum = 0.0
    for pair in samples:
        ratio = _ratio_of(pair)
        if pair.pan_reduced.height != pair.ms_reduced.height * ratio:
            raise ContractViolation("ms must be at 1/ratio of pan resolution")
        x_up = _to_hwc_tensor(upsample_bicubic(pair.ms_reduced, ratio))
        ref = _to_hwc_tensor(pair.reference)
        pan = _to_hwc_tensor(pair.pan_reduced)
        mt, rs = model.projector.mapping(x_up)
        z_T = project(x_up, mt)
        z_0 = project(ref, mt)
        t = prng.randint(1, sched.steps + 1)
        eps = Tensor(prng.gaussian(z_0.shape))
        z_t = z_T + (z_0 - z_T) * float(sched.Theta[t]) + eps * float(sched.Sigma[t])
        z0_hat = model.denoiser.forward(z_t, z_T, pan, t)
        l_ref = loss_ref(z0_hat, ref, mt)
        l_aux = load_balance_loss(rs)
        li = l_ref + cfg.gamma * l_aux
        ref_sum += l_ref.item()
        aux_sum += l_aux.item()
        total = li if total is None else total + li
    loss = total * (1.0 / len(samples))
    adam.zero_grad()
    loss.backward()
    adam.step()
    return {
        "loss_ref": ref_sum / len(samples),
        "loss_aux": aux_sum / len(samples),
        "loss_total": loss.item(),
    }


def train(dataset: list[WaldPair], model: FusionModel, cfg: TrainConfig,
          log_path: str | None = None) -> list[dict]:
    """Run cfg.steps optimization steps over the dataset; returns the history.

    Deterministic for a fixed cfg.seed and single thread: batch selection,
    bridge times, and noise all come from one counter-based stream.
    """
    if not dataset:
        raise ConfigurationError("training dataset is empty")
    sched = build_schedule(cfg.t_steps, cfg.lam, cfg.theta0)
    prng = Prng(cfg.seed)
    adam = Adam(model.named_parameters(), lr=cfg.lr)
    history = []
    rows = []
    for step in range(cfg.steps):
        t0 = time.perf_counter()
        batch = [dataset[prng.randint(0, len(dataset))] for _ in range(cfg.batch)]
        rec = train_step(batch, model, sched, cfg, prng, adam)
        rec["step"] = step + 1
        rec["wall_ms"] = (time.perf_counter() - t0) * 1000.0
        history.append(rec)
        rows.append(rec)
    model.trained_steps += cfg.steps
    if log_path is not None:
        tmp = f"{log_path}.tmp.{os.getpid()}"
        with open(tmp, "w") as fh:
            fh.write("step,loss_ref,loss_aux,loss_total,wall_ms\n")
            for rec in rows:
                fh.write(
                    f"{rec['step']},{rec['loss_ref']:.8f},{rec['loss_aux']:.8f},"
                    f"{rec['loss_total']:.8f},{rec['wall_ms']:.3f}\n"
                )
        os.replace(tmp, log_path)
    return history


# -- sampling ---------------------------------------------------------------------


def sample(ms: Raster, pan: Raster, model: FusionModel, scfg: SampleConfig,
           sched: BridgeSchedule | None = None,
           oracle_ref: Raster | None = None) -> Raster:
    """Fuse one MS/PAN pair by reverse bridge sampling (clean-latent mode).

    With `oracle_ref` the denoiser is bypassed and the projected reference is
    used as the prediction each step (pipeline verification). Guidance runs
    when scfg.eta > 0: mode 'z0' corrects the prediction, 'eps' the implied
    noise, 'state' the stepped latent. Output bands equal the input MS bands,
    clamped to [0, 1].
    """
    if ms.bands > model.mit_cfg.latent_channels:
        raise ConfigurationError(
            f"{ms.bands} bands exceed latent capacity {model.mit_cfg.latent_channels}"
        )
    if pan.height % ms.height or pan.width % ms.width:
        raise DimensionError("pan dims must be integer multiples of ms dims")
    ratio = pan.height // ms.height
    if pan.width != ms.width * ratio:
        raise DimensionError("inconsistent pan/ms aspect ratio")
    if model.trained_steps == 0 and oracle_ref is None:
        warnings.warn("sampling from an untrained model; output will be the "
                      "projected upsample refined by an identity-free denoiser")
    sched = sched or build_schedule(1000)

    x_up = _to_hwc_tensor(upsample_bicubic(ms, ratio))
    pan_t = _to_hwc_tensor(pan)
    mt, _ = model.projector.mapping(x_up)
    z_T = project(x_up, mt).data
    oracle_pred = None
    if oracle_ref is not None:
        oracle_pred = project(_to_hwc_tensor(oracle_ref), mt).data

    degrade_op = make_degrade_op(pan.height, pan.width, ratio)
    grid = reverse_time_grid(sched, scfg.nfe)
    z = z_T.copy()
    for i, t in enumerate(grid):
        t_prev = grid[i + 1] if i + 1 < len(grid) else 0
        if scfg.eta == 0.0:
            if oracle_pred is not None:
                z0_hat = oracle_pred
            else:
                z0_hat = model.denoiser.forward(
                    Tensor(z), Tensor(z_T), pan_t, t
                ).data
            z = reverse_step_z0(z, z_T, z0_hat, t, sched, t_prev=t_prev)
            continue
        z_leaf = Tensor(z, requires_grad=True)
        if oracle_pred is not None:
            z0_hat_t = z_leaf * 0.0 + Tensor(oracle_pred)
        else:
            z0_hat_t = model.denoiser.forward(z_leaf, Tensor(z_T), pan_t, t)
        if scfg.mode == "z0":
            corrected = bps_guidance(z_leaf, z_T, z0_hat_t, mt, degrade_op,
                                     scfg.eta, mode="z0")
            z = reverse_step_z0(z, z_T, corrected, t, sched, t_prev=t_prev)
        elif scfg.mode == "eps":
            if sched.Theta[t] == 0.0:
                # noise prediction is undefined at the terminal index
                z = reverse_step_z0(z, z_T, z0_hat_t.data, t, sched, t_prev=t_prev)
            else:
                eps_hat = (z - z_T - sched.Theta[t] * (z0_hat_t.data - z_T)) / sched.Sigma[t]
                corrected = bps_guidance(z_leaf, z_T, z0_hat_t, mt, degrade_op,
                                         scfg.eta, mode="eps", prediction=eps_hat)
                if t_prev == 0:
                    implied_z0 = z_T + (z - z_T - sched.Sigma[t] * corrected) / sched.Theta[t]
                    z = implied_z0
                else:
                    z = reverse_step_eps(z, z_T, corrected, t, sched, t_prev=t_prev)
        else:  # state
            stepped = reverse_step_z0(z, z_T, z0_hat_t.data, t, sched, t_prev=t_prev)
            z = bps_guidance(z_leaf, z_T, z0_hat_t, mt, degrade_op, scfg.eta,
                             mode="state", prediction=stepped)

    fused = unproject(Tensor(z.astype(np.float32)), mt).data
    planar = np.moveaxis(np.clip(fused, 0.0, 1.0), -1, 0)
    return Raster(planar, list(ms.band_names))
