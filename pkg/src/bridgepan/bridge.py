"""Latent diffusion bridge: schedule tables, closed-form forward sampling,
deterministic reverse steps in both prediction modes, SDE simulation for
verification, and measurement-consistency guidance.

Time is normalized to [0, 1] and discretized into `steps` intervals; the rate
schedule is constant (theta_t = theta0), which keeps the cumulative integrals
closed-form. Tables are float64 and immutable after construction; samplers
operate on plain numpy arrays, guidance on tape tensors.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractViolation
from .spectral import MappingTensor, project, unproject
from .tensor import Tensor


@dataclass(frozen=True)
class BridgeSchedule:
    """Discretized bridge coefficient tables over indices 0..steps."""

    steps: int
    lam: float
    theta0: float
    theta: np.ndarray  # rate at each index (constant schedule)
    theta_bar: np.ndarray  # cumulative integral from 0 to t
    Theta: np.ndarray  # mean-interpolation coefficient, 1 at t=0, 0 at t=T
    Sigma: np.ndarray  # marginal standard deviation, 0 at both endpoints


def build_schedule(steps: int, lam: float = 0.001, theta0: float = 1.0) -> BridgeSchedule:
    """Tabulate Theta_t and Sigma_t for a constant-rate bridge.

    Theta_t = sinh(theta0 (1 - t/T)) / sinh(theta0) and
    Sigma_t^2 = 2 lam sinh(theta0 t/T) sinh(theta0 (1 - t/T)) / sinh(theta0);
    the endpoint identities Theta_0 = 1, Theta_T = 0, Sigma_0 = Sigma_T = 0
    hold to machine precision because sinh(0) is exactly 0.
    """
    if steps < 1 or lam <= 0 or theta0 <= 0:
        raise ConfigurationError("need steps >= 1, lam > 0, theta0 > 0")
    tau = np.arange(steps + 1, dtype=np.float64) / steps
    bar_0t = theta0 * tau
    bar_tT = theta0 * (1.0 - tau)
    denom = math.sinh(theta0)
    big_theta = np.sinh(bar_tT) / denom
    sigma = np.sqrt(2.0 * lam * np.sinh(bar_0t) * np.sinh(bar_tT) / denom)
    return BridgeSchedule(
        steps=steps,
        lam=float(lam),
        theta0=float(theta0),
        theta=np.full(steps + 1, float(theta0)),
        theta_bar=bar_0t,
        Theta=big_theta,
        Sigma=sigma,
    )


def dump_schedule_csv(sched: BridgeSchedule, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "theta", "theta_bar", "Theta", "Sigma"])
        for t in range(sched.steps + 1):
            writer.writerow(
                [t, repr(float(sched.theta[t])), repr(float(sched.theta_bar[t])),
                 repr(float(sched.Theta[t])), repr(float(sched.Sigma[t]))]
            )


def forward_sample(z0: np.ndarray, zT: np.ndarray, t: int, sched: BridgeSchedule,
                   prng) -> np.ndarray:
    """Draw z_t ~ N(zT + (z0 - zT) Theta_t, Sigma_t^2 I); exact at endpoints."""
    if not 0 <= t <= sched.steps:
        raise ContractViolation(f"t={t} outside schedule 0..{sched.steps}")
    if t == 0:
        return np.array(z0, copy=True)
    if t == sched.steps:
        return np.array(zT, copy=True)
    eps = prng.gaussian(np.shape(z0), dtype=np.asarray(z0).dtype)
    return zT + (z0 - zT) * sched.Theta[t] + sched.Sigma[t] * eps


def simulate_sde(z0: np.ndarray, zT: np.ndarray, sched: BridgeSchedule,
                 n_substeps: int, prng, noise_scale: float = 1.0) -> np.ndarray:
    """Euler-Maruyama integration of the bridge SDE from z0 at t=0.

    dz = theta coth(theta_bar_{t:T}) (zT - z) dt + sqrt(2 lam theta) dw.
    Returns states at every grid time, shape (n_substeps + 1, *z0.shape).
    Verification aid only: its marginals should match the closed form.
    `noise_scale=0` recovers the deterministic drift ODE.
    """
    if n_substeps < sched.steps:
        raise ContractViolation("n_substeps must be >= schedule steps")
    z0 = np.asarray(z0, dtype=np.float64)
    zT = np.asarray(zT, dtype=np.float64)
    dt = 1.0 / n_substeps
    theta0 = sched.theta0
    diff = math.sqrt(2.0 * sched.lam * theta0 * dt) * noise_scale
    traj = np.empty((n_substeps + 1,) + z0.shape, dtype=np.float64)
    traj[0] = z0
    z = z0.copy()
    for i in range(n_substeps):
        tau = i * dt
        drift = theta0 / math.tanh(theta0 * (1.0 - tau)) * (zT - z)
        z = z + drift * dt
        if noise_scale != 0.0:
            z = z + diff * prng.gaussian(z.shape, dtype=np.float64)
        traj[i + 1] = z
    return traj


def reverse_step_z0(z_t: np.ndarray, zT: np.ndarray, z0_hat: np.ndarray, t: int,
                    sched: BridgeSchedule, t_prev: int | None = None) -> np.ndarray:
    """Deterministic reverse step using the predicted clean latent.

    z_prev = zT + (S_p/S_t)(z_t - zT) + (Th_p - Th_t S_p/S_t)(z0_hat - zT),
    with the ratio S_p/S_t defined as 0 where S_t = 0 (the t=T start).
    Steps may span non-adjacent indices (t_prev defaults to t-1); a step to
    index 0 returns z0_hat exactly.
    """
    if not 1 <= t <= sched.steps:
        raise ContractViolation(f"t={t} outside 1..{sched.steps}")
    tp = t - 1 if t_prev is None else t_prev
    if not 0 <= tp < t:
        raise ContractViolation(f"t_prev={tp} must lie in [0, {t})")
    if tp == 0:
        return np.array(z0_hat, copy=True)
    ratio = 0.0 if sched.Sigma[t] == 0.0 else sched.Sigma[tp] / sched.Sigma[t]
    coef = sched.Theta[tp] - sched.Theta[t] * ratio
    return zT + ratio * (z_t - zT) + coef * (z0_hat - zT)


def reverse_step_eps(z_t: np.ndarray, zT: np.ndarray, eps_hat: np.ndarray, t: int,
                     sched: BridgeSchedule, t_prev: int | None = None) -> np.ndarray:
    """Equivalent reverse step using the predicted noise; needs Theta_t > 0."""
    if not 1 <= t <= sched.steps:
        raise ContractViolation(f"t={t} outside 1..{sched.steps}")
    if sched.Theta[t] == 0.0:
        raise ContractViolation("Theta_t = 0 at t=T: use reverse_step_z0 instead")
    tp = t - 1 if t_prev is None else t_prev
    if not 0 <= tp < t:
        raise ContractViolation(f"t_prev={tp} must lie in [0, {t})")
    ratio = sched.Theta[tp] / sched.Theta[t]
    return zT + ratio * (z_t - zT) - (ratio * sched.Sigma[t] - sched.Sigma[tp]) * eps_hat


def reverse_time_grid(sched: BridgeSchedule, nfe: int) -> list[int]:
    """Descending schedule indices {T, T(k-1)/k, ..., T/k} for k reverse steps."""
    if nfe < 1:
        raise ConfigurationError("nfe must be >= 1")
    idx = [int(round(sched.steps * i / nfe)) for i in range(nfe, 0, -1)]
    out = []
    for v in idx:
        v = max(1, min(sched.steps, v))
        if not out or v < out[-1]:
            out.append(v)
    return out


def measurement_residual(z0_hat: Tensor, z_T_obs: np.ndarray, mt: MappingTensor,
                         degrade_op) -> Tensor:
    """R = || z_T - project(degrade(unproject(z0_hat))) ||_2 on the tape."""
    y_hat = unproject(z0_hat, mt)
    z_back = project(degrade_op(y_hat), mt)
    return (Tensor(z_T_obs, dtype=z0_hat.dtype) - z_back).l2norm()


def bps_guidance(z_t: Tensor, z_T_obs: np.ndarray, z0_hat: Tensor,
                 mt: MappingTensor, degrade_op, eta: float, mode: str = "z0",
                 prediction: np.ndarray | None = None) -> np.ndarray:
    """Measurement-consistency correction for one reverse step.

    Computes g = grad wrt z_t of the residual R and steps the chosen quantity
    against it (eta >= 0 scales the pull toward consistency; eta absorbs the
    1/sigma^2 of the Gaussian measurement model, so the applied update is the
    descent direction on R). `mode` selects what g is added to: the clean
    prediction (`z0`), the noise prediction (`eps`, pass it via `prediction`),
    or the next state (`state`, pass z_prev via `prediction`). eta = 0 returns
    the input bit-identically. The gradient of the norm at an exactly
    consistent prediction (R = 0) is taken to be 0.
    """
    if mode not in ("z0", "eps", "state"):
        raise ConfigurationError(f"unknown guidance mode {mode!r}")
    target = z0_hat.data if prediction is None else (
        prediction.data if isinstance(prediction, Tensor) else np.asarray(prediction)
    )
    if eta == 0.0:
        return np.array(target, copy=True)
    if not z0_hat.requires_grad or not z_t.requires_grad:
        raise ContractViolation("guidance needs z0_hat reachable from z_t on an intact tape")
    r = measurement_residual(z0_hat, z_T_obs, mt, degrade_op)
    r.backward()
    if z_t.grad is None:
        raise ContractViolation("tape is detached: z_t received no gradient")
    return target - eta * z_t.grad


def make_degrade_op(height: int, width: int, ratio: int, dtype=np.float32):
    """Differentiable Wald-family degradation at PAN resolution.

    Returns a Tensor -> Tensor closure mapping (H, W, B) through blur+decimate
    by `ratio` and bicubic re-upsampling, built from the same operator
    matrices as the raster-space pipeline.
    """
    from .raster import degrade_upsample_matrices
    from .tensor import matmul

    mr, mc = degrade_upsample_matrices(height, width, ratio)
    row = Tensor(mr, dtype=dtype)
    col_t = Tensor(mc.T, dtype=dtype)

    def op(y: Tensor) -> Tensor:
        bhw = y.transpose(2, 0, 1)
        out = matmul(matmul(row, bhw), col_t)
        return out.transpose(1, 2, 0)

    return op


def jensen_gap_bound(sigma: float, m_dist: float, grad_norm: float, d: int) -> float:
    """Closed-form bound d/sqrt(2 pi sigma^2) exp(-1/(2 sigma^2)) grad_norm M.

    Vanishes in both limits sigma -> 0 (returned directly as the limit value)
    and sigma -> infinity.
    """
    if sigma < 0 or m_dist < 0 or grad_norm < 0 or d < 1:
        raise ConfigurationError("invalid jensen bound arguments")
    if sigma == 0.0:
        return 0.0
    return d / math.sqrt(2.0 * math.pi * sigma * sigma) * math.exp(
        -1.0 / (2.0 * sigma * sigma)
    ) * grad_norm * m_dist
