"""Self-contained invariant suites driven by the CLI and the test harness.

Each suite returns a list of (check-name, passed, detail) triples; suites are
deliberately independent re-statements of the library's contracts (finite
differences, Monte-Carlo, enumeration, series tail bounds) rather than calls
into the code paths they vet.
"""

from __future__ import annotations

import itertools
import math
import time

import numpy as np

from .bridge import (
    build_schedule,
    measurement_residual,
    make_degrade_op,
    reverse_step_eps,
    reverse_step_z0,
    reverse_time_grid,
    simulate_sde,
)
from .interact import (
    DenoiserModel,
    UNetConfig,
    exp_kernel,
    geo_kernel,
    interaction_space_dim,
    truncated_hadamard_series,
)
from .spectral import MiTConfig, SpectralProjector, project, unproject
from .tensor import Prng, Tensor, conv2d, mat_inverse, matmul, softmax


def _fd_check(build, x0, h=1e-3, tol=1e-4):
    x0 = np.asarray(x0, dtype=np.float64)
    leaf = Tensor(x0, requires_grad=True, dtype=np.float64)
    build(leaf).backward()
    grad = leaf.grad
    flat = x0.reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = build(Tensor(x0, dtype=np.float64)).item()
        flat[i] = orig - h
        fm = build(Tensor(x0, dtype=np.float64)).item()
        flat[i] = orig
        fd = (fp - fm) / (2 * h)
        g = grad.reshape(-1)[i]
        worst = max(worst, abs(fd - g) / max(abs(fd), abs(g), 1e-6))
    return worst < tol, worst


def bridge_suite() -> list[tuple[str, bool, str]]:
    out = []
    for steps in (10, 100, 1000):
        s = build_schedule(steps)
        ok = (
            s.Theta[0] == 1.0 and s.Theta[steps] == 0.0
            and s.Sigma[0] == 0.0 and s.Sigma[steps] == 0.0
        )
        out.append((f"boundary identities T={steps}", ok,
                    f"Theta0={s.Theta[0]}, ThetaT={s.Theta[steps]}"))

    s = build_schedule(1000)
    prng = Prng(101)
    npaths = 4000
    traj = simulate_sde(np.zeros(npaths), np.ones(npaths), s, 1000, prng)
    ok_all, details = True, []
    for frac in (0.25, 0.5, 0.75):
        idx = int(frac * 1000)
        mean_expect = 1.0 - s.Theta[idx]
        var_expect = s.Sigma[idx] ** 2
        got_m = traj[idx].mean()
        got_v = traj[idx].var()
        se_m = s.Sigma[idx] / math.sqrt(npaths)
        se_v = var_expect * math.sqrt(2.0 / (npaths - 1))
        ok = abs(got_m - mean_expect) < 4 * se_m and abs(got_v - var_expect) < 4 * se_v
        ok_all &= ok
        details.append(f"t={frac}: dm={abs(got_m-mean_expect):.2e}")
    out.append(("SDE marginals vs closed form", bool(ok_all), "; ".join(details)))

    rng = np.random.default_rng(7)
    z0 = rng.uniform(-1, 1, (16, 16, 16)).astype(np.float32)
    zT = rng.uniform(-1, 1, (16, 16, 16)).astype(np.float32)
    worst = 0.0
    for nfe in (1, 3, 5, 10):
        grid = reverse_time_grid(s, nfe)
        z = zT.copy()
        for i, t in enumerate(grid):
            tp = grid[i + 1] if i + 1 < len(grid) else 0
            z = reverse_step_z0(z, zT, z0, t, s, t_prev=tp)
        worst = max(worst, float(np.max(np.abs(z - z0))))
    out.append(("oracle recovery NFE 1/3/5/10", worst < 1e-5, f"max err {worst:.2e}"))

    worst = 0.0
    for _ in range(100):
        t = int(rng.integers(1, s.steps))
        z0v = rng.uniform(-1, 1, 4)
        zTv = rng.uniform(-1, 1, 4)
        eps = rng.normal(0, 1, 4)
        z_t = zTv + (z0v - zTv) * s.Theta[t] + s.Sigma[t] * eps
        a = reverse_step_z0(z_t, zTv, z0v, t, s)
        b = reverse_step_eps(z_t, zTv, eps, t, s)
        worst = max(worst, float(np.max(np.abs(a - b))))
    out.append(("prediction-mode equivalence", worst < 1e-8, f"max gap {worst:.2e}"))
    return out


def kernels_suite() -> list[tuple[str, bool, str]]:
    out = []
    u = np.linspace(-0.9, 0.9, 37)
    closed = geo_kernel(Tensor(u, dtype=np.float64)).data
    partial = truncated_hadamard_series(Tensor(u, dtype=np.float64), 30, "geo").data
    tail = np.abs(u) ** 31 / (1.0 - np.abs(u))
    ok = bool(np.all(np.abs(closed - partial) <= tail + 1e-12))
    out.append(("geometric kernel within K=30 tail bound", ok,
                f"worst {np.max(np.abs(closed-partial)-tail):.2e} under bound"))

    u = np.linspace(-3.0, 3.0, 25)
    closed = exp_kernel(Tensor(u, dtype=np.float64)).data
    partial = truncated_hadamard_series(Tensor(u, dtype=np.float64), 20, "exp").data
    err = np.abs(closed - partial)
    tail = np.abs(u) ** 21 / math.factorial(21) / (1.0 - np.abs(u) / 22.0)
    roundoff = 64.0 * np.finfo(np.float64).eps * np.abs(closed)
    ok = bool(np.all(err <= tail + roundoff))
    inner = np.abs(u) <= 2.8
    ok = ok and bool(np.max(err[inner]) < 1e-10)
    out.append(("exponential kernel within K=20 remainder", ok,
                f"max err {np.max(err):.2e} (analytic tail at |u|=3: 2.37e-10)"))

    ok = True
    for d in range(1, 5):
        for k in range(0, 5):
            brute = len(set(itertools.combinations_with_replacement(range(d), k)))
            ok &= interaction_space_dim(d, k) == brute
    out.append(("interaction dims match enumeration (d,k <= 4)", bool(ok), ""))

    ok = True
    for d in range(2, 9):
        for k in range(1, 9):
            ok &= interaction_space_dim(d, k) == (
                interaction_space_dim(d - 1, k) + interaction_space_dim(d, k - 1)
            )
    out.append(("interaction dims satisfy Pascal recurrence (d,k <= 8)", bool(ok), ""))
    return out


def grad_suite() -> list[tuple[str, bool, str]]:
    out = []
    rng = np.random.default_rng(11)

    div_const = Tensor(rng.uniform(0.5, 1.5, (4,)), dtype=np.float64)
    mat_const = Tensor(rng.uniform(-1, 1, (4, 2)), dtype=np.float64)
    ker_const = Tensor(rng.uniform(-1, 1, (2, 2, 3, 3)), dtype=np.float64)
    cases = {
        "elementwise chain": (
            lambda t: ((t * t).tanh().exp() * t).sum(), rng.uniform(-1, 1, (3, 3))),
        "division": (
            lambda t: (t / div_const).sum(), rng.uniform(-1, 1, (4,))),
        "matmul": (
            lambda t: (matmul(t, mat_const) ** 2).sum(), rng.uniform(-1, 1, (3, 4))),
        "conv2d": (
            lambda t: (conv2d(t, ker_const, stride=1, pad=1) ** 2).sum(),
            rng.uniform(-1, 1, (1, 2, 5, 5))),
        "matrix inverse": (
            lambda t: mat_inverse(t).sum(),
            rng.uniform(-1, 1, (3, 3)) + 3.0 * np.eye(3)),
        "softmax": (
            lambda t: (softmax(t, axis=-1) ** 2).sum(), rng.uniform(-1, 1, (2, 5))),
        "l2 norm": (lambda t: t.l2norm(), rng.uniform(-1, 1, (3, 4))),
    }
    for name, (build, x0) in cases.items():
        ok, worst = _fd_check(build, x0)
        out.append((f"{name} grad vs FD", ok, f"worst rel err {worst:.2e}"))

    model = DenoiserModel(UNetConfig.variant("micro"), latent_channels=16, seed=21,
                          dtype=np.float64)
    z_t = Tensor(rng.uniform(-1, 1, (8, 8, 16)), dtype=np.float64)
    z_T = Tensor(rng.uniform(-1, 1, (8, 8, 16)), dtype=np.float64)
    pan = Tensor(rng.uniform(0, 1, (8, 8, 1)), dtype=np.float64)

    def loss():
        return (model.forward(z_t, z_T, pan, 55) ** 2).sum()

    loss().backward()
    worst = 0.0
    h = 1e-5
    params = model.named_parameters()
    names = rng.choice(sorted(params), size=6, replace=False)
    for name in names:
        p = params[name]
        if p.grad is None:
            continue
        fi = int(rng.integers(0, p.size))
        idx = np.unravel_index(fi, p.shape)
        orig = p.data[idx]
        p.data[idx] = orig + h
        fp = loss().item()
        p.data[idx] = orig - h
        fm = loss().item()
        p.data[idx] = orig
        fd = (fp - fm) / (2 * h)
        g = p.grad[idx]
        worst = max(worst, abs(fd - g) / max(abs(fd), abs(g), 1e-6))
    out.append(("denoiser end-to-end grad vs FD", worst < 1e-3,
                f"worst rel err {worst:.2e}"))

    proj = SpectralProjector(MiTConfig(), seed=31, dtype=np.float64)
    x_up = Tensor(rng.uniform(0.2, 0.8, (8, 8, 4)), dtype=np.float64)
    mt, _ = proj.mapping(x_up)
    op = make_degrade_op(8, 8, 4, dtype=np.float64)
    z_T_obs = project(x_up, mt).data
    base = z_T_obs + rng.normal(0, 0.05, z_T_obs.shape)
    leaf = Tensor(base, requires_grad=True, dtype=np.float64)
    measurement_residual(leaf * 1.0, z_T_obs, mt, op).backward()
    worst = 0.0
    for _ in range(4):
        idx = tuple(int(rng.integers(0, s)) for s in base.shape)
        up = base.copy(); up[idx] += 1e-5
        dn = base.copy(); dn[idx] -= 1e-5
        fp = measurement_residual(Tensor(up, dtype=np.float64), z_T_obs, mt, op).item()
        fm = measurement_residual(Tensor(dn, dtype=np.float64), z_T_obs, mt, op).item()
        fd = (fp - fm) / 2e-5
        g = leaf.grad[idx]
        worst = max(worst, abs(fd - g) / max(abs(fd), abs(g), 1e-6))
    out.append(("guidance residual grad vs FD", worst < 1e-4,
                f"worst rel err {worst:.2e}"))
    return out


def moe_suite() -> list[tuple[str, bool, str]]:
    out = []
    rng = np.random.default_rng(41)
    proj = SpectralProjector(MiTConfig(), seed=41)

    worst, worst_ident = 0.0, 0.0
    for b in range(1, 11):
        x = Tensor(rng.uniform(0, 1, (8, 8, b)).astype(np.float32))
        mt, rs = proj.mapping(x)
        back = unproject(project(x, mt), mt)
        worst = max(worst, float(np.max(np.abs(back.data - x.data))))
        gram = matmul(mt.T, mt.T_star).data
        worst_ident = max(worst_ident, float(np.linalg.norm(gram - np.eye(b))))
    out.append(("round trip B=1..10", worst < 1e-5, f"max err {worst:.2e}"))
    out.append(("T.T* = I Frobenius", worst_ident < 1e-5, f"max {worst_ident:.2e}"))

    from .spectral import route

    ok = True
    for _ in range(20):
        h_p = Tensor(rng.uniform(-2, 2, 64).astype(np.float32))
        selected, probs = route(h_p, 5, proj._router_params())
        p = probs.data.astype(np.float64)
        ok &= selected == sorted(range(len(p)), key=lambda k: (-p[k], k))[:5]
        ok &= abs(p.sum() - 1.0) < 1e-6
    out.append(("top-B routing matches sort oracle", bool(ok), ""))

    e = Tensor(rng.uniform(-1, 1, (10, 64)).astype(np.float32))
    attn = softmax(matmul(e, e.transpose(1, 0)) * (1.0 / 8.0), axis=-1)
    ok = bool(np.all(np.abs(attn.data.sum(axis=-1) - 1.0) < 1e-6))
    out.append(("attention rows stochastic", ok, ""))
    return out


SUITES = {
    "bridge": bridge_suite,
    "kernels": kernels_suite,
    "grad": grad_suite,
    "moe": moe_suite,
}


def run_suites(names: list[str]) -> tuple[bool, list[str]]:
    """Run the named suites; returns (all_passed, printable table lines)."""
    lines = []
    all_ok = True
    for suite_name in names:
        t0 = time.perf_counter()
        checks = SUITES[suite_name]()
        dt = time.perf_counter() - t0
        for name, ok, detail in checks:
            all_ok &= ok
            mark = "PASS" if ok else "FAIL"
            lines.append(f"[{mark}] {suite_name:8s} {name}" + (f"  ({detail})" if detail else ""))
        lines.append(f"       {suite_name:8s} suite wall time {dt:.2f}s")
    return all_ok, lines
