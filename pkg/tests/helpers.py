"""Shared test oracles: finite differences, Monte-Carlo helpers."""

import numpy as np

from bridgepan.tensor import Tensor


def finite_diff_grad(fn, x: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """Central-difference gradient of scalar-valued fn at x (independent oracle)."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(fn(x))
        flat[i] = orig - h
        fm = float(fn(x))
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Max relative error with an absolute floor to keep near-zero entries sane."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)
    return float(np.max(np.abs(a - b) / denom))


def check_grad(build, x0: np.ndarray, h: float = 1e-3, tol: float = 1e-4) -> float:
    """Compare tape gradient of `build` (Tensor -> scalar Tensor) against the
    central-difference oracle evaluated in float64. Returns the max relative error."""
    x0 = np.asarray(x0, dtype=np.float64)

    def fn(arr):
        t = Tensor(arr, dtype=np.float64)
        return build(t).item()

    fd = finite_diff_grad(fn, x0.copy(), h=h)
    leaf = Tensor(x0, requires_grad=True, dtype=np.float64)
    out = build(leaf)
    out.backward()
    err = rel_err(leaf.grad, fd)
    assert err < tol, f"gradient mismatch: rel err {err:.3e} >= {tol}"
    return err
