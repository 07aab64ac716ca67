"""Separable 1-d resampling operators shared by raster ops and guidance.

Each operator is available two ways: directly applied along an axis of a
numpy array, and as a dense (out x in) matrix built column-by-column from the
direct code path, so the differentiable matrix form used inside guidance is
exactly the operator used for Wald degradation.
"""

from __future__ import annotations

import functools
import math

import numpy as np


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Discrete Gaussian taps, radius ceil(3*sigma), renormalized to DC gain 1."""
    radius = int(math.ceil(3.0 * sigma))
    i = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(i * i) / (2.0 * sigma * sigma))
    return k / k.sum()


def blur1d(x: np.ndarray, sigma: float, axis: int) -> np.ndarray:
    """Gaussian blur along one axis with reflect padding."""
    k = gaussian_kernel(sigma)
    r = len(k) // 2
    pad = [(0, 0)] * x.ndim
    pad[axis] = (r, r)
    xp = np.pad(x.astype(np.float64), pad, mode="reflect")
    out = np.zeros(x.shape, dtype=np.float64)
    n = x.shape[axis]
    for tap, w in enumerate(k):
        sl = [slice(None)] * x.ndim
        sl[axis] = slice(tap, tap + n)
        out += w * xp[tuple(sl)]
    return out


def decimate_indices(n: int, ratio: int) -> np.ndarray:
    """Every ratio-th sample with phase offset ratio//2."""
    return np.arange(ratio // 2, n, ratio)


def _catmull_rom_weights(t: float) -> np.ndarray:
    """Keys cubic (a = -0.5) weights for taps at offsets -1, 0, 1, 2."""
    t2, t3 = t * t, t * t * t
    return np.array(
        [
            -0.5 * t3 + t2 - 0.5 * t,
            1.5 * t3 - 2.5 * t2 + 1.0,
            -1.5 * t3 + 2.0 * t2 + 0.5 * t,
            0.5 * t3 - 0.5 * t2,
        ]
    )


@functools.lru_cache(maxsize=128)
def upsample_matrix(n: int, ratio: int) -> np.ndarray:
    """Dense (n*ratio x n) Catmull-Rom bicubic matrix, align-corners false.

    Out-of-range taps are linearly extrapolated from the two edge samples so
    constants and linear ramps reproduce exactly up to the border.
    """
    ratio = int(ratio)
    m = n * ratio
    mat = np.zeros((m, n), dtype=np.float64)

    def add(row, col, w):
        if 0 <= col < n:
            mat[row, col] += w
        elif n == 1:
            mat[row, 0] += w
        elif col < 0:
            # linear extrapolation: s[col] = (1 - col) * s[0] + col * s[1]
            mat[row, 0] += w * (1.0 - col)
            mat[row, 1] += w * col
        else:
            d = col - (n - 1)
            mat[row, n - 1] += w * (1.0 + d)
            mat[row, n - 2] -= w * d

    for o in range(m):
        src = (o + 0.5) / ratio - 0.5
        i0 = math.floor(src)
        weights = _catmull_rom_weights(src - i0)
        for k, w in enumerate(weights):
            add(o, i0 - 1 + k, w)
    return mat


@functools.lru_cache(maxsize=128)
def blur_matrix(n: int, sigma: float) -> np.ndarray:
    """Dense (n x n) reflect-padded Gaussian blur matrix."""
    mat = np.empty((n, n), dtype=np.float64)
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        mat[:, j] = blur1d(e, sigma, axis=0)
    return mat


@functools.lru_cache(maxsize=128)
def degrade_matrix(n: int, ratio: int) -> np.ndarray:
    """Dense (n/ratio x n) blur-then-decimate matrix, sigma = 0.5 * ratio."""
    return blur_matrix(n, 0.5 * ratio)[decimate_indices(n, ratio)]


def apply_separable(x: np.ndarray, row_mat: np.ndarray, col_mat: np.ndarray) -> np.ndarray:
    """row_mat . x . col_mat^T over the trailing two axes of x."""
    return np.matmul(np.matmul(row_mat, x.astype(np.float64)), col_mat.T)
