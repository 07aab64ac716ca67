"""Deterministic synthetic scenes for smoke training, verification, and demos.

Scenes are built so a panchromatic observation genuinely carries the spatial
detail of every band: one sharp multi-frequency pattern is shared across
bands up to per-band gains, and PAN is the band mean. That makes detail
injection learnable (and classical methods meaningfully comparable) while
staying fully reproducible from a seed.
"""

from __future__ import annotations

import numpy as np

from .raster import Raster, WaldPair, degrade, make_wald_pair

_BAND_NAMES = {
    4: ["B", "G", "R", "NIR"],
    7: ["B", "G", "R", "NIR", "SWIR", "TIR", "MIR"],
    8: ["C", "B", "G", "Y", "R", "RE", "NIR1", "NIR2"],
    10: ["CA", "B", "G", "R", "NIR", "SWIR1", "SWIR2", "Cirrus", "TIR1", "TIR2"],
}


def band_names_for(bands: int) -> list[str]:
    return list(_BAND_NAMES.get(bands, [f"band{i}" for i in range(bands)]))


def synthetic_scene(bands: int = 4, pan_size: int = 32, ratio: int = 4,
                    seed: int = 0) -> tuple[Raster, Raster]:
    """One MS/PAN pair: MS at pan_size/ratio, PAN at pan_size.

    Scenes share one edge/disc geometry and differ in sinusoid phases and
    band gains, so a small model can amortize the spatial structure across a
    dataset while each scene still carries genuinely sharp detail. Returns
    (ms, pan) where ms is the degraded view of the sharp latent truth and
    pan is the full-resolution band mean.
    """
    rng = np.random.default_rng(seed)
    n = pan_size
    y, x = np.mgrid[0:n, 0:n] / n
    s = 0.5 + 0.1 * np.sin(2 * np.pi * (x + rng.uniform()))
    s += 0.08 * np.cos(2 * np.pi * (2 * y + rng.uniform()))
    s += 0.16 * (((x > 0.5) ^ (y > 0.5)).astype(float) - 0.5)  # sharp edges
    s += 0.12 * (((x - 0.5) ** 2 + (y - 0.5) ** 2) < 0.05)  # a sharp disc
    s = np.clip(s, 0.05, 0.95)
    gains = np.linspace(0.85, 1.1, bands) * rng.uniform(0.97, 1.03, bands)
    stack = np.stack([np.clip(s * g, 0.0, 1.0) for g in gains]).astype(np.float32)
    pan = Raster(stack.mean(axis=0, keepdims=True).astype(np.float32), ["PAN"])
    ms = degrade(Raster(stack, band_names_for(bands)), ratio)
    return ms, pan


def synthetic_wald_dataset(count: int = 8, bands: int = 4, pan_size: int = 32,
                           ratio: int = 4, seed: int = 0) -> list[WaldPair]:
    """Reduced-scale triples from `count` scenes (seeds seed, seed+1, ...)."""
    return [
        make_wald_pair(*synthetic_scene(bands, pan_size, ratio, seed + i), ratio)
        for i in range(count)
    ]
