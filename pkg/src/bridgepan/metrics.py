"""Fusion quality metrics, spectral indices, and classical pansharpening.

Reference metrics (PSNR / SSIM / ERGAS / SAM) compare a fused product against
ground truth at the same resolution; the no-reference family (D_lambda, D_s,
QNR) compares inter-band and band-to-PAN structure via the universal image
quality index on 32x32 tiles. Four classical baselines (SFIM, IHS, Brovey,
Gram-Schmidt in its mean-intensity form) share the bicubic upsampling front
end.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError
from .raster import Raster, degrade, gaussian_blur, upsample_bicubic
from .resample import gaussian_kernel

_PSNR_CAP = 99.0
_EPS = 1e-6


@dataclass
class MetricReport:
    """Scalar metric summary; absent entries stay None."""

    psnr: float | None = None
    ssim: float | None = None
    ergas: float | None = None
    sam: float | None = None
    d_lambda: float | None = None
    d_s: float | None = None
    qnr: float | None = None
    per_band: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {}
        for k in ("psnr", "ssim", "ergas", "sam", "d_lambda", "d_s", "qnr"):
            v = getattr(self, k)
            if v is not None:
                out[k] = float(v)
        if self.per_band:
            out["per_band"] = {k: [float(x) for x in v] for k, v in self.per_band.items()}
        return out


# -- reference metrics -----------------------------------------------------------


def _band_psnr(f: np.ndarray, r: np.ndarray) -> float:
    mse = float(np.mean((f.astype(np.float64) - r.astype(np.float64)) ** 2))
    if mse == 0.0:
        return _PSNR_CAP
    return min(10.0 * np.log10(1.0 / mse), _PSNR_CAP)


def _ssim_band(f: np.ndarray, r: np.ndarray) -> float:
    """Standard single-band SSIM: 11x11 Gaussian window (sigma 1.5), k1=0.01,
    k2=0.03, dynamic range 1. Images smaller than the window use global stats."""
    f = f.astype(np.float64)
    r = r.astype(np.float64)
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    if min(f.shape) < 11:
        mx, my = f.mean(), r.mean()
        vx, vy = f.var(), r.var()
        cxy = float(np.mean((f - mx) * (r - my)))
        return ((2 * mx * my + c1) * (2 * cxy + c2)) / (
            (mx * mx + my * my + c1) * (vx + vy + c2)
        )
    k = gaussian_kernel(1.5)  # radius ceil(4.5) = 5 -> 11 taps

    def filt(img):
        tmp = np.apply_along_axis(lambda m: np.convolve(m, k, mode="valid"), 0, img)
        return np.apply_along_axis(lambda m: np.convolve(m, k, mode="valid"), 1, tmp)

    mu_f, mu_r = filt(f), filt(r)
    var_f = filt(f * f) - mu_f ** 2
    var_r = filt(r * r) - mu_r ** 2
    cov = filt(f * r) - mu_f * mu_r
    num = (2 * mu_f * mu_r + c1) * (2 * cov + c2)
    den = (mu_f ** 2 + mu_r ** 2 + c1) * (var_f + var_r + c2)
    return float(np.mean(num / den))


def reference_metrics(fused: Raster, ref: Raster, ratio: int) -> MetricReport:
    """PSNR / SSIM / ERGAS / SAM of a fused product against the reference."""
    if fused.data.shape != ref.data.shape:
        raise DimensionError(
            f"fused {fused.data.shape} vs reference {ref.data.shape}"
        )
    f64 = fused.data.astype(np.float64)
    r64 = ref.data.astype(np.float64)
    b = fused.bands

    psnr_b = [_band_psnr(f64[i], r64[i]) for i in range(b)]
    ssim_b = [_ssim_band(f64[i], r64[i]) for i in range(b)]
    rmse_b = np.sqrt(np.mean((f64 - r64) ** 2, axis=(1, 2)))
    mu_b = np.maximum(np.abs(f64.mean(axis=(1, 2))), 1e-12)
    ergas = 100.0 / ratio * float(np.sqrt(np.mean((rmse_b / mu_b) ** 2)))

    fv = f64.reshape(b, -1)
    rv = r64.reshape(b, -1)
    nf = np.linalg.norm(fv, axis=0)
    nr = np.linalg.norm(rv, axis=0)
    valid = (nf > 0) & (nr > 0)
    if valid.any():
        # 2 arcsin(|u/|u| - v/|v||/2): equal to arccos of the cosine but exact
        # at zero angle and stable for nearly collinear spectra
        chord = np.linalg.norm(
            fv[:, valid] / nf[valid] - rv[:, valid] / nr[valid], axis=0
        )
        angles = 2.0 * np.arcsin(np.clip(0.5 * chord, 0.0, 1.0))
        sam = float(np.degrees(np.mean(angles)))
    else:
        sam = 0.0

    return MetricReport(
        psnr=float(np.mean(psnr_b)), ssim=float(np.mean(ssim_b)), ergas=ergas,
        sam=sam, per_band={"psnr": psnr_b, "ssim": ssim_b, "rmse": rmse_b.tolist()},
    )


# -- no-reference metrics -----------------------------------------------------------


def _blocks(a: np.ndarray, size: int = 32):
    h, w = a.shape
    if h < size or w < size:
        yield a
        return
    for i in range(0, h - size + 1, size):
        for j in range(0, w - size + 1, size):
            yield a[i : i + size, j : j + size]


def _uiqi(x: np.ndarray, y: np.ndarray, size: int = 32) -> float:
    """Universal image quality index averaged over non-overlapping tiles."""
    vals = []
    for bx, by in zip(_blocks(x, size), _blocks(y, size)):
        bx = bx.astype(np.float64).reshape(-1)
        by = by.astype(np.float64).reshape(-1)
        mx, my = bx.mean(), by.mean()
        vx = bx.var(ddof=1)
        vy = by.var(ddof=1)
        cxy = float(np.sum((bx - mx) * (by - my)) / (bx.size - 1))
        den = (vx + vy) * (mx * mx + my * my)
        if den == 0.0:
            vals.append(1.0 if np.array_equal(bx, by) else 0.0)
        else:
            vals.append(4.0 * cxy * mx * my / den)
    return float(np.mean(vals))


def no_reference_metrics(fused: Raster, ms: Raster, pan: Raster, ratio: int) -> MetricReport:
    """Wald full-scale protocol: spectral distortion D_lambda from inter-band
    UIQI drift, spatial distortion D_s from band-vs-PAN UIQI drift, and
    QNR = (1 - D_lambda)(1 - D_s) with unit exponents."""
    if fused.bands != ms.bands:
        raise DimensionError(f"fused has {fused.bands} bands, ms has {ms.bands}")
    if fused.height != pan.height or fused.width != pan.width:
        raise DimensionError("fused must be at PAN resolution")
    if ms.height * ratio != pan.height or ms.width * ratio != pan.width:
        raise DimensionError("ms must be at 1/ratio of PAN resolution")
    b = fused.bands

    if b == 1:
        d_lambda = 0.0  # vacuous pair set
    else:
        diffs = []
        for i in range(b):
            for j in range(b):
                if i == j:
                    continue
                diffs.append(
                    abs(_uiqi(fused.data[i], fused.data[j]) - _uiqi(ms.data[i], ms.data[j]))
                )
        d_lambda = float(np.mean(diffs))

    pan_lr = degrade(pan, ratio)
    diffs = [
        abs(_uiqi(fused.data[i], pan.data[0]) - _uiqi(ms.data[i], pan_lr.data[0]))
        for i in range(b)
    ]
    d_s = float(np.mean(diffs))
    return MetricReport(d_lambda=d_lambda, d_s=d_s, qnr=(1.0 - d_lambda) * (1.0 - d_s))


# -- spectral indices ------------------------------------------------------------------


_INDEX_BANDS = {
    "ndvi": ("NIR", "R"),
    "ndwi": ("G", "NIR"),
    "ndre": ("NIR1", "RE"),
    "ndbi": ("SWIR1", "NIR"),
}


def spectral_index(r: Raster, kind: str) -> np.ndarray:
    """Normalized difference (a - b)/(a + b) over the index's band pair.

    Pixels with a + b = 0 map to 0; output clamped to [-1, 1].
    """
    kind = kind.lower()
    if kind not in _INDEX_BANDS:
        raise ConfigurationError(
            f"unknown index {kind!r}; choose from {sorted(_INDEX_BANDS)}"
        )
    a_name, b_name = _INDEX_BANDS[kind]
    a = r.band(a_name).astype(np.float64)
    b = r.band(b_name).astype(np.float64)
    denom = a + b
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(denom == 0.0, 0.0, (a - b) / denom)
    return np.clip(out, -1.0, 1.0)


def index_agreement(a: np.ndarray, b: np.ndarray) -> tuple[float, float, float]:
    """(RMSE, MAE, Pearson CC) between two index maps; CC of a constant map
    is reported as 0 with a warning."""
    if a.shape != b.shape:
        raise DimensionError(f"index maps differ in shape: {a.shape} vs {b.shape}")
    a = a.astype(np.float64).reshape(-1)
    b = b.astype(np.float64).reshape(-1)
    rmse = float(np.sqrt(np.mean((a - b) ** 2)))
    mae = float(np.mean(np.abs(a - b)))
    sa, sb = a.std(), b.std()
    if sa == 0.0 or sb == 0.0:
        warnings.warn("correlation of a constant index map reported as 0")
        cc = 0.0
    else:
        cc = float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))
    return rmse, mae, cc


# -- classical baselines ------------------------------------------------------------------


_METHODS = ("sfim", "ihs", "gs", "brovey")


def classical_pansharpen(ms: Raster, pan: Raster, ratio: int, method: str) -> Raster:
    """Classical detail injection on top of bicubic upsampling.

    SFIM modulates by the PAN-to-smoothed-PAN ratio; IHS adds the PAN minus
    mean-intensity residual; Brovey rescales by PAN over intensity; GS injects
    the residual with per-band gains cov(band, I)/var(I). Output is clamped to
    [0, 1].
    """
    method = method.lower()
    if method not in _METHODS:
        raise ConfigurationError(
            f"unknown method {method!r}; choose from {sorted(_METHODS)}"
        )
    if pan.height != ms.height * ratio or pan.width != ms.width * ratio:
        raise DimensionError("pan dims must be ms dims times ratio")
    ups = upsample_bicubic(ms, ratio).data.astype(np.float64)
    p = pan.data[0].astype(np.float64)
    intensity = ups.mean(axis=0)

    if method == "sfim":
        smooth = gaussian_blur(pan, 0.5 * ratio).data[0].astype(np.float64)
        fused = ups * (p / (smooth + _EPS))
    elif method == "ihs":
        fused = ups + (p - intensity)
    elif method == "brovey":
        fused = ups * (p / (intensity + _EPS))
    else:  # gs, mean-intensity single-component form
        detail = p - intensity
        ivar = intensity.var()
        fused = np.empty_like(ups)
        for i in range(ups.shape[0]):
            gain = 0.0 if ivar == 0.0 else float(
                np.mean((ups[i] - ups[i].mean()) * (intensity - intensity.mean())) / ivar
            )
            fused[i] = ups[i] + gain * detail
    return Raster(np.clip(fused, 0.0, 1.0).astype(np.float32), list(ms.band_names))
