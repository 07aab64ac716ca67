"""Multi-band raster container and the Wald-protocol degradation operators.

The on-disk container ("BPR1") is a one-line JSON header followed by raw
little-endian float32 planar band data; round trips are bit-exact. PNG import
and preview export cover 1- and 3-band visualization only.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import DimensionError, FormatError
from .resample import blur1d, decimate_indices, degrade_matrix, upsample_matrix

_MAGIC = "BPR1"


@dataclass
class Raster:
    """Planar float32 image stack with named bands, intensities nominally in [0,1]."""

    data: np.ndarray  # shape (bands, height, width), float32
    band_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim == 2:
            self.data = self.data[None]
        if self.data.ndim != 3:
            raise DimensionError(f"raster data must be (bands, H, W), got {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise FormatError("raster contains non-finite values")
        if not self.band_names:
            self.band_names = [f"band{i}" for i in range(self.bands)]
        if len(self.band_names) != self.bands:
            raise DimensionError(
                f"{len(self.band_names)} band names for {self.bands} bands"
            )

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def band(self, name: str) -> np.ndarray:
        from .errors import ConfigurationError

        if name not in self.band_names:
            raise ConfigurationError(
                f"band {name!r} not present; available: {self.band_names}"
            )
        return self.data[self.band_names.index(name)]

    def hwc(self) -> np.ndarray:
        """View as (H, W, bands)."""
        return np.moveaxis(self.data, 0, -1)


@dataclass
class WaldPair:
    """Reduced-scale training/eval triple: degraded inputs plus the original MS."""

    ms_reduced: Raster
    pan_reduced: Raster
    reference: Raster
    ratio: int


# -- container I/O -------------------------------------------------------------


def write_raster(path: str, r: Raster) -> None:
    header = {
        "magic": _MAGIC,
        "width": r.width,
        "height": r.height,
        "bands": r.bands,
        "names": list(r.band_names),
        "scale": 1.0,
    }
    payload = np.ascontiguousarray(r.data, dtype="<f4").tobytes()
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload)
    os.replace(tmp, path)


def read_raster(path: str) -> Raster:
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise FormatError("missing header line", byte_offset=0)
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unparseable header: {exc}", byte_offset=0) from None
    if header.get("magic") != _MAGIC:
        raise FormatError(f"bad magic {header.get('magic')!r}", byte_offset=0)
    w, h, b = int(header["width"]), int(header["height"]), int(header["bands"])
    expected = w * h * b * 4
    payload = raw[nl + 1 :]
    if len(payload) != expected:
        raise FormatError(
            f"payload is {len(payload)} bytes, expected {expected}",
            byte_offset=nl + 1 + min(len(payload), expected),
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(b, h, w)
    if not np.isfinite(data).all():
        bad = int(np.flatnonzero(~np.isfinite(data.reshape(-1)))[0])
        raise FormatError("NaN/Inf in payload", byte_offset=nl + 1 + bad * 4)
    return Raster(data.copy(), list(header.get("names", [])))


def import_png(path: str, band_names: list[str] | None = None) -> Raster:
    """Load an 8/16-bit grayscale or RGB PNG, normalizing 0..max to [0, 1]."""
    img = Image.open(path)
    if img.mode in ("I;16", "I;16B", "I"):
        arr = np.asarray(img, dtype=np.float64) / 65535.0
        planes = arr[None]
    elif img.mode == "L":
        planes = np.asarray(img, dtype=np.float64)[None] / 255.0
    elif img.mode == "RGB":
        planes = np.moveaxis(np.asarray(img, dtype=np.float64), -1, 0) / 255.0
    else:
        raise FormatError(f"unsupported PNG mode {img.mode!r}")
    names = band_names or (["R", "G", "B"] if planes.shape[0] == 3 else ["L"])
    return Raster(planes.astype(np.float32), names)


def export_png(path: str, r: Raster, bands: tuple | None = None) -> None:
    """Write an 8-bit preview of one band or a band triple."""
    if bands is None:
        bands = (0,) if r.bands == 1 else (0, 1, 2)
    sel = np.clip(r.data[list(bands)], 0.0, 1.0)
    arr = np.round(sel * 255.0).astype(np.uint8)
    img = Image.fromarray(arr[0] if len(bands) == 1 else np.moveaxis(arr, 0, -1))
    tmp = f"{path}.tmp.{os.getpid()}"
    img.save(tmp, format="PNG")
    os.replace(tmp, path)


# -- resampling operators --------------------------------------------------------


def gaussian_blur(r: Raster, sigma: float) -> Raster:
    """Separable Gaussian blur, reflect padding, DC gain exactly 1."""
    if sigma <= 0:
        from .errors import ConfigurationError

        raise ConfigurationError("sigma must be positive")
    out = blur1d(blur1d(r.data, sigma, axis=1), sigma, axis=2)
    return Raster(out.astype(np.float32), list(r.band_names))


def degrade(r: Raster, ratio: int, noise_sigma: float = 0.0, prng=None) -> Raster:
    """Wald-style spatial degradation: blur (sigma = ratio/2) then decimate.

    Decimation keeps every ratio-th pixel at phase offset ratio//2. Additive
    Gaussian noise of scale `noise_sigma` is off by default.
    """
    ratio = int(ratio)
    if ratio < 1:
        from .errors import ConfigurationError

        raise ConfigurationError("ratio must be >= 1")
    if r.height % ratio or r.width % ratio:
        raise DimensionError(
            f"ratio {ratio} does not divide raster dims {r.height}x{r.width}"
        )
    blurred = blur1d(blur1d(r.data, 0.5 * ratio, axis=1), 0.5 * ratio, axis=2)
    rows = decimate_indices(r.height, ratio)
    cols = decimate_indices(r.width, ratio)
    out = blurred[:, rows][:, :, cols]
    if noise_sigma > 0.0:
        if prng is None:
            from .errors import ConfigurationError

            raise ConfigurationError("noise_sigma > 0 requires a prng")
        out = out + noise_sigma * prng.gaussian(out.shape, dtype=np.float64)
    return Raster(out.astype(np.float32), list(r.band_names))


def upsample_bicubic(r: Raster, ratio: int) -> Raster:
    """Catmull-Rom (a = -0.5) upsampling, align-corners false."""
    ratio = int(ratio)
    if ratio < 1:
        from .errors import ConfigurationError

        raise ConfigurationError("ratio must be >= 1")
    if ratio == 1:
        return Raster(r.data.copy(), list(r.band_names))
    mr = upsample_matrix(r.height, ratio)
    mc = upsample_matrix(r.width, ratio)
    out = np.matmul(np.matmul(mr, r.data.astype(np.float64)), mc.T)
    return Raster(out.astype(np.float32), list(r.band_names))


def degrade_upsample_matrices(height: int, width: int, ratio: int):
    """Per-axis (blur+decimate then bicubic-up) matrices at PAN resolution.

    These dense operators feed the differentiable measurement-consistency
    residual; by construction they match `degrade` followed by
    `upsample_bicubic` exactly.
    """
    mr = upsample_matrix(height // ratio, ratio) @ degrade_matrix(height, ratio)
    mc = upsample_matrix(width // ratio, ratio) @ degrade_matrix(width, ratio)
    return mr, mc


def make_wald_pair(ms: Raster, pan: Raster, ratio: int) -> WaldPair:
    """Degrade both inputs by `ratio`; the original MS becomes the reference."""
    ratio = int(ratio)
    if pan.height != ms.height * ratio or pan.width != ms.width * ratio:
        raise DimensionError(
            f"pan dims {pan.height}x{pan.width} are not ms dims "
            f"{ms.height}x{ms.width} times ratio {ratio}"
        )
    if pan.bands != 1:
        raise DimensionError(f"pan must be single-band, got {pan.bands}")
    return WaldPair(
        ms_reduced=degrade(ms, ratio),
        pan_reduced=degrade(pan, ratio),
        reference=Raster(ms.data.copy(), list(ms.band_names)),
        ratio=ratio,
    )
