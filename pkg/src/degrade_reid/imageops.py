"""Elementary image degradations on float images in [0, 1].

Images are (H, W, C) float64 arrays with C in {1, 3}. Resampling uses the
half-pixel coordinate convention: output pixel ``i`` reads the source at
``(i + 0.5) * (n_in / n_out) - 0.5``. Nearest-neighbour ties resolve to the
smaller index and bicubic is Catmull-Rom (a = -0.5) with edge replication.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage
from scipy.signal import fftconvolve

from .errors import ParameterError

NEAREST = "nearest"
BILINEAR = "bilinear"
BICUBIC = "bicubic"
RESAMPLE_METHODS = (NEAREST, BILINEAR, BICUBIC)


def check_image(img: np.ndarray) -> np.ndarray:
    """Validate and canonicalize to a (H, W, C) float64 array in [0, 1]."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, np.newaxis]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ParameterError(f"expected (H, W, 1|3) image, got shape {np.shape(img)}")
    if arr.size == 0:
        raise ParameterError("empty image")
    lo, hi = arr.min(), arr.max()
    if lo < 0.0 or hi > 1.0:
        raise ParameterError(f"image samples outside [0, 1] (min {lo}, max {hi})")
    return arr


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float

    def __post_init__(self):
        if not (4e-3 <= self.sigma <= 1e-2):
            raise ParameterError(f"noise sigma={self.sigma!r} outside [4e-3, 1e-2]")


@dataclass(frozen=True)
class DownscaleSpec:
    factor: int
    method: str = BICUBIC

    def __post_init__(self):
        if self.factor not in (2, 4):
            raise ParameterError(f"downscale factor={self.factor!r} not in {{2, 4}}")
        if self.method not in RESAMPLE_METHODS:
            raise ParameterError(f"unknown resample method {self.method!r}")


@dataclass(frozen=True)
class JpegSpec:
    quality: int

    def __post_init__(self):
        if not isinstance(self.quality, (int, np.integer)) or not (30 <= self.quality <= 95):
            raise ParameterError(f"jpeg quality={self.quality!r} outside [30, 95]")


def convolve(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Per-channel 2-D convolution with symmetric-reflect padding, same size."""
    img = check_image(img)
    kernel = np.asarray(kernel, dtype=np.float64)
    side = kernel.shape[0]
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1] or side % 2 == 0:
        raise ParameterError(f"kernel must be square with odd side, got {kernel.shape}")
    if side > min(img.shape[0], img.shape[1]):
        raise ParameterError(f"kernel side {side} exceeds image size {img.shape[:2]}")
    t = side // 2
    padded = np.pad(img, ((t, t), (t, t), (0, 0)), mode="symmetric")
    out = np.empty_like(img)
    for c in range(img.shape[2]):
        out[:, :, c] = fftconvolve(padded[:, :, c], kernel, mode="valid")
    return np.clip(out, 0.0, 1.0)


def _cubic_weights(frac: np.ndarray) -> np.ndarray:
    """Catmull-Rom weights for taps at offsets (-1, 0, 1, 2) from floor(coord)."""
    a = -0.5

    def w(x):
        x = np.abs(x)
        return np.where(
            x <= 1.0,
            (a + 2.0) * x**3 - (a + 3.0) * x**2 + 1.0,
            np.where(x < 2.0, a * x**3 - 5.0 * a * x**2 + 8.0 * a * x - 4.0 * a, 0.0),
        )

    return np.stack([w(frac + 1.0), w(frac), w(1.0 - frac), w(2.0 - frac)], axis=1)


def resample_matrix(n_in: int, n_out: int, method: str) -> np.ndarray:
    """(n_out, n_in) weight matrix realizing 1-D resampling along one axis."""
    if method not in RESAMPLE_METHODS:
        raise ParameterError(f"unknown resample method {method!r}")
    coords = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    mat = np.zeros((n_out, n_in), dtype=np.float64)
    rows = np.arange(n_out)
    if method == NEAREST:
        idx = np.ceil(coords - 0.5).astype(np.int64)  # ties to the smaller index
        mat[rows, np.clip(idx, 0, n_in - 1)] = 1.0
    elif method == BILINEAR:
        base = np.floor(coords).astype(np.int64)
        frac = coords - base
        for off, wt in ((0, 1.0 - frac), (1, frac)):
            np.add.at(mat, (rows, np.clip(base + off, 0, n_in - 1)), wt)
    else:
        base = np.floor(coords).astype(np.int64)
        weights = _cubic_weights(coords - base)
        for off in range(4):
            idx = np.clip(base - 1 + off, 0, n_in - 1)  # edge replication
            np.add.at(mat, (rows, idx), weights[:, off])
    return mat


def _resample(img: np.ndarray, out_h: int, out_w: int, method: str) -> np.ndarray:
    my = resample_matrix(img.shape[0], out_h, method)
    mx = resample_matrix(img.shape[1], out_w, method)
    tmp = np.tensordot(my, img, axes=(1, 0))  # (out_h, W, C)
    out = np.tensordot(mx, tmp, axes=(1, 1))  # (out_w, out_h, C)
    return np.clip(out.transpose(1, 0, 2), 0.0, 1.0)


def downscale(img: np.ndarray, spec: DownscaleSpec) -> np.ndarray:
    """Reduce both sides by the integer factor; no anti-alias prefilter."""
    img = check_image(img)
    h, w = img.shape[:2]
    if h % spec.factor or w % spec.factor:
        raise ParameterError(f"factor {spec.factor} does not divide image size {h}x{w}")
    return _resample(img, h // spec.factor, w // spec.factor, spec.method)


def upscale_bicubic(img: np.ndarray, out_side: int) -> np.ndarray:
    """Separable Catmull-Rom upscaling to a square out_side image."""
    img = check_image(img)
    if out_side < max(img.shape[0], img.shape[1]):
        raise ParameterError(f"out_side {out_side} smaller than input {img.shape[:2]}")
    return _resample(img, out_side, out_side, BICUBIC)


def add_gaussian_noise(img: np.ndarray, spec: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. zero-mean Gaussian noise of the given sigma, clamp to [0, 1]."""
    img = check_image(img)
    return np.clip(img + rng.normal(0.0, spec.sigma, size=img.shape), 0.0, 1.0)


def jpeg_compress(img: np.ndarray, spec: JpegSpec) -> np.ndarray:
    """8-bit JPEG encode/decode round trip at the given quality factor."""
    img = check_image(img)
    quantized = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    mode = "L" if img.shape[2] == 1 else "RGB"
    pil = PILImage.fromarray(quantized[:, :, 0] if mode == "L" else quantized, mode=mode)
    buf = io.BytesIO()
    try:
        pil.save(buf, format="JPEG", quality=int(spec.quality))
        buf.seek(0)
        decoded = np.asarray(PILImage.open(buf).convert(mode), dtype=np.float64)
    except OSError as exc:
        raise IOError(f"jpeg round trip failed: {exc}") from exc
    if decoded.ndim == 2:
        decoded = decoded[:, :, np.newaxis]
    return decoded / 255.0


def final_resample(img: np.ndarray, factor: int) -> np.ndarray:
    """Blocky resampling: nearest downscale by factor, nearest upscale back."""
    img = check_image(img)
    h, w = img.shape[:2]
    if factor not in (2, 4):
        raise ParameterError(f"final resample factor={factor!r} not in {{2, 4}}")
    if h % factor or w % factor:
        raise ParameterError(f"factor {factor} does not divide image size {h}x{w}")
    small = _resample(img, h // factor, w // factor, NEAREST)
    return _resample(small, h, w, NEAREST)


def load_image(path) -> np.ndarray:
    """Read a PNG/JPEG file as a float image in [0, 1]."""
    with PILImage.open(path) as pil:
        if pil.mode not in ("L", "RGB"):
            pil = pil.convert("RGB")
        arr = np.asarray(pil, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        arr = arr[:, :, np.newaxis]
    return arr


def save_image_png(path, img: np.ndarray) -> None:
    """Write the 8-bit quantization of a float image as PNG."""
    img = check_image(img)
    quantized = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    if img.shape[2] == 1:
        PILImage.fromarray(quantized[:, :, 0], mode="L").save(path, format="PNG")
    else:
        PILImage.fromarray(quantized, mode="RGB").save(path, format="PNG")
