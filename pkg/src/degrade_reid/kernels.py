"""Blur kernel constructors: Gaussian, generalized Gaussian, motion and defocus.

All constructors return an odd-sided 2-D float64 array with nonnegative
weights summing to 1. Array element ``k[i, j]`` corresponds to the spatial
offset ``(x, y) = (j - t, i - t)`` from the kernel center, where
``t = (side - 1) // 2`` (x runs along columns, y along rows).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from .errors import ParameterError

TWO_PI = 2.0 * math.pi

GAUSSIAN = "gaussian"
GENERALIZED_GAUSSIAN = "generalized_gaussian"
MOTION = "motion"
DEFOCUS = "defocus"
BLUR_FAMILIES = (GAUSSIAN, GENERALIZED_GAUSSIAN, MOTION, DEFOCUS)

# Sampling ranges for each kernel family. Integer side/radius values are
# drawn uniformly over the odd integers of their range.
DEFAULT_KERNEL_RANGES = {
    GAUSSIAN: {"side": (3, 21), "sigma": (0.1, 2.8), "theta": (0.0, TWO_PI)},
    GENERALIZED_GAUSSIAN: {
        "side": (3, 21),
        "sigma": (0.5, 8.0),
        "beta": (0.5, 8.0),
        "theta": (0.0, TWO_PI),
        "noise_sigma": (0.9, 1.1),
    },
    MOTION: {"side": (3, 21), "theta": (0.0, TWO_PI), "direction": (-1.0, 1.0)},
    DEFOCUS: {"radius": (3, 21), "gauss_sigma": (0.1, 0.5)},
}


def default_kernel_ranges() -> dict:
    """Fresh deep copy of the default sampling ranges, safe to mutate."""
    return {family: dict(params) for family, params in DEFAULT_KERNEL_RANGES.items()}


def _check_range(name: str, value: float, lo: float, hi: float) -> None:
    if not (lo <= value <= hi):
        raise ParameterError(f"{name}={value!r} outside [{lo}, {hi}]")


def _check_odd_side(name: str, value: int, lo: int = 3, hi: int = 21) -> None:
    if not isinstance(value, (int, np.integer)):
        raise ParameterError(f"{name}={value!r} is not an integer")
    if value < lo or value > hi or value % 2 == 0:
        raise ParameterError(f"{name}={value} must be an odd integer in [{lo}, {hi}]")


@dataclass(frozen=True)
class GaussianBlurSpec:
    """Anisotropic Gaussian kernel: axis sigmas plus a rotation angle."""

    side: int = 9
    sigma_x: float = 1.0
    sigma_y: float = 1.0
    theta: float = 0.0

    def __post_init__(self):
        _check_odd_side("side", self.side)
        _check_range("sigma_x", self.sigma_x, 0.1, 2.8)
        _check_range("sigma_y", self.sigma_y, 0.1, 2.8)
        if not (0.0 <= self.theta < TWO_PI):
            raise ParameterError(f"theta={self.theta!r} outside [0, 2*pi)")


@dataclass(frozen=True)
class GeneralizedGaussianSpec:
    """Generalized Gaussian kernel; beta trades box-like against peaked shapes.

    ``noise_sigma`` bounds the per-weight multiplicative kernel noise: each
    weight is scaled by an independent uniform draw from the symmetric
    interval around 1 whose endpoint is ``noise_sigma`` (1.1 gives the full
    [0.9, 1.1] interval).
    """

    side: int = 9
    sigma_x: float = 2.0
    sigma_y: float = 2.0
    beta: float = 1.0
    theta: float = 0.0
    noise_sigma: float = 1.1
    noise_enabled: bool = True

    def __post_init__(self):
        _check_odd_side("side", self.side)
        _check_range("sigma_x", self.sigma_x, 0.5, 8.0)
        _check_range("sigma_y", self.sigma_y, 0.5, 8.0)
        _check_range("beta", self.beta, 0.5, 8.0)
        if not (0.0 <= self.theta < TWO_PI):
            raise ParameterError(f"theta={self.theta!r} outside [0, 2*pi)")
        _check_range("noise_sigma", self.noise_sigma, 0.9, 1.1)


@dataclass(frozen=True)
class MotionBlurSpec:
    """Line-shaped kernel along angle ``theta``.

    ``direction`` slides the line relative to the center: 0 centers it,
    +/-1 puts all of it on one side. ``shift`` offsets the rasterized line
    by whole pixels; it must keep every line pixel inside the grid.
    """

    side: int = 9
    theta: float = 0.0
    direction: float = 0.0
    shift: tuple[int, int] = (0, 0)

    def __post_init__(self):
        _check_odd_side("side", self.side)
        if not (0.0 <= self.theta < TWO_PI):
            raise ParameterError(f"theta={self.theta!r} outside [0, 2*pi)")
        _check_range("direction", self.direction, -1.0, 1.0)
        sx, sy = self.shift
        if sx != int(sx) or sy != int(sy):
            raise ParameterError(f"shift={self.shift!r} must be integer")
        object.__setattr__(self, "shift", (int(sx), int(sy)))


@dataclass(frozen=True)
class DefocusSpec:
    """Disc kernel of the given radius smoothed by a small Gaussian."""

    radius: int = 5
    gauss_sigma: float = 0.3

    def __post_init__(self):
        if not isinstance(self.radius, (int, np.integer)) or not (3 <= self.radius <= 21):
            raise ParameterError(f"radius={self.radius!r} must be an integer in [3, 21]")
        _check_range("gauss_sigma", self.gauss_sigma, 0.1, 0.5)

    @property
    def companion_side(self) -> int:
        # side of the smoothing Gaussian switches at radius 8
        return 3 if self.radius <= 8 else 5


def _offset_grid(side: int) -> tuple[np.ndarray, np.ndarray]:
    t = (side - 1) // 2
    offsets = np.arange(-t, t + 1, dtype=np.float64)
    x = offsets[np.newaxis, :]  # column offset
    y = offsets[:, np.newaxis]  # row offset
    return np.broadcast_to(x, (side, side)), np.broadcast_to(y, (side, side))


def _quadratic_form(side: int, sigma_x: float, sigma_y: float, theta: float) -> np.ndarray:
    """Evaluate C^T R^T(theta) Sigma^-1 R(theta) C on the offset lattice."""
    x, y = _offset_grid(side)
    c, s = math.cos(theta), math.sin(theta)
    a = 1.0 / sigma_x**2
    b = 1.0 / sigma_y**2
    # M = R^T diag(a, b) R
    m00 = a * c * c + b * s * s
    m11 = a * s * s + b * c * c
    m01 = (a - b) * s * c
    return m00 * x * x + 2.0 * m01 * x * y + m11 * y * y


def _normalize(weights: np.ndarray) -> np.ndarray:
    total = weights.sum()
    if total <= 0:
        raise ParameterError("kernel weights sum to zero, cannot normalize")
    return weights / total


def make_gaussian_kernel(spec: GaussianBlurSpec) -> np.ndarray:
    """Rotated anisotropic Gaussian kernel, normalized to sum 1."""
    q = _quadratic_form(spec.side, spec.sigma_x, spec.sigma_y, spec.theta)
    return _normalize(np.exp(-0.5 * q))


def make_generalized_gaussian_kernel(
    spec: GeneralizedGaussianSpec, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Generalized Gaussian kernel exp(-1/2 q^beta), optionally noise-perturbed.

    With ``noise_enabled`` each weight is multiplied by an independent
    uniform draw before normalization; ``rng`` is then required.
    """
    q = _quadratic_form(spec.side, spec.sigma_x, spec.sigma_y, spec.theta)
    weights = np.exp(-0.5 * q**spec.beta)
    if spec.noise_enabled:
        if rng is None:
            raise ParameterError("noise_enabled kernel requires an rng")
        lo = min(spec.noise_sigma, 2.0 - spec.noise_sigma)
        hi = max(spec.noise_sigma, 2.0 - spec.noise_sigma)
        weights = weights * rng.uniform(lo, hi, size=weights.shape)
        weights = np.maximum(weights, 0.0)
    return _normalize(weights)


def _motion_cells(spec: MotionBlurSpec) -> tuple[np.ndarray, np.ndarray]:
    """Nearest lattice cells (ix, iy) of the k line sample points, unshifted."""
    k = spec.side
    t_minus = -(k - 1) / 2.0 * (1.0 - spec.direction)
    t_plus = (k - 1) / 2.0 * (1.0 + spec.direction)
    n = np.arange(k, dtype=np.float64)
    t_n = t_minus + n / (k - 1) * (t_plus - t_minus)
    ux, uy = math.cos(spec.theta), math.sin(spec.theta)
    ix = np.rint(t_n * ux).astype(np.int64)
    iy = np.rint(t_n * uy).astype(np.int64)
    return ix, iy


def make_motion_kernel(spec: MotionBlurSpec) -> np.ndarray:
    """Rasterized motion line: k samples splat to nearest cells, each 1/k."""
    k = spec.side
    t = (k - 1) // 2
    ix, iy = _motion_cells(spec)
    ix = ix + spec.shift[0]
    iy = iy + spec.shift[1]
    if ix.min() < -t or ix.max() > t or iy.min() < -t or iy.max() > t:
        raise ParameterError(
            f"motion line leaves the {k}x{k} grid after shift {spec.shift}"
        )
    weights = np.zeros((k, k), dtype=np.float64)
    np.add.at(weights, (iy + t, ix + t), 1.0 / k)
    return _normalize(weights)


def valid_motion_shifts(spec: MotionBlurSpec) -> tuple[range, range]:
    """Integer shift ranges (x, y) that keep the rasterized line in-grid."""
    t = (spec.side - 1) // 2
    ix, iy = _motion_cells(spec)
    return (
        range(-t - int(ix.min()), t - int(ix.max()) + 1),
        range(-t - int(iy.min()), t - int(iy.max()) + 1),
    )


def make_defocus_kernel(spec: DefocusSpec) -> np.ndarray:
    """Disc of the given radius convolved (full) with a small Gaussian."""
    r = spec.radius
    x, y = _offset_grid(2 * r + 1)
    disc = np.where(x * x + y * y <= r * r, 1.0 / (math.pi * r * r), 0.0)
    gauss_q = _quadratic_form(spec.companion_side, spec.gauss_sigma, spec.gauss_sigma, 0.0)
    gauss = _normalize(np.exp(-0.5 * gauss_q))
    return _normalize(convolve2d(disc, gauss, mode="full"))


def make_kernel(spec, rng: np.random.Generator | None = None) -> np.ndarray:
    """Dispatch on the spec type."""
    if isinstance(spec, GaussianBlurSpec):
        return make_gaussian_kernel(spec)
    if isinstance(spec, GeneralizedGaussianSpec):
        return make_generalized_gaussian_kernel(spec, rng)
    if isinstance(spec, MotionBlurSpec):
        return make_motion_kernel(spec)
    if isinstance(spec, DefocusSpec):
        return make_defocus_kernel(spec)
    raise ParameterError(f"unknown kernel spec type {type(spec).__name__}")


def _sample_odd(rng: np.random.Generator, lo: int, hi: int) -> int:
    odd = [v for v in range(int(lo), int(hi) + 1) if v % 2 == 1]
    if not odd:
        raise ParameterError(f"no odd integers in [{lo}, {hi}]")
    return odd[int(rng.integers(len(odd)))]


def sample_blur_spec(family: str, rng: np.random.Generator, ranges: dict | None = None):
    """Draw a random kernel spec of the given family, uniform over its ranges."""
    if family not in BLUR_FAMILIES:
        raise ParameterError(f"unknown blur family {family!r}")
    r = (ranges or DEFAULT_KERNEL_RANGES)[family]
    if family == GAUSSIAN:
        return GaussianBlurSpec(
            side=_sample_odd(rng, *r["side"]),
            sigma_x=float(rng.uniform(*r["sigma"])),
            sigma_y=float(rng.uniform(*r["sigma"])),
            theta=float(rng.uniform(*r["theta"])) % TWO_PI,
        )
    if family == GENERALIZED_GAUSSIAN:
        return GeneralizedGaussianSpec(
            side=_sample_odd(rng, *r["side"]),
            sigma_x=float(rng.uniform(*r["sigma"])),
            sigma_y=float(rng.uniform(*r["sigma"])),
            beta=float(rng.uniform(*r["beta"])),
            theta=float(rng.uniform(*r["theta"])) % TWO_PI,
            noise_sigma=float(rng.uniform(*r["noise_sigma"])),
            noise_enabled=True,
        )
    if family == MOTION:
        base = MotionBlurSpec(
            side=_sample_odd(rng, *r["side"]),
            theta=float(rng.uniform(*r["theta"])) % TWO_PI,
            direction=float(rng.uniform(*r["direction"])),
            shift=(0, 0),
        )
        xs, ys = valid_motion_shifts(base)
        shift = (
            xs[int(rng.integers(len(xs)))],
            ys[int(rng.integers(len(ys)))],
        )
        return MotionBlurSpec(base.side, base.theta, base.direction, shift)
    return DefocusSpec(
        radius=_sample_odd(rng, *r["radius"]),
        gauss_sigma=float(rng.uniform(*r["gauss_sigma"])),
    )
