"""Three-flavour stochastic degradation pipelines with replayable traces.

A pipeline plan is sampled from a per-image sub-seed without touching pixels,
recorded as a list of JSON-safe op dicts, and executed separately. Replaying
a recorded trace therefore reproduces the degraded image bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from . import kernels
from .errors import ParameterError
from .imageops import (
    BICUBIC,
    BILINEAR,
    NEAREST,
    RESAMPLE_METHODS,
    DownscaleSpec,
    JpegSpec,
    NoiseSpec,
    add_gaussian_noise,
    check_image,
    convolve,
    downscale,
    final_resample,
    jpeg_compress,
    upscale_bicubic,
)

SIMPLE = "simple"
DIVERSE = "diverse"
DIVERSE_PLUS = "diverse_plus"
PIPELINE_KINDS = (SIMPLE, DIVERSE, DIVERSE_PLUS)

PIPELINE_SIDE = 384

OP_BLUR = "blur"
OP_DOWNSCALE = "downscale"
OP_NOISE = "noise"
OP_JPEG = "jpeg"
OP_UPSCALE = "upscale"
OP_FINAL = "final_resample"

_SHUFFLED_SLOTS = (OP_BLUR, OP_DOWNSCALE, OP_NOISE, OP_JPEG)
_SEED_BOUND = 2**63


def normalize_kind(name: str) -> str:
    kind = str(name).replace("-", "_").lower()
    if kind not in PIPELINE_KINDS:
        raise ParameterError(f"unknown pipeline {name!r}, expected one of {PIPELINE_KINDS}")
    return kind


@dataclass(frozen=True)
class PipelineRanges:
    """Sampling ranges for every stochastic pipeline parameter."""

    kernel_ranges: dict = field(default_factory=lambda: kernels.default_kernel_ranges())
    noise_sigma: tuple = (4e-3, 1e-2)
    jpeg_quality: tuple = (30, 95)
    downscale_factors: tuple = (2, 4)
    downscale_methods: tuple = (BILINEAR, NEAREST)
    simple_downscale_method: str = BICUBIC
    final_factors: tuple = (2, 4)

    def __post_init__(self):
        lo, hi = self.noise_sigma
        if not (0.0 < lo <= hi):
            raise ParameterError(f"bad noise sigma range {self.noise_sigma!r}")
        qlo, qhi = self.jpeg_quality
        if not (30 <= qlo <= qhi <= 95):
            raise ParameterError(f"bad jpeg quality range {self.jpeg_quality!r}")
        for fac in tuple(self.downscale_factors) + tuple(self.final_factors):
            if fac not in (2, 4):
                raise ParameterError(f"bad resample factor {fac!r}, must be 2 or 4")
        for meth in tuple(self.downscale_methods) + (self.simple_downscale_method,):
            if meth not in RESAMPLE_METHODS:
                raise ParameterError(f"unknown resample method {meth!r}")
        if not self.downscale_factors or not self.final_factors or not self.downscale_methods:
            raise ParameterError("factor/method choice lists must be non-empty")


DEFAULT_RANGES = PipelineRanges()

_TOML_SCALAR_KEYS = {
    "noise_sigma",
    "jpeg_quality",
    "downscale_factors",
    "downscale_methods",
    "simple_downscale_method",
    "final_factors",
}


def load_ranges(path) -> PipelineRanges:
    """Read range overrides from a TOML file, rejecting unknown keys.

    Top-level keys mirror the PipelineRanges fields; kernel parameter ranges
    live in [kernels.<family>] tables as two-element arrays.
    """
    try:
        import tomllib  # py311+
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    kranges = kernels.default_kernel_ranges()
    kwargs = {}
    for key, value in data.items():
        if key == "kernels":
            for family, overrides in value.items():
                if family not in kranges:
                    raise ParameterError(f"unknown kernel family {family!r} in {path}")
                for pname, bounds in overrides.items():
                    if pname not in kranges[family]:
                        raise ParameterError(f"unknown range key {family}.{pname!r} in {path}")
                    if not isinstance(bounds, (list, tuple)) or len(bounds) != 2:
                        raise ParameterError(f"{family}.{pname} must be a [lo, hi] pair")
                    kranges[family][pname] = (bounds[0], bounds[1])
        elif key in _TOML_SCALAR_KEYS:
            kwargs[key] = tuple(value) if isinstance(value, list) else value
        else:
            raise ParameterError(f"unknown range key {key!r} in {path}")
    return PipelineRanges(kernel_ranges=kranges, **kwargs)


def derive_subseed(seed: int, image_id: str) -> int:
    """Stable per-image sub-seed from the run seed and the image id."""
    payload = f"{int(seed)}\x1f{image_id}".encode("utf-8")
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "little")


def _draw_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, _SEED_BOUND))


def _choice(rng: np.random.Generator, options) -> object:
    return options[int(rng.integers(len(options)))]


def _blur_params(spec) -> dict:
    if isinstance(spec, kernels.GaussianBlurSpec):
        return {
            "family": kernels.GAUSSIAN,
            "side": int(spec.side),
            "sigma_x": float(spec.sigma_x),
            "sigma_y": float(spec.sigma_y),
            "theta": float(spec.theta),
        }
    if isinstance(spec, kernels.GeneralizedGaussianSpec):
        return {
            "family": kernels.GENERALIZED_GAUSSIAN,
            "side": int(spec.side),
            "sigma_x": float(spec.sigma_x),
            "sigma_y": float(spec.sigma_y),
            "beta": float(spec.beta),
            "theta": float(spec.theta),
            "noise_sigma": float(spec.noise_sigma),
            "noise_enabled": bool(spec.noise_enabled),
        }
    if isinstance(spec, kernels.MotionBlurSpec):
        return {
            "family": kernels.MOTION,
            "side": int(spec.side),
            "theta": float(spec.theta),
            "direction": float(spec.direction),
            "shift": [int(spec.shift[0]), int(spec.shift[1])],
        }
    if isinstance(spec, kernels.DefocusSpec):
        return {
            "family": kernels.DEFOCUS,
            "radius": int(spec.radius),
            "gauss_sigma": float(spec.gauss_sigma),
        }
    raise ParameterError(f"unknown blur spec {type(spec).__name__}")


def blur_spec_from_params(params: Mapping) -> object:
    family = params["family"]
    if family == kernels.GAUSSIAN:
        return kernels.GaussianBlurSpec(
            side=params["side"], sigma_x=params["sigma_x"],
            sigma_y=params["sigma_y"], theta=params["theta"])
    if family == kernels.GENERALIZED_GAUSSIAN:
        return kernels.GeneralizedGaussianSpec(
            side=params["side"], sigma_x=params["sigma_x"], sigma_y=params["sigma_y"],
            beta=params["beta"], theta=params["theta"],
            noise_sigma=params["noise_sigma"], noise_enabled=params["noise_enabled"])
    if family == kernels.MOTION:
        return kernels.MotionBlurSpec(
            side=params["side"], theta=params["theta"],
            direction=params["direction"], shift=tuple(params["shift"]))
    if family == kernels.DEFOCUS:
        return kernels.DefocusSpec(radius=params["radius"], gauss_sigma=params["gauss_sigma"])
    raise ParameterError(f"unknown blur family {family!r}")


def _plan_blur(rng: np.random.Generator, ranges: PipelineRanges, family: str) -> dict:
    spec = kernels.sample_blur_spec(family, rng, ranges.kernel_ranges)
    params = _blur_params(spec)
    if family == kernels.GENERALIZED_GAUSSIAN and params["noise_enabled"]:
        params["kernel_seed"] = _draw_seed(rng)
    return {"name": OP_BLUR, "params": params}


def _plan_downscale(rng, ranges, factor=None, method=None) -> dict:
    if factor is None:
        factor = _choice(rng, ranges.downscale_factors)
    if method is None:
        method = _choice(rng, ranges.downscale_methods)
    return {"name": OP_DOWNSCALE, "params": {"factor": int(factor), "method": str(method)}}


def _plan_noise(rng, ranges) -> dict:
    sigma = float(rng.uniform(*ranges.noise_sigma))
    return {"name": OP_NOISE, "params": {"sigma": sigma, "seed": _draw_seed(rng)}}


def _plan_jpeg(rng, ranges) -> dict:
    qlo, qhi = ranges.jpeg_quality
    return {"name": OP_JPEG, "params": {"quality": int(rng.integers(qlo, qhi + 1))}}


def plan_pipeline(kind: str, sub_seed: int, ranges: PipelineRanges | None = None) -> list[dict]:
    """Sample the full op list for one image without touching any pixels."""
    kind = normalize_kind(kind)
    ranges = DEFAULT_RANGES if ranges is None else ranges
    rng = np.random.default_rng(int(sub_seed))
    ops: list[dict] = []
    if kind == SIMPLE:
        ops.append(_plan_blur(rng, ranges, kernels.GAUSSIAN))
        ops.append(_plan_downscale(rng, ranges, method=ranges.simple_downscale_method))
        ops.append(_plan_noise(rng, ranges))
    elif kind == DIVERSE:
        combos = [(f, m) for f in ranges.downscale_factors for m in ranges.downscale_methods]
        idx = int(rng.integers(len(kernels.BLUR_FAMILIES) + len(combos)))
        if idx < len(kernels.BLUR_FAMILIES):
            ops.append(_plan_blur(rng, ranges, kernels.BLUR_FAMILIES[idx]))
        else:
            factor, method = combos[idx - len(kernels.BLUR_FAMILIES)]
            ops.append(_plan_downscale(rng, ranges, factor=factor, method=method))
        ops.append(_plan_noise(rng, ranges))
        ops.append(_plan_jpeg(rng, ranges))
    else:
        order = [(_SHUFFLED_SLOTS[i]) for i in rng.permutation(len(_SHUFFLED_SLOTS))]
        family = kernels.BLUR_FAMILIES[int(rng.integers(len(kernels.BLUR_FAMILIES)))]
        planned = {
            OP_BLUR: _plan_blur(rng, ranges, family),
            OP_DOWNSCALE: _plan_downscale(rng, ranges),
            OP_NOISE: _plan_noise(rng, ranges),
            OP_JPEG: _plan_jpeg(rng, ranges),
        }
        ops.extend(planned[slot] for slot in order)
    ops.append({"name": OP_UPSCALE, "params": {"out_side": PIPELINE_SIDE}})
    ops.append({"name": OP_FINAL,
                "params": {"factor": int(_choice(rng, ranges.final_factors))}})
    return ops


def execute_op(img: np.ndarray, op: Mapping) -> np.ndarray:
    """Apply one recorded op to an image."""
    name = op["name"]
    params = op["params"]
    if name == OP_BLUR:
        spec = blur_spec_from_params(params)
        krng = None
        if params.get("noise_enabled") and "kernel_seed" in params:
            krng = np.random.default_rng(int(params["kernel_seed"]))
        kernel = kernels.make_kernel(spec, rng=krng)
        return convolve(img, kernel)
    if name == OP_DOWNSCALE:
        return downscale(img, DownscaleSpec(factor=params["factor"], method=params["method"]))
    if name == OP_NOISE:
        rng = np.random.default_rng(int(params["seed"]))
        return add_gaussian_noise(img, NoiseSpec(sigma=params["sigma"]), rng)
    if name == OP_JPEG:
        return jpeg_compress(img, JpegSpec(quality=int(params["quality"])))
    if name == OP_UPSCALE:
        return upscale_bicubic(img, int(params["out_side"]))
    if name == OP_FINAL:
        return final_resample(img, int(params["factor"]))
    raise ParameterError(f"unknown op {name!r}")


def execute_trace(img: np.ndarray, ops: Iterable[Mapping]) -> np.ndarray:
    out = check_image(img)
    for op in ops:
        out = execute_op(out, op)
    return out


@dataclass(frozen=True)
class OpTrace:
    """Replayable record of one degraded image."""

    pipeline: str
    sub_seed: int
    ops: tuple
    image_id: str | None = None

    def to_dict(self) -> dict:
        rec = {"pipeline": self.pipeline, "sub_seed": int(self.sub_seed),
               "ops": [dict(op) for op in self.ops]}
        if self.image_id is not None:
            rec["image_id"] = self.image_id
        return rec

    @classmethod
    def from_dict(cls, rec: Mapping) -> "OpTrace":
        return cls(pipeline=normalize_kind(rec["pipeline"]), sub_seed=int(rec["sub_seed"]),
                   ops=tuple(rec["ops"]), image_id=rec.get("image_id"))


def apply_pipeline(img: np.ndarray, kind: str, seed: int,
                   image_id: str | None = None,
                   ranges: PipelineRanges | None = None) -> tuple[np.ndarray, OpTrace]:
    """Degrade one full-size image; returns the result and its replay trace.

    `seed` is used directly as the sampling sub-seed; batch callers derive it
    per image via derive_subseed(run_seed, image_id).
    """
    img = check_image(img)
    if img.shape[0] != PIPELINE_SIDE or img.shape[1] != PIPELINE_SIDE:
        raise ParameterError(
            f"pipelines expect {PIPELINE_SIDE}x{PIPELINE_SIDE} input, got {img.shape[:2]}")
    kind = normalize_kind(kind)
    ops = plan_pipeline(kind, seed, ranges)
    out = execute_trace(img, ops)
    return out, OpTrace(pipeline=kind, sub_seed=int(seed), ops=tuple(ops), image_id=image_id)


def write_traces(path, traces: Iterable[OpTrace]) -> None:
    """Write traces as JSON lines sorted by image id for stable bytes."""
    recs = sorted((t.to_dict() for t in traces), key=lambda r: str(r.get("image_id", "")))
    with open(path, "w", encoding="utf-8") as fh:
        for rec in recs:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_traces(path) -> list[OpTrace]:
    traces = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                traces.append(OpTrace.from_dict(json.loads(line)))
    return traces


def _degrade_one(args) -> tuple[str, np.ndarray, OpTrace]:
    image_id, img, kind, sub_seed, ranges = args
    out, trace = apply_pipeline(img, kind, sub_seed, image_id=image_id, ranges=ranges)
    return image_id, out, trace


def degrade_batch(images: Mapping[str, np.ndarray], kind: str, seed: int,
                  workers: int = 1,
                  ranges: PipelineRanges | None = None) -> dict[str, tuple[np.ndarray, OpTrace]]:
    """Degrade a batch of images; results are independent of worker count.

    Each image gets its own sub-seed derived from (seed, image_id), so the
    partition of work across processes cannot change any output.
    """
    kind = normalize_kind(kind)
    jobs = [(image_id, images[image_id], kind, derive_subseed(seed, image_id), ranges)
            for image_id in sorted(images)]
    results: dict[str, tuple[np.ndarray, OpTrace]] = {}
    if workers <= 1:
        for job in jobs:
            image_id, out, trace = _degrade_one(job)
            results[image_id] = (out, trace)
        return results
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        for image_id, out, trace in pool.map(_degrade_one, jobs):
            results[image_id] = (out, trace)
    return results
