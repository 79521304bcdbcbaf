"""Procedural image factory with controllable per-family artifacts.

NATURAL is a smoothed random field. The fake families layer one artifact on
top of the *same* base field (strength 0 reproduces NATURAL bit-for-bit):

* F_CHECKER: 2-pixel-period checkerboard (upsampling analog)
* F_SPECTRAL: low-pass plus radial ringing at a fixed frequency
* F_SEAM: per-8x8-block brightness offsets (block-seam analog)

Also implements the evaluation degradations (low-res round trip, Gaussian
blur, DCT-quantization compression) and the training augmentation pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .objective import FAKE, REAL
from .seeding import child_rng

__all__ = [
    "AugmentationPipeline",
    "AugmentationStage",
    "DegradationSpec",
    "FAMILIES",
    "GeneratorSpec",
    "ImageSample",
    "augment",
    "bilinear_resize",
    "default_augmentations",
    "degrade",
    "gaussian_blur",
    "generate_dataset",
    "generator_id",
    "jpeg_like",
]

FAMILIES = ("NATURAL", "F_CHECKER", "F_SPECTRAL", "F_SEAM")

_BLOCK = 8

# Standard luminance quantization table (applied per channel).
_QUANT_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)


def _dct_matrix(n: int = _BLOCK) -> np.ndarray:
    d = np.zeros((n, n))
    for u in range(n):
        c = math.sqrt(1.0 / n) if u == 0 else math.sqrt(2.0 / n)
        for x in range(n):
            d[u, x] = c * math.cos((2 * x + 1) * u * math.pi / (2 * n))
    return d


_DCT = _dct_matrix()


def generator_id(family: str) -> int:
    return FAMILIES.index(family)


@dataclass(frozen=True)
class GeneratorSpec:
    family: str
    strength: float = 0.5
    correlation_length: float = 2.0
    contrast: float = 0.8

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown generator family {self.family!r}")
        if not 0.0 <= self.strength <= 1.0:
            raise ValueError(f"strength must be in [0, 1], got {self.strength}")
        if self.family == "NATURAL" and self.strength != 0.0:
            raise ValueError("NATURAL must have zero artifact strength")

    @classmethod
    def natural(cls, correlation_length: float = 2.0, contrast: float = 0.8) -> "GeneratorSpec":
        return cls("NATURAL", 0.0, correlation_length, contrast)


@dataclass
class ImageSample:
    pixels: np.ndarray  # (H, W, C) float32 in [0, 1]
    label: int
    generator: str
    seed: int

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float32)


# ---------------------------------------------------------------------------
# pixel transforms


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian with radius ceil(3*sigma) and reflect padding."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return img.copy()
    radius = int(math.ceil(3 * sigma))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    kernel /= kernel.sum()
    out = img.astype(np.float64)
    for axis in (0, 1):
        pad = [(0, 0)] * out.ndim
        pad[axis] = (radius, radius)
        padded = np.pad(out, pad, mode="reflect")
        acc = np.zeros_like(out)
        for t, w in enumerate(kernel):
            sl = [slice(None)] * out.ndim
            sl[axis] = slice(t, t + out.shape[axis])
            acc += w * padded[tuple(sl)]
        out = acc
    return out.astype(img.dtype)


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-center bilinear sampling; same-size resize is the identity."""
    h, w = img.shape[:2]
    if (out_h, out_w) == (h, w):
        return img.copy()
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    img64 = img.astype(np.float64)
    top = img64[y0][:, x0] * (1 - wx) + img64[y0][:, x1] * wx
    bottom = img64[y1][:, x0] * (1 - wx) + img64[y1][:, x1] * wx
    return (top * (1 - wy) + bottom * wy).astype(img.dtype)


def _quality_scaled_table(quality: int) -> np.ndarray:
    if not 1 <= quality <= 100:
        raise ValueError(f"quality factor must be in [1, 100], got {quality}")
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    scaled = np.floor((_QUANT_TABLE * scale + 50.0) / 100.0)
    return np.clip(scaled, 1.0, 255.0)


def jpeg_like(img: np.ndarray, quality: int) -> np.ndarray:
    """Per-channel 8x8 DCT quantization round trip, clamped to [0, 1]."""
    q = _quality_scaled_table(quality)
    h, w = img.shape[:2]
    if h % _BLOCK or w % _BLOCK:
        raise ValueError(f"image side must be a multiple of {_BLOCK}, got {(h, w)}")
    gh, gw = h // _BLOCK, w // _BLOCK
    out = np.empty_like(img, dtype=np.float64)
    for c in range(img.shape[2]):
        x = img[:, :, c].astype(np.float64) * 255.0 - 128.0
        blocks = x.reshape(gh, _BLOCK, gw, _BLOCK).transpose(0, 2, 1, 3)
        coef = np.einsum("ux,ghxy,vy->ghuv", _DCT, blocks, _DCT)
        coef = np.round(coef / q) * q
        rec = np.einsum("ux,ghuv,vy->ghxy", _DCT, coef, _DCT)
        out[:, :, c] = (rec.transpose(0, 2, 1, 3).reshape(h, w) + 128.0) / 255.0
    return np.clip(out, 0.0, 1.0).astype(img.dtype)


# ---------------------------------------------------------------------------
# generation


def _base_field(rng, side: int, channels: int, spec: GeneratorSpec) -> np.ndarray:
    """Smooth correlated field; texture parameters jitter per sample.

    The per-sample draws come first so every family shares the same base
    field for a given (seed, index), and the natural class spans a range of
    texture sub-populations rather than one tight mode.
    """
    corr = rng.uniform(0.5 * spec.correlation_length, 1.5 * spec.correlation_length)
    contrast = rng.uniform(0.6 * spec.contrast, min(1.0, 1.3 * spec.contrast))
    noise = rng.standard_normal((side, side, channels))
    smooth = gaussian_blur(noise, corr)
    z = (smooth - smooth.mean()) / (smooth.std() + 1e-8)
    return np.clip(0.5 + 0.5 * contrast * z / 3.0, 0.0, 1.0)


def _checker_pattern(side: int) -> np.ndarray:
    yy, xx = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    return np.where((xx + yy) % 2 == 0, 1.0, -1.0)


# Additive amplitudes at strength 1. The spectral rings pulse a Nyquist
# checker carrier with a fixed radial period, so the two "upsampling-style"
# families share a frequency band the way real generator pipelines do; the
# seam family's block offsets are zero-mean (no shared band, the hard
# transfer case).
_CHECKER_AMP = 0.2
_RING_AMP = 0.18
_RING_PERIOD = 8.0
_RING_BLUR = 1.0
_SEAM_AMP = 0.25


def _radial_ringing(side: int, period: float = _RING_PERIOD) -> np.ndarray:
    c = side / 2.0
    yy, xx = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    r = np.sqrt((yy - c) ** 2 + (xx - c) ** 2)
    envelope = 0.5 * (1.0 + np.cos(2.0 * math.pi * r / period))
    return envelope * np.where((xx + yy) % 2 == 0, 1.0, -1.0)


def _apply_artifact(base: np.ndarray, spec: GeneratorSpec, rng) -> np.ndarray:
    s = spec.strength
    side = base.shape[0]
    if spec.family == "NATURAL":
        return base
    if spec.family == "F_CHECKER":
        out = base + s * _CHECKER_AMP * _checker_pattern(side)[:, :, None]
    elif spec.family == "F_SPECTRAL":
        lowpassed = gaussian_blur(base, s * 2.0 * _RING_BLUR)
        out = lowpassed + s * _RING_AMP * _radial_ringing(side)[:, :, None]
    elif spec.family == "F_SEAM":
        gh = gw = side // _BLOCK
        offsets = rng.uniform(-1.0, 1.0, size=(gh, gw))
        grid = np.repeat(np.repeat(offsets, _BLOCK, axis=0), _BLOCK, axis=1)
        out = base + s * _SEAM_AMP * grid[:, :, None]
    else:  # unreachable: spec validates family
        raise ValueError(f"unknown generator family {spec.family!r}")
    return np.clip(out, 0.0, 1.0)


def generate_dataset(
    spec: GeneratorSpec, count: int, seed: int, image_side: int = 32, channels: int = 3
) -> list:
    """Deterministic per (spec, seed, index); base fields are family-independent."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if image_side % _BLOCK:
        raise ValueError(f"image_side must be a multiple of {_BLOCK}")
    label = REAL if spec.family == "NATURAL" else FAKE
    samples = []
    for idx in range(count):
        base = _base_field(child_rng(seed, "image", idx, "base"), image_side, channels, spec)
        art_rng = child_rng(seed, "image", idx, "artifact")
        pixels = _apply_artifact(base, spec, art_rng)
        samples.append(ImageSample(pixels, label, spec.family, seed=idx))
    return samples


# ---------------------------------------------------------------------------
# degradation


@dataclass(frozen=True)
class DegradationSpec:
    kind: str  # LOW_RES | JPEG_LIKE | GAUSS_BLUR
    parameter: float

    def __post_init__(self):
        if self.kind == "LOW_RES":
            if int(self.parameter) < 1:
                raise ValueError(f"LOW_RES target side must be >= 1, got {self.parameter}")
        elif self.kind == "JPEG_LIKE":
            if not 1 <= self.parameter <= 100:
                raise ValueError(f"JPEG quality must be in [1, 100], got {self.parameter}")
        elif self.kind == "GAUSS_BLUR":
            if self.parameter < 0:
                raise ValueError(f"blur sigma must be >= 0, got {self.parameter}")
        else:
            raise ValueError(f"unknown degradation kind {self.kind!r}")

    def tag(self) -> str:
        if self.kind == "LOW_RES":
            return f"lr{int(self.parameter)}"
        if self.kind == "JPEG_LIKE":
            return f"jpeg{int(self.parameter)}"
        return f"blur{self.parameter:g}"


def degrade(sample: ImageSample, spec: DegradationSpec) -> ImageSample:
    img = sample.pixels
    if spec.kind == "LOW_RES":
        side = int(spec.parameter)
        small = bilinear_resize(img, side, side)
        out = bilinear_resize(small, img.shape[0], img.shape[1])
    elif spec.kind == "GAUSS_BLUR":
        out = gaussian_blur(img, float(spec.parameter))
    else:
        out = jpeg_like(img, int(spec.parameter))
    return ImageSample(out, sample.label, sample.generator, sample.seed)


# ---------------------------------------------------------------------------
# augmentation


@dataclass(frozen=True)
class AugmentationStage:
    kind: str
    probability: float
    params: tuple = ()

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"probability must be in [0, 1], got {self.probability}")

    def param_map(self) -> dict:
        return dict(self.params)


@dataclass(frozen=True)
class AugmentationPipeline:
    stages: tuple
    seed: int = 0


def default_augmentations(probability: float = 0.2, seed: int = 0) -> AugmentationPipeline:
    stages = (
        AugmentationStage("crop_resize", probability, (("min_side_frac", 0.8),)),
        AugmentationStage("gaussian_noise", probability, (("max_sigma", 0.05),)),
        AugmentationStage("gaussian_blur", probability, (("min_sigma", 0.3), ("max_sigma", 1.0))),
        AugmentationStage("rotation", probability, (("max_degrees", 15.0),)),
        AugmentationStage("jpeg_random", probability, (("min_quality", 40), ("max_quality", 95))),
        AugmentationStage(
            "brightness_contrast",
            probability,
            (("max_brightness", 0.1), ("min_contrast", 0.8), ("max_contrast", 1.2)),
        ),
        AugmentationStage("grayscale", probability),
    )
    return AugmentationPipeline(stages, seed)


def _rotate(img: np.ndarray, degrees: float) -> np.ndarray:
    """Inverse-map bilinear rotation about the center, clamped at the edges."""
    h, w = img.shape[:2]
    theta = math.radians(degrees)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    src_y = cy + (yy - cy) * math.cos(theta) - (xx - cx) * math.sin(theta)
    src_x = cx + (yy - cy) * math.sin(theta) + (xx - cx) * math.cos(theta)
    src_y = np.clip(src_y, 0, h - 1)
    src_x = np.clip(src_x, 0, w - 1)
    y0 = np.floor(src_y).astype(np.int64)
    x0 = np.floor(src_x).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (src_y - y0)[:, :, None]
    wx = (src_x - x0)[:, :, None]
    img64 = img.astype(np.float64)
    top = img64[y0, x0] * (1 - wx) + img64[y0, x1] * wx
    bottom = img64[y1, x0] * (1 - wx) + img64[y1, x1] * wx
    return (top * (1 - wy) + bottom * wy).astype(img.dtype)


def _apply_stage(img: np.ndarray, stage: AugmentationStage, rng) -> np.ndarray:
    p = stage.param_map()
    if stage.kind == "crop_resize":
        h, w = img.shape[:2]
        frac = rng.uniform(p.get("min_side_frac", 0.8), 1.0)
        side = max(1, int(round(frac * h)))
        top = int(rng.integers(0, h - side + 1))
        left = int(rng.integers(0, w - side + 1))
        return bilinear_resize(img[top : top + side, left : left + side], h, w)
    if stage.kind == "gaussian_noise":
        sigma = rng.uniform(0.0, p.get("max_sigma", 0.05))
        return img + sigma * rng.standard_normal(img.shape).astype(img.dtype)
    if stage.kind == "gaussian_blur":
        sigma = rng.uniform(p.get("min_sigma", 0.3), p.get("max_sigma", 1.0))
        return gaussian_blur(img, sigma)
    if stage.kind == "rotation":
        degrees = rng.uniform(-p.get("max_degrees", 15.0), p.get("max_degrees", 15.0))
        return _rotate(img, degrees)
    if stage.kind == "jpeg_random":
        quality = int(rng.integers(p.get("min_quality", 40), p.get("max_quality", 95) + 1))
        return jpeg_like(img, quality)
    if stage.kind == "brightness_contrast":
        b = rng.uniform(-p.get("max_brightness", 0.1), p.get("max_brightness", 0.1))
        c = rng.uniform(p.get("min_contrast", 0.8), p.get("max_contrast", 1.2))
        return (img - 0.5) * c + 0.5 + b
    if stage.kind == "grayscale":
        gray = img.mean(axis=2, keepdims=True)
        return np.repeat(gray, img.shape[2], axis=2)
    raise ValueError(f"unknown augmentation stage {stage.kind!r}")


def augment(sample: ImageSample, pipeline: AugmentationPipeline, draw_seed: int) -> ImageSample:
    """Apply each stage independently with its probability; output in [0, 1]."""
    img = sample.pixels
    changed = False
    for index, stage in enumerate(pipeline.stages):
        rng = child_rng(pipeline.seed, "augment", draw_seed, index, stage.kind)
        if rng.uniform() < stage.probability:
            img = _apply_stage(img, stage, rng)
            changed = True
    if not changed:
        return ImageSample(sample.pixels.copy(), sample.label, sample.generator, sample.seed)
    return ImageSample(
        np.clip(img, 0.0, 1.0).astype(np.float32), sample.label, sample.generator, sample.seed
    )
