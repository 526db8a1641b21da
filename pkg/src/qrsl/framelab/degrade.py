from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .raster import resample_bilinear, to_uint8

OCCLUSION_GRAY = 128


@dataclass(frozen=True)
class DegradationSpec:
    gaussian_sigma: float = 0.0
    motion_len: float = 0.0
    motion_angle: float = 0.0
    occlusion_fraction: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not self.gaussian_sigma >= 0:
            raise ValueError("gaussian_sigma must be >= 0")
        if not self.motion_len >= 0:
            raise ValueError("motion_len must be >= 0")
        if not math.isfinite(self.motion_angle):
            raise ValueError("motion_angle must be finite")
        if not 0 <= self.occlusion_fraction <= 1:
            raise ValueError("occlusion_fraction must be in [0, 1]")
        if not 0 < self.scale <= 1:
            raise ValueError("scale must be in (0, 1]")

    @property
    def is_identity(self):
        return (self.gaussian_sigma == 0 and self.motion_len == 0
                and self.occlusion_fraction == 0 and self.scale == 1)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: float(v) for k, v in d.items()})


def gaussian_kernel(sigma):
    radius = max(1, math.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-x * x / (2 * sigma * sigma))
    return k / k.sum()


def motion_kernel(length, angle):
    """Normalised line kernel of ``length`` px along ``angle`` (radians, CCW from +x)."""
    half = math.ceil(length / 2)
    size = 2 * half + 1
    k = np.zeros((size, size))
    n = max(2, math.ceil(length * 8))
    t = np.linspace(-length / 2, length / 2, n)
    xs = half + t * math.cos(angle)
    ys = half - t * math.sin(angle)
    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    fx = xs - x0
    fy = ys - y0
    for dy, dx, w in ((0, 0, (1 - fx) * (1 - fy)), (0, 1, fx * (1 - fy)),
                      (1, 0, (1 - fx) * fy), (1, 1, fx * fy)):
        yy = np.clip(y0 + dy, 0, size - 1)
        xx = np.clip(x0 + dx, 0, size - 1)
        np.add.at(k, (yy, xx), w)
    return k / k.sum()


def occlusion_rect(shape, fraction, rng):
    """(x, y, w, h) of a rectangle covering ``fraction`` of the raster area."""
    H, W = shape
    if fraction >= 1:
        return 0, 0, W, H
    area = fraction * W * H
    aspect = math.exp(rng.uniform(math.log(0.5), math.log(2.0)))
    w = math.sqrt(area * aspect)
    h = area / w
    if w > W:
        w, h = W, area / W
    if h > H:
        h, w = H, min(W, area / H)
    w = max(0, min(W, round(w)))
    h = max(0, min(H, round(h)))
    x = int(rng.integers(0, W - w + 1))
    y = int(rng.integers(0, H - h + 1))
    return x, y, w, h


def degrade(raster, spec, seed=0):
    """Apply blur, resolution loss and occlusion, in that order.

    Deterministic for a fixed ``seed``; an identity spec returns an exact copy.
    """
    out = np.asarray(raster, dtype=np.uint8)
    if spec.is_identity:
        return out.copy()
    rng = np.random.default_rng(seed)
    img = out.astype(float)
    if spec.gaussian_sigma > 0:
        k = gaussian_kernel(spec.gaussian_sigma)
        img = ndimage.convolve1d(img, k, axis=0, mode="nearest")
        img = ndimage.convolve1d(img, k, axis=1, mode="nearest")
    if spec.motion_len > 0:
        img = ndimage.convolve(img, motion_kernel(spec.motion_len, spec.motion_angle), mode="nearest")
    if spec.scale < 1:
        H, W = img.shape
        small = (max(1, round(H * spec.scale)), max(1, round(W * spec.scale)))
        img = resample_bilinear(resample_bilinear(img, small), (H, W))
    img = to_uint8(img)
    if spec.occlusion_fraction > 0:
        x, y, w, h = occlusion_rect(img.shape, spec.occlusion_fraction, rng)
        img[y:y + h, x:x + w] = OCCLUSION_GRAY
    return img
