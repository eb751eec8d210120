"""Lens-soiling augmentations: mud spots, water drops and glare."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .raster import PanoImage, ValidityMask, _WRAP_AXIS

MUD_COLOR = np.array([0.11, 0.08, 0.05])


@dataclass(frozen=True)
class SoilSpec:
    kind: str
    seed: int = 0
    coverage: float = 0.3
    radius_range: tuple = (6, 30)
    blur_px: float = 6.0
    glare_gain: float = 0.8

    def __post_init__(self):
        if self.kind not in ("mud", "water", "glare"):
            raise ValueError(f"unknown soiling kind {self.kind!r}")
        if not 0 <= self.coverage < 0.9:
            raise ValueError(f"coverage must lie in [0, 0.9), got {self.coverage}")
        lo, hi = self.radius_range
        if not 0 < lo <= hi:
            raise ValueError(f"bad radius range {self.radius_range}")


def _offsets(h, w, cy, cx, wrap_axis):
    yy = np.arange(h, dtype=np.float64)[:, None] - cy
    xx = np.arange(w, dtype=np.float64)[None, :] - cx
    if wrap_axis == 1:
        xx = (xx + w / 2) % w - w / 2
    else:
        yy = (yy + h / 2) % h - h / 2
    return yy, xx


def _blob_mask(h, w, spec: SoilSpec, wrap_axis: int, ellipse: bool) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    mask = np.zeros((h, w), dtype=bool)
    target = spec.coverage * h * w
    lo, hi = spec.radius_range
    while mask.sum() < target:
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        a = rng.uniform(lo, hi)
        b = a * rng.uniform(0.5, 1.0) if ellipse else a
        ang = rng.uniform(0, np.pi)
        yy, xx = _offsets(h, w, cy, cx, wrap_axis)
        u = xx * np.cos(ang) + yy * np.sin(ang)
        v = -xx * np.sin(ang) + yy * np.cos(ang)
        mask |= (u / a) ** 2 + (v / b) ** 2 <= 1.0
    return mask


def _glare_field(h, w, spec: SoilSpec, wrap_axis: int) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    cy, cx = rng.uniform(0.2 * h, 0.8 * h), rng.uniform(0, w)
    tau = 1.0 / 255.0
    # Radius where gain * exp(-r^2 / 2s^2) falls to tau encloses the requested area.
    r_cut = np.sqrt(spec.coverage * h * w / np.pi)
    sigma = r_cut / np.sqrt(2 * np.log(spec.glare_gain / tau))
    yy, xx = _offsets(h, w, cy, cx, wrap_axis)
    field = spec.glare_gain * np.exp(-(xx ** 2 + yy ** 2) / (2 * sigma ** 2))
    return np.where(field > tau, field, 0.0)


def soil_mask(shape, spec: SoilSpec, projection: str = "ERP") -> np.ndarray:
    h, w = shape
    if spec.coverage == 0:
        return np.zeros((h, w), dtype=bool)
    wrap = _WRAP_AXIS[projection]
    if spec.kind == "glare":
        return _glare_field(h, w, spec, wrap) > 0
    return _blob_mask(h, w, spec, wrap, ellipse=spec.kind == "mud")


def apply_soiling(img: PanoImage, spec: SoilSpec) -> tuple[PanoImage, ValidityMask]:
    """Return the soiled image and the mask of affected pixels.

    The mask depends only on the image size and ``spec``; pixels outside it
    are returned unchanged.
    """
    h, w = img.height, img.width
    data = np.array(img.data)
    if spec.coverage == 0:
        return PanoImage(data, img.projection), ValidityMask(np.zeros((h, w), bool), img.projection)
    wrap = _WRAP_AXIS[img.projection]
    mask = soil_mask((h, w), spec, img.projection)
    if spec.kind == "mud":
        color = MUD_COLOR if data.ndim == 3 else MUD_COLOR.mean()
        data[mask] = color
    elif spec.kind == "water":
        modes = ["wrap", "nearest"] if wrap == 0 else ["nearest", "wrap"]
        sig = [spec.blur_px, spec.blur_px] + ([0.0] if data.ndim == 3 else [])
        blurred = ndimage.gaussian_filter(img.data, sigma=sig, mode=modes + (["nearest"] if data.ndim == 3 else []))
        data[mask] = blurred[mask]
    else:
        field = _glare_field(h, w, spec, wrap)
        add = field[..., None] if data.ndim == 3 else field
        data = np.where(mask[..., None] if data.ndim == 3 else mask, np.clip(data + add, 0.0, 1.0), data)
    return PanoImage(data, img.projection), ValidityMask(mask, img.projection)
