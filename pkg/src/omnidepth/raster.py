"""Raster containers, wrap-aware bilinear sampling, PFM and PNG I/O."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .errors import FormatError

ERP = "ERP"
GEER = "GEER"
_WRAP_AXIS = {GEER: 0, ERP: 1}


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True, order="C")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PanoImage:
    """Panorama with values in [0, 1]; ``data`` is ``(H, W)`` or ``(H, W, 3)``."""

    data: np.ndarray
    projection: str = ERP

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim not in (2, 3) or (data.ndim == 3 and data.shape[2] not in (1, 3)):
            raise ValueError(f"image must be HxW or HxWx3, got {data.shape}")
        if data.ndim == 3 and data.shape[2] == 1:
            data = data[..., 0]
        if not np.all(np.isfinite(data)):
            raise ValueError("image values must be finite")
        if self.projection not in _WRAP_AXIS:
            raise ValueError(f"unknown projection {self.projection!r}")
        object.__setattr__(self, "data", _readonly(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else self.data.shape[2]

    def gray(self) -> np.ndarray:
        if self.data.ndim == 2:
            return self.data
        return self.data @ np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class FloatMap:
    """Scalar map (depth, disparity, cost, confidence); ``+inf`` marks invalid pixels."""

    data: np.ndarray
    unit: str = ""
    projection: str = ERP

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.dtype not in (np.float32, np.float64):
            data = data.astype(np.float64)
        if data.ndim != 2:
            raise ValueError(f"float map must be 2-D, got {data.shape}")
        if np.any(np.isnan(data)):
            raise ValueError("float maps use +inf, not nan, for invalid pixels")
        object.__setattr__(self, "data", _readonly(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.data)


@dataclass(frozen=True)
class ValidityMask:
    data: np.ndarray
    projection: str = field(default=ERP)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=bool)
        if data.ndim != 2:
            raise ValueError(f"mask must be 2-D, got {data.shape}")
        object.__setattr__(self, "data", _readonly(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def count(self) -> int:
        return int(self.data.sum())


def sample_bilinear(data: np.ndarray, col, row, wrap_axis: int, valid: np.ndarray | None = None):
    """Bilinearly sample ``data`` (``(H, W)`` or ``(H, W, C)``) at fractional pixels.

    ``wrap_axis`` (0 for rows, 1 for columns) is periodic; the other axis is
    clamped to its border pixels.  With ``valid`` given, returns
    ``(values, ok)`` where ``ok`` is False whenever any contributing pixel with
    non-zero weight is invalid.
    """
    h, w = data.shape[:2]
    col = np.asarray(col, dtype=np.float64)
    row = np.asarray(row, dtype=np.float64)
    if wrap_axis == 0:
        row = np.mod(row, h)
        col = np.clip(col, 0.0, w - 1)
    else:
        col = np.mod(col, w)
        row = np.clip(row, 0.0, h - 1)
    r0 = np.floor(row).astype(np.intp)
    c0 = np.floor(col).astype(np.intp)
    fr = row - r0
    fc = col - c0
    if wrap_axis == 0:
        r0 = r0 % h
        r1 = (r0 + 1) % h
        c0 = np.minimum(c0, w - 1)
        c1 = np.minimum(c0 + 1, w - 1)
    else:
        c0 = c0 % w
        c1 = (c0 + 1) % w
        r0 = np.minimum(r0, h - 1)
        r1 = np.minimum(r0 + 1, h - 1)
    w00 = (1 - fr) * (1 - fc)
    w01 = (1 - fr) * fc
    w10 = fr * (1 - fc)
    w11 = fr * fc
    if data.ndim == 3:
        ww = [x[..., None] for x in (w00, w01, w10, w11)]
    else:
        ww = [w00, w01, w10, w11]
    out = ww[0] * data[r0, c0] + ww[1] * data[r0, c1] + ww[2] * data[r1, c0] + ww[3] * data[r1, c1]
    if valid is None:
        return out
    ok = ((w00 == 0) | valid[r0, c0]) & ((w01 == 0) | valid[r0, c1]) \
        & ((w10 == 0) | valid[r1, c0]) & ((w11 == 0) | valid[r1, c1])
    return out, ok


def bilinear_sample(raster, p, mask: ValidityMask | None = None):
    """Sample a :class:`PanoImage` or :class:`FloatMap` at pixel coordinate ``p``.

    For float maps, pixels holding ``+inf`` count as invalid in addition to
    the companion mask; invalid results come back as ``nan`` when no mask is
    requested and as ``(value, ok)`` otherwise.
    """
    data = raster.data
    wrap = _WRAP_AXIS[raster.projection]
    valid = None
    if isinstance(raster, FloatMap):
        valid = np.isfinite(data)
        data = np.where(valid, data, 0.0)
    if mask is not None:
        valid = mask.data if valid is None else valid & mask.data
    if valid is None:
        return sample_bilinear(data, p.col, p.row, wrap)
    value, ok = sample_bilinear(data, p.col, p.row, wrap, valid)
    if mask is None:
        return np.where(ok, value, np.nan)
    return value, ok


# --- PFM -------------------------------------------------------------------

def pfm_write(fmap, path) -> None:
    """Write a single-channel little-endian PFM (rows stored bottom to top)."""
    data = fmap.data if isinstance(fmap, FloatMap) else np.asarray(fmap)
    if data.ndim != 2:
        raise FormatError("only single-channel maps can be written as Pf")
    h, w = data.shape
    payload = np.ascontiguousarray(data[::-1].astype("<f4"))
    with open(path, "wb") as f:
        f.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        f.write(payload.tobytes())


def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n and buf[pos:pos + 1].isspace():
        pos += 1
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise FormatError("truncated PFM header")
    return buf[start:pos], pos


def pfm_read(path, unit: str = "", projection: str = ERP) -> FloatMap:
    buf = Path(path).read_bytes()
    magic, pos = _read_token(buf, 0)
    if magic == b"PF":
        raise FormatError("colour PFM (PF) is not supported; expected Pf")
    if magic != b"Pf":
        raise FormatError(f"not a PFM file (magic {magic[:8]!r})")
    try:
        w_tok, pos = _read_token(buf, pos)
        h_tok, pos = _read_token(buf, pos)
        s_tok, pos = _read_token(buf, pos)
        w, h, scale = int(w_tok), int(h_tok), float(s_tok)
    except ValueError as exc:
        raise FormatError(f"malformed PFM header: {exc}") from None
    if w <= 0 or h <= 0 or scale == 0:
        raise FormatError("malformed PFM header: bad dimensions or scale")
    pos += 1  # single whitespace byte terminates the header
    need = w * h * 4
    if len(buf) - pos < need:
        raise FormatError(f"PFM payload truncated: need {need} bytes, have {len(buf) - pos}")
    dtype = "<f4" if scale < 0 else ">f4"
    arr = np.frombuffer(buf, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    arr = arr[::-1].astype(np.float32)
    arr[np.isnan(arr)] = np.inf
    return FloatMap(arr, unit=unit, projection=projection)


# --- PNG -------------------------------------------------------------------

_PNG_SIG = b"\x89PNG\r\n\x1a\n"
_PNG_COLOR_TYPES = {0: 1, 2: 3}


def _png_header(buf: bytes) -> tuple[int, int]:
    if len(buf) < 33 or buf[:8] != _PNG_SIG or buf[12:16] != b"IHDR":
        raise FormatError("not a PNG file")
    bit_depth, color_type = buf[24], buf[25]
    if bit_depth not in (8, 16):
        raise FormatError(f"unsupported PNG bit depth {bit_depth}")
    if color_type not in _PNG_COLOR_TYPES:
        raise FormatError(f"unsupported PNG colour type {color_type}")
    return bit_depth, color_type


def png_write(image, path, bit_depth: int = 8) -> None:
    """Write a PanoImage (or array in [0, 1]) as an 8- or 16-bit gray/RGB PNG."""
    data = image.data if isinstance(image, PanoImage) else np.asarray(image, dtype=np.float64)
    if bit_depth not in (8, 16):
        raise FormatError(f"unsupported PNG bit depth {bit_depth}")
    top = 255 if bit_depth == 8 else 65535
    q = np.rint(np.clip(data, 0.0, 1.0) * top).astype(np.uint8 if bit_depth == 8 else np.uint16)
    if q.ndim == 3:
        q = q[..., ::-1]  # OpenCV expects BGR
    ok, enc = cv2.imencode(".png", np.ascontiguousarray(q), [cv2.IMWRITE_PNG_COMPRESSION, 6])
    if not ok:
        raise FormatError("PNG encoding failed")
    Path(path).write_bytes(enc.tobytes())


def png_read(path, projection: str = ERP) -> PanoImage:
    buf = Path(path).read_bytes()
    bit_depth, _ = _png_header(buf)
    arr = cv2.imdecode(np.frombuffer(buf, dtype=np.uint8), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise FormatError("corrupt PNG data")
    if arr.ndim == 3:
        arr = arr[..., ::-1]
    top = 255.0 if bit_depth == 8 else 65535.0
    return PanoImage(arr.astype(np.float64) / top, projection=projection)


def mask_write(mask, path) -> None:
    data = mask.data if isinstance(mask, ValidityMask) else np.asarray(mask, dtype=bool)
    png_write(data.astype(np.float64), path)


def mask_read(path, projection: str = ERP) -> ValidityMask:
    return ValidityMask(png_read(path).data > 0.5, projection=projection)

