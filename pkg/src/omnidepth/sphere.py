"""Spherical coordinates, GEER/ERP pixel mappings and the disparity-depth relation.

Conventions used throughout the package:

* ``phi`` is the polar angle measured from the frame's +x axis, in [0, pi].
* ``theta`` is the azimuth around +x, measured from +z towards +y, in [-pi, pi).
* A GEER image has columns along ``phi`` and rows along ``theta``; a stereo
  match keeps its row and shifts by the disparity along the columns.
* An ERP image is the transpose: columns along ``theta`` (wrapping) and rows
  along ``phi``.
* Pixel centres sample the angular midpoint of their cell, so pixel ``(0, 0)``
  sits half a cell away from the corner angles.

All functions broadcast over numpy arrays.  Degenerate cases are reported with
sentinel values rather than exceptions so that whole maps can be converted in
one call: ``+inf`` for infinite depth, ``nan`` for blind points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, InvalidGeometryError, ParameterError
from .raster import GEER, ValidityMask

D_MIN = 1e-9


class SphericalCoord(NamedTuple):
    rho: np.ndarray
    phi: np.ndarray
    theta: np.ndarray


class PixelCoord(NamedTuple):
    col: np.ndarray
    row: np.ndarray


@dataclass(frozen=True)
class GeerGrid:
    """GEER raster: ``width`` columns over phi, ``height`` rows over theta."""

    width: int
    height: int

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ParameterError(f"grid must be at least 2x2, got {self.width}x{self.height}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def wrap_axis(self) -> int:
        return 0

    @property
    def col_step(self) -> float:
        """Radians of phi per column (one disparity pixel)."""
        return np.pi / self.width


@dataclass(frozen=True)
class ErpGrid:
    """ERP raster: ``width`` columns over theta (wrapping), ``height`` rows over phi."""

    width: int
    height: int

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ParameterError(f"grid must be at least 2x2, got {self.width}x{self.height}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def wrap_axis(self) -> int:
        return 1


def _wrap_theta(theta):
    # atan2 returns +pi for (y=+0, z<0); fold it onto -pi to keep [-pi, pi).
    return np.where(theta >= np.pi, theta - 2 * np.pi, theta)


def cart_to_sph(p) -> SphericalCoord:
    """Cartesian points ``(..., 3)`` to ``(rho, phi, theta)``.

    ``phi`` is evaluated as ``atan2(hypot(y, z), x)``, which equals
    ``arccos(x / rho)`` but stays accurate next to the poles.  On the x axis
    (and at the origin) ``theta`` is defined as 0.
    """
    p = np.asarray(p, dtype=np.float64)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    perp = np.hypot(y, z)
    rho = np.sqrt(x * x + y * y + z * z)
    phi = np.arctan2(perp, x)
    theta = np.where(perp == 0.0, 0.0, _wrap_theta(np.arctan2(y, z)))
    return SphericalCoord(rho, phi, theta)


def sph_to_cart(s) -> np.ndarray:
    """Inverse of :func:`cart_to_sph`; returns an array of shape ``(..., 3)``."""
    rho, phi, theta = (np.asarray(v, dtype=np.float64) for v in s)
    sin_phi = np.sin(phi)
    return np.stack(
        np.broadcast_arrays(rho * np.cos(phi), rho * sin_phi * np.sin(theta), rho * sin_phi * np.cos(theta)),
        axis=-1,
    )


def unit_dirs(phi, theta) -> np.ndarray:
    return sph_to_cart((1.0, phi, theta))


def geer_pixel_of(s, g: GeerGrid) -> PixelCoord:
    phi = np.asarray(s.phi, dtype=np.float64)
    theta = np.asarray(s.theta, dtype=np.float64)
    col = phi * g.width / np.pi - 0.5
    row = (theta + np.pi) * g.height / (2 * np.pi) - 0.5
    return PixelCoord(col, row)


def _wrap_index(v, n):
    return np.mod(v + 0.5, n) - 0.5


def _check_pole_axis(v, n, name):
    v = np.asarray(v, dtype=np.float64)
    if np.any((v < -0.5) | (v > n - 0.5)):
        raise DomainError(f"{name} outside [-0.5, {n - 0.5}]: the polar axis does not wrap")
    return v


def geer_dir_of(p, g: GeerGrid) -> SphericalCoord:
    """Unit-radius direction of a (possibly fractional) GEER pixel."""
    col = _check_pole_axis(p.col, g.width, "col")
    row = _wrap_index(np.asarray(p.row, dtype=np.float64), g.height)
    phi = (col + 0.5) * np.pi / g.width
    theta = (row + 0.5) * 2 * np.pi / g.height - np.pi
    return SphericalCoord(np.ones_like(phi * theta), phi, theta)


def erp_pixel_of(s, g: ErpGrid) -> PixelCoord:
    phi = np.asarray(s.phi, dtype=np.float64)
    theta = np.asarray(s.theta, dtype=np.float64)
    col = (theta + np.pi) * g.width / (2 * np.pi) - 0.5
    row = phi * g.height / np.pi - 0.5
    return PixelCoord(col, row)


def erp_dir_of(p, g: ErpGrid) -> SphericalCoord:
    row = _check_pole_axis(p.row, g.height, "row")
    col = _wrap_index(np.asarray(p.col, dtype=np.float64), g.width)
    phi = (row + 0.5) * np.pi / g.height
    theta = (col + 0.5) * 2 * np.pi / g.width - np.pi
    return SphericalCoord(np.ones_like(phi * theta), phi, theta)


def pixel_of(s, grid) -> PixelCoord:
    if isinstance(grid, GeerGrid):
        return geer_pixel_of(s, grid)
    return erp_pixel_of(s, grid)


def dir_of(p, grid) -> SphericalCoord:
    if isinstance(grid, GeerGrid):
        return geer_dir_of(p, grid)
    return erp_dir_of(p, grid)


def grid_dirs(grid) -> np.ndarray:
    """Unit direction of every pixel centre, shape ``(height, width, 3)``."""
    rows, cols = np.meshgrid(np.arange(grid.height, dtype=np.float64),
                             np.arange(grid.width, dtype=np.float64), indexing="ij")
    s = dir_of(PixelCoord(cols, rows), grid)
    return unit_dirs(s.phi, s.theta)


def geer_column_phi(g: GeerGrid) -> np.ndarray:
    return (np.arange(g.width) + 0.5) * np.pi / g.width


def disparity_to_depth(phi_l, d, baseline, d_min: float = D_MIN):
    """Depth to the left camera from its polar angle and the angular disparity.

    Returns ``+inf`` where ``d <= d_min``.  Raises :class:`InvalidGeometryError`
    when ``phi_l - d`` leaves (0, pi) for any element with a usable disparity.
    """
    if not baseline > 0:
        raise ParameterError(f"baseline must be positive, got {baseline}")
    phi_l = np.asarray(phi_l, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    phi_l, d = np.broadcast_arrays(phi_l, d)
    finite = d > d_min
    phi_r = phi_l - d
    bad = finite & ~((phi_r > 0) & (phi_r < np.pi) & (phi_l <= np.pi))
    if np.any(bad):
        raise InvalidGeometryError("phi_l - d must lie in (0, pi)")
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = baseline * np.sin(phi_r) / np.sin(d)
    out = np.where(finite, rho, np.inf)
    return out[()] if out.ndim == 0 else out


def depth_to_disparity(phi_l, rho_l, baseline):
    """Angular disparity of a point at depth ``rho_l`` along polar angle ``phi_l``.

    Blind points (``phi_l`` exactly 0 or pi) give ``nan``; infinite depth gives 0.
    """
    if not baseline > 0:
        raise ParameterError(f"baseline must be positive, got {baseline}")
    phi_l = np.asarray(phi_l, dtype=np.float64)
    rho_l = np.asarray(rho_l, dtype=np.float64)
    phi_l, rho_l = np.broadcast_arrays(phi_l, rho_l)
    far = np.isinf(rho_l)
    rho = np.where(far, 1.0, rho_l)
    d = phi_l - np.arctan2(rho * np.sin(phi_l), rho * np.cos(phi_l) + baseline)
    d = np.where(far, 0.0, d)
    blind = (phi_l <= 0.0) | (phi_l >= np.pi)
    d = np.where(blind, np.nan, d)
    return d[()] if d.ndim == 0 else d


def blind_point_mask(g: GeerGrid, margin_cols: int) -> ValidityMask:
    """Validity mask that drops ``margin_cols`` columns next to each pole."""
    if not 0 <= margin_cols < g.width / 2:
        raise ParameterError(f"margin_cols must lie in [0, {g.width / 2}), got {margin_cols}")
    mask = np.ones(g.shape, dtype=bool)
    if margin_cols:
        mask[:, :margin_cols] = False
        mask[:, g.width - margin_cols:] = False
    return ValidityMask(mask, projection=GEER)
