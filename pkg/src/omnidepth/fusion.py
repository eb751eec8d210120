"""Align per-pair depth maps to the reference view and fuse them.

Each pairwise depth map lives in the GEER frame of its left camera.  Its
pixels are lifted to 3-D, splatted into the reference ERP grid with a
z-buffer, and the aligned layers are combined by a confidence-weighted
median over inverse depth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sphere
from .errors import ParameterError
from .raster import ERP, GEER, FloatMap, ValidityMask
from .rig import Pose
from .sphere import ErpGrid, GeerGrid


@dataclass(frozen=True)
class AlignedLayer:
    depth: FloatMap
    confidence: FloatMap
    mask: ValidityMask


@dataclass(frozen=True)
class AlignedDepthSet:
    """K depth/confidence layers on one reference ERP grid."""

    grid: ErpGrid
    layers: tuple

    def __post_init__(self):
        if not self.layers:
            raise ParameterError("an aligned set needs at least one layer")
        for layer in self.layers:
            if layer.depth.data.shape != self.grid.shape or layer.confidence.data.shape != self.grid.shape:
                raise ParameterError("all layers must share the reference grid")
            c = layer.confidence.data
            if np.any((c < 0) | (c > 1)):
                raise ParameterError("confidences must lie in [0, 1]")

    def __len__(self):
        return len(self.layers)


def _source_grid(fmap: FloatMap):
    h, w = fmap.data.shape
    return GeerGrid(w, h) if fmap.projection == GEER else ErpGrid(w, h)


def _first_per_target(target, depth, src_index, size):
    """Index into the inputs of the nearest sample per target pixel (ties to the smaller source index)."""
    order = np.lexsort((src_index, depth, target))
    t = target[order]
    first = np.ones(t.size, bool)
    first[1:] = t[1:] != t[:-1]
    return t[first], order[first]


def reproject_depth(depth: FloatMap, conf: FloatMap, source_pose: Pose, reference_pose: Pose,
                    grid: ErpGrid, splat_radius: int = 1):
    """Move a depth map from ``source_pose`` to the reference ERP ``grid``.

    Valid source pixels are lifted to rig points and land on the nearest
    reference pixel, where the smallest depth wins.  Reference pixels left
    unhit take the nearest candidate splatted within ``splat_radius`` pixels
    of angle (more columns near the poles); the depth stored is always the
    true distance of the source point.
    Returns ``(depth, conf, mask)`` on ``grid``.
    """
    src_grid = _source_grid(depth)
    d = depth.data
    ok = np.isfinite(d) & (d > 0)
    dirs = sphere.grid_dirs(src_grid)[ok]
    pts = source_pose.center + (d[ok][:, None] * dirs) @ source_pose.rotation
    s = sphere.cart_to_sph(reference_pose.to_frame(pts))
    px = sphere.erp_pixel_of(s, grid)
    h, w = grid.shape
    col = np.mod(np.rint(px.col).astype(np.int64), w)
    row = np.clip(np.rint(px.row).astype(np.int64), 0, h - 1)
    rho = s.rho
    cval = conf.data[ok]
    src_index = np.flatnonzero(ok.ravel())
    keep = rho > 0
    col, row, rho, cval, src_index = col[keep], row[keep], rho[keep], cval[keep], src_index[keep]

    out_d = np.full(h * w, np.inf)
    out_c = np.zeros(h * w)
    tgt, sel = _first_per_target(row * w + col, rho, src_index, h * w)
    out_d[tgt] = rho[sel]
    out_c[tgt] = cval[sel]

    if splat_radius > 0 and rho.size:
        # Pixels near the poles are narrow in angle, so the column reach of a
        # splat grows as 1 / sin(phi) to keep its angular radius fixed.
        sin_phi = np.sin((row + 0.5) * np.pi / h)
        reach = np.minimum(np.ceil(splat_radius / sin_phi).astype(np.int64), w // 2)
        hit = np.isfinite(out_d)
        cand_t, cand_d, cand_c, cand_s = [], [], [], []
        for dr in range(-splat_radius, splat_radius + 1):
            rr = row + dr
            inside = (rr >= 0) & (rr < h)
            for dc in range(-int(reach.max()), int(reach.max()) + 1):
                if dr == 0 and dc == 0:
                    continue
                sel = inside & (reach >= abs(dc))
                t = rr[sel] * w + np.mod(col[sel] + dc, w)
                free = ~hit[t]
                cand_t.append(t[free])
                cand_d.append(rho[sel][free])
                cand_c.append(cval[sel][free])
                cand_s.append(src_index[sel][free])
        t = np.concatenate(cand_t)
        if t.size:
            dd, cc, ss = np.concatenate(cand_d), np.concatenate(cand_c), np.concatenate(cand_s)
            tgt, sel = _first_per_target(t, dd, ss, h * w)
            out_d[tgt] = dd[sel]
            out_c[tgt] = cc[sel]

    out_d = out_d.reshape(h, w)
    mask = np.isfinite(out_d)
    return (FloatMap(out_d, unit="m", projection=ERP),
            FloatMap(out_c.reshape(h, w), projection=ERP),
            ValidityMask(mask, projection=ERP))


def _weighted_median_index(values, weights, valid):
    v = np.where(valid, values, np.inf)
    wts = np.where(valid, weights, 0.0)
    total = wts.sum(axis=-1, keepdims=True)
    wts = np.where(total > 0, wts, valid.astype(np.float64))
    order = np.argsort(v, axis=-1, kind="stable")
    ws = np.take_along_axis(wts, order, -1)
    cum = np.cumsum(ws, axis=-1)
    k = np.argmax(cum >= 0.5 * cum[..., -1:], axis=-1)
    return np.take_along_axis(order, k[..., None], -1)[..., 0]


def weighted_median(values: np.ndarray, weights: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Lower weighted median along the last axis.

    Candidates are sorted ascending and the first whose cumulative weight
    reaches half the total is returned.  When every valid weight is zero the
    valid candidates count equally.  Rows with no valid candidate give inf.
    """
    idx = _weighted_median_index(values, weights, valid)
    out = np.take_along_axis(values, idx[..., None], -1)[..., 0]
    return np.where(valid.any(axis=-1), out, np.inf)


def _fuse(aligned: AlignedDepthSet, conf_floor: float):
    if not 0.0 <= conf_floor <= 1.0:
        raise ParameterError(f"conf_floor must lie in [0, 1], got {conf_floor}")
    depth = np.stack([layer.depth.data for layer in aligned.layers], axis=-1)
    conf = np.stack([layer.confidence.data for layer in aligned.layers], axis=-1)
    valid = np.stack([layer.mask.data for layer in aligned.layers], axis=-1) & np.isfinite(depth) & (depth > 0)
    strong = valid & (conf >= conf_floor)
    use = np.where(strong.any(axis=-1, keepdims=True), strong, valid)
    idx = _weighted_median_index(depth, conf, use)
    any_valid = use.any(axis=-1)
    fused = np.where(any_valid, np.take_along_axis(depth, idx[..., None], -1)[..., 0], np.inf)
    fconf = np.where(any_valid, np.take_along_axis(conf, idx[..., None], -1)[..., 0], 0.0)
    return fused, fconf, any_valid


def fuse_aligned(aligned: AlignedDepthSet, conf_floor: float = 0.3):
    """Confidence-weighted median of the aligned candidates at every pixel.

    Candidates below ``conf_floor`` are dropped unless that would drop them
    all.  The median runs over inverse depth; taking the lower median over
    ascending depth is the same as taking the upper one over inverse depth.
    """
    fused, _, mask = _fuse(aligned, conf_floor)
    return FloatMap(fused, unit="m", projection=ERP), ValidityMask(mask, projection=ERP)


def fuse_with_confidence(aligned: AlignedDepthSet, conf_floor: float = 0.3):
    """Like :func:`fuse_aligned`, also returning the chosen candidate's confidence."""
    fused, fconf, mask = _fuse(aligned, conf_floor)
    return (FloatMap(fused, unit="m", projection=ERP), FloatMap(fconf, projection=ERP),
            ValidityMask(mask, projection=ERP))


def fill_holes(depth: FloatMap, max_iter: int = 64) -> FloatMap:
    """Fill invalid pixels by repeated 4-neighbour averaging of inverse depth."""
    inv = np.where(np.isfinite(depth.data), 1.0 / depth.data, np.nan)
    for _ in range(max_iter):
        holes = np.isnan(inv)
        if not holes.any():
            break
        acc = np.zeros(inv.shape)
        cnt = np.zeros(inv.shape)
        for shift, axis in ((1, 0), (-1, 0), (1, 1), (-1, 1)):
            nb = np.roll(inv, shift, axis=axis)
            if axis == 0:
                # rows are polar angle and do not wrap
                if shift > 0:
                    nb[0] = np.nan
                else:
                    nb[-1] = np.nan
            good = ~np.isnan(nb)
            acc += np.where(good, nb, 0.0)
            cnt += good
        newly = holes & (cnt > 0)
        inv[newly] = acc[newly] / cnt[newly]
    with np.errstate(divide="ignore"):
        out = np.where(np.isnan(inv), np.inf, 1.0 / inv)
    return FloatMap(out, unit="m", projection=depth.projection)
