"""Pairwise stereo on GEER-rectified panoramas.

Census descriptors are matched by Hamming distance along image rows, the
resulting volume is smoothed with semi-global aggregation, and disparities
come from a winner-take-all with parabolic sub-pixel refinement.  Confidence
is the softmax probability mass on the three hypotheses closest to the
chosen disparity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _sgm
from .errors import ParameterError
from .raster import GEER, FloatMap, PanoImage, ValidityMask, sample_bilinear

SENTINEL = 1.0
_ROW_CHUNK = 64


@dataclass(frozen=True)
class Census:
    codes: np.ndarray  # uint64, (H, W)
    nbits: int


@dataclass
class CostVolume:
    """Matching costs indexed ``(row, col, k)``; ``valid`` flags real comparisons."""

    cost: np.ndarray
    valid: np.ndarray

    @property
    def shape(self):
        return self.cost.shape

    @property
    def num_disparities(self) -> int:
        return self.cost.shape[2]

    @property
    def disparity_step(self) -> float:
        """Radians of angular disparity per column of shift."""
        return np.pi / self.cost.shape[1]


@dataclass(frozen=True)
class DisparityMap:
    disparity: FloatMap
    mask: ValidityMask


def _gray(img) -> np.ndarray:
    if isinstance(img, PanoImage):
        return img.gray()
    a = np.asarray(img, dtype=np.float64)
    return a if a.ndim == 2 else a @ np.array([0.299, 0.587, 0.114])


def census_transform(img, window: int = 7, wrap_axis: int = 0) -> Census:
    """Census codes: bit ``b`` set iff neighbour ``b`` (row-major, centre skipped) is darker.

    The ``wrap_axis`` (rows for GEER, columns for ERP) is periodic; the other
    axis is clamped at the border.
    """
    if window not in (3, 5, 7):
        raise ParameterError(f"census window must be 3, 5 or 7, got {window}")
    g = _gray(img)
    r = window // 2
    modes = ("wrap", "edge") if wrap_axis == 0 else ("edge", "wrap")
    padded = np.pad(g, ((r, r), (0, 0)), mode=modes[0])
    padded = np.pad(padded, ((0, 0), (r, r)), mode=modes[1])
    h, w = g.shape
    codes = np.zeros((h, w), dtype=np.uint64)
    bit = 0
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if dy == 0 and dx == 0:
                continue
            nb = padded[r + dy:r + dy + h, r + dx:r + dx + w]
            codes |= (nb < g).astype(np.uint64) << np.uint64(bit)
            bit += 1
    return Census(codes, bit)


def build_cost_volume(left: Census, right: Census, num_disparities: int,
                      mask_l: np.ndarray | None = None, mask_r: np.ndarray | None = None,
                      row_radius: int = 0, sign: int = 1) -> CostVolume:
    """Normalized Hamming cost between ``left(r, c)`` and ``right(r, c - sign*k)``.

    ``sign=-1`` builds the right-referenced volume used for the left-right
    check.  ``row_radius > 0`` also searches ``±row_radius`` rows and keeps
    the best match; rectified pairs should not gain anything from it.
    Masks are True where a pixel may be used.
    """
    h, w = left.codes.shape
    if num_disparities > w // 2 or num_disparities < 1:
        raise ParameterError(f"num_disparities must lie in [1, {w // 2}], got {num_disparities}")
    ml = np.ones((h, w), bool) if mask_l is None else np.asarray(mask_l, bool)
    mr = np.ones((h, w), bool) if mask_r is None else np.asarray(mask_r, bool)
    cost = np.full((h, w, num_disparities), SENTINEL, dtype=np.float32)
    valid = np.zeros((h, w, num_disparities), dtype=bool)
    big = np.iinfo(np.int64).max
    shifted = [(np.roll(right.codes, -dr, axis=0), np.roll(mr, -dr, axis=0))
               for dr in range(-row_radius, row_radius + 1)]
    for k in range(num_disparities):
        if sign > 0:
            dst, src = slice(k, w), slice(0, w - k)
        else:
            dst, src = slice(0, w - k), slice(k, w)
        best = np.full((h, w - k), big, dtype=np.int64)
        for codes_r, mask_r_s in shifted:
            ham = np.bitwise_count(left.codes[:, dst] ^ codes_r[:, src]).astype(np.int64)
            best = np.minimum(best, np.where(mask_r_s[:, src], ham, big))
        ok = (best < big) & ml[:, dst]
        valid[:, dst, k] = ok
        cost[:, dst, k] = np.where(ok, best / left.nbits, SENTINEL)
    return CostVolume(cost, valid)


def sgm_aggregate(vol: CostVolume, p1: float = 0.03, p2: float = 0.3, threads: int = 1) -> CostVolume:
    """Eight-path semi-global aggregation; sentinel entries take part as ordinary costs."""
    if not p2 >= p1 > 0:
        raise ParameterError(f"need P2 >= P1 > 0, got P1={p1}, P2={p2}")
    s = _sgm.aggregate(vol.cost, np.ones(vol.cost.shape, bool), p1, p2, threads)
    return CostVolume(s, vol.valid)


def _masked_cost(vol: CostVolume, rows: slice) -> np.ndarray:
    return np.where(vol.valid[rows], vol.cost[rows].astype(np.float64), np.inf)


def wta_subpixel(vol: CostVolume) -> DisparityMap:
    """Winner-take-all (ties to the smallest k) refined by a three-point parabola."""
    h, w, n = vol.shape
    if n < 3:
        raise ParameterError("need at least 3 disparities")
    disp = np.full((h, w), np.inf)
    for a in range(0, h, _ROW_CHUNK):
        rows = slice(a, min(a + _ROW_CHUNK, h))
        c = _masked_cost(vol, rows)
        k = np.argmin(c, axis=2)
        c0 = np.take_along_axis(c, k[..., None], 2)[..., 0]
        km = np.clip(k - 1, 0, n - 1)
        kp = np.clip(k + 1, 0, n - 1)
        cm = np.take_along_axis(c, km[..., None], 2)[..., 0]
        cp = np.take_along_axis(c, kp[..., None], 2)[..., 0]
        interior = (k > 0) & (k < n - 1) & np.isfinite(cm) & np.isfinite(cp)
        with np.errstate(invalid="ignore", divide="ignore"):
            denom = 2.0 * (cm + cp - 2.0 * c0)
            off = np.where(interior & (denom > 0), (cm - cp) / denom, 0.0)
        d = k + off
        disp[rows] = np.where(np.isfinite(c0), d, np.inf)
    ok = np.isfinite(disp)
    return DisparityMap(FloatMap(disp, unit="px", projection=GEER), ValidityMask(ok, projection=GEER))


def confidence_map(vol: CostVolume, disp: DisparityMap, temperature: float = 1.0) -> FloatMap:
    """Probability mass of the three hypotheses nearest each disparity.

    ``p_k = softmax_k(-cost / temperature)`` over the valid hypotheses.
    Invalid disparities get confidence 0.
    """
    if not temperature > 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    h, w, n = vol.shape
    out = np.zeros((h, w))
    d = disp.disparity.data
    for a in range(0, h, _ROW_CHUNK):
        rows = slice(a, min(a + _ROW_CHUNK, h))
        z = -_masked_cost(vol, rows) / temperature
        zmax = np.max(z, axis=2, keepdims=True)
        zmax = np.where(np.isfinite(zmax), zmax, 0.0)
        e = np.exp(z - zmax)
        total = e.sum(axis=2)
        dr = d[rows]
        ok = np.isfinite(dr) & (total > 0)
        k = np.rint(np.where(ok, dr, 0.0)).astype(np.int64)
        mass = np.zeros(dr.shape)
        for off in (-1, 0, 1):
            kk = k + off
            inside = (kk >= 0) & (kk < n)
            val = np.take_along_axis(e, np.clip(kk, 0, n - 1)[..., None], 2)[..., 0]
            mass += np.where(inside, val, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            out[rows] = np.where(ok, mass / total, 0.0)
    return FloatMap(np.clip(out, 0.0, 1.0), unit="", projection=GEER)


def lr_consistency(disp_l: DisparityMap, disp_r: DisparityMap, tol_px: float = 1.0) -> ValidityMask:
    """Keep pixels whose left disparity agrees with the right view's at ``c - d``."""
    dl = disp_l.disparity.data
    dr = disp_r.disparity.data
    h, w = dl.shape
    ok_l = np.isfinite(dl)
    rows, cols = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    target = cols - np.where(ok_l, dl, 0.0)
    inside = target >= -0.5
    vals, ok_r = sample_bilinear(np.where(np.isfinite(dr), dr, 0.0), target, rows, 0, valid=np.isfinite(dr))
    keep = ok_l & inside & ok_r & (np.abs(dl - vals) <= tol_px)
    return ValidityMask(keep, projection=GEER)


@dataclass(frozen=True)
class StereoParams:
    num_disparities: int = 64
    window: int = 7
    p1: float = 0.03
    p2: float = 0.3
    temperature: float = 1.0
    lr_tol: float = 1.0
    row_radius: int = 0
    margin_cols: int = 4


@dataclass(frozen=True)
class StereoResult:
    disparity: DisparityMap
    confidence: FloatMap
    lr_ok: ValidityMask


def match_pair(left: PanoImage, right: PanoImage, params: StereoParams = StereoParams(),
               mask_l: np.ndarray | None = None, mask_r: np.ndarray | None = None,
               threads: int = 1, lr_check: bool = True) -> StereoResult:
    """Full pairwise pipeline on a GEER pair.

    The confidence temperature is expressed on the aggregated cost divided
    by ``8 * P1`` (eight paths, one small-jump penalty per unit).
    """
    cl = census_transform(left, params.window, wrap_axis=0)
    cr = census_transform(right, params.window, wrap_axis=0)
    vol = build_cost_volume(cl, cr, params.num_disparities, mask_l, mask_r, params.row_radius)
    agg = sgm_aggregate(vol, params.p1, params.p2, threads)
    del vol
    disp = wta_subpixel(agg)
    conf = confidence_map(agg, disp, params.temperature * len(_sgm.DIRECTIONS) * params.p1)
    del agg
    h, w = cl.codes.shape
    if params.margin_cols:
        keep = np.ones((h, w), bool)
        keep[:, :params.margin_cols] = False
        keep[:, w - params.margin_cols:] = False
    else:
        keep = np.ones((h, w), bool)
    if lr_check:
        vol_r = build_cost_volume(cr, cl, params.num_disparities, mask_r, mask_l, params.row_radius, sign=-1)
        agg_r = sgm_aggregate(vol_r, params.p1, params.p2, threads)
        del vol_r
        disp_r = wta_subpixel(agg_r)
        del agg_r
        lr_ok = lr_consistency(disp, disp_r, params.lr_tol).data
    else:
        lr_ok = np.ones((h, w), bool)
    d = np.where(keep & disp.mask.data, disp.disparity.data, np.inf)
    dm = DisparityMap(FloatMap(d, unit="px", projection=GEER), ValidityMask(np.isfinite(d), projection=GEER))
    conf = FloatMap(np.where(dm.mask.data, conf.data, 0.0), projection=GEER)
    return StereoResult(dm, conf, ValidityMask(lr_ok & dm.mask.data, projection=GEER))
