"""Multi-view depth by spherical sweeping around the reference camera.

Every reference pixel is a ray; each hypothesis sphere of radius ``rho_i``
fixes a 3-D point on it, which is projected into every camera.  The cost of a
hypothesis is the dispersion of the descriptors the cameras see there (mean
pairwise Hamming distance of census codes, or 1 - ZNCC / 2 for intensity
patches).  Depth is regressed with a softmax-weighted sum over hypotheses.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import ndimage

from . import _sgm, sphere
from .errors import ParameterError
from .raster import ERP, FloatMap, PanoImage, sample_bilinear
from .rig import CameraRig
from .sphere import ErpGrid, PixelCoord
from .stereo import SENTINEL, census_transform


@dataclass(frozen=True)
class HypothesisSet:
    depths: np.ndarray

    def __post_init__(self):
        d = np.array(self.depths, dtype=np.float64)
        if d.ndim != 1 or d.size < 2 or d[0] <= 0 or np.any(np.diff(d) <= 0):
            raise ParameterError("hypothesis depths must be positive and strictly increasing, N >= 2")
        d.setflags(write=False)
        object.__setattr__(self, "depths", d)

    def __len__(self):
        return self.depths.size


def make_hypotheses(rho_min: float, rho_max: float, n: int) -> HypothesisSet:
    """Depths uniformly spaced in inverse depth, returned in ascending order."""
    if not (0 < rho_min < rho_max) or n < 2:
        raise ParameterError(f"need 0 < rho_min < rho_max and N >= 2, got ({rho_min}, {rho_max}, {n})")
    inv = np.linspace(1.0 / rho_min, 1.0 / rho_max, n)
    d = 1.0 / inv
    d[0], d[-1] = rho_min, rho_max
    return HypothesisSet(d)


@dataclass
class SweepVolume:
    """Costs over ``(row, col, i)`` of the reference ERP grid.

    ``count`` is the number of cameras whose sample was usable; cells with
    fewer than two are invalid.
    """

    cost: np.ndarray
    count: np.ndarray
    hypotheses: HypothesisSet
    grid: ErpGrid

    @property
    def valid(self) -> np.ndarray:
        return self.count >= 2


def _ref_points(rig: CameraRig, grid: ErpGrid):
    ref = rig.reference
    return ref.center, sphere.grid_dirs(grid) @ ref.rotation


def project_hypothesis(rig: CameraRig, cam_id: str, ref_dir, rho, grid: ErpGrid) -> PixelCoord:
    """ERP pixel in camera ``cam_id`` of the point at distance ``rho`` along a reference ray.

    ``ref_dir`` is a :class:`~omnidepth.sphere.SphericalCoord` (its ``rho``
    is ignored), expressed in the reference camera frame.  A point that
    coincides with the camera centre projects to ``nan``.
    """
    if not np.all(np.asarray(rho) > 0):
        raise ParameterError("hypothesis depth must be positive")
    ref = rig.reference
    d = sphere.unit_dirs(ref_dir.phi, ref_dir.theta) @ ref.rotation
    p = ref.center + np.asarray(rho)[..., None] * d
    q = rig.pose(cam_id).to_frame(p)
    s = sphere.cart_to_sph(q)
    px = sphere.erp_pixel_of(s, grid)
    singular = s.rho == 0
    return PixelCoord(np.where(singular, np.nan, px.col), np.where(singular, np.nan, px.row))


def _view_pixels(pose, pts, src: ErpGrid):
    q = pose.to_frame(pts)
    s = sphere.cart_to_sph(q)
    p = sphere.erp_pixel_of(s, src)
    return p, s.rho > 0


def _erode_wrap(mask: np.ndarray, window: int) -> np.ndarray:
    return ndimage.minimum_filter(mask.astype(np.uint8), size=window, mode=["nearest", "wrap"]).astype(bool)


def build_sweep_cost(rig: CameraRig, views: dict, hyp: HypothesisSet, grid: ErpGrid,
                     window: int = 7, kind: str = "census", zncc_radius: int = 2) -> SweepVolume:
    """Cross-view dispersion cost for every reference pixel and hypothesis.

    ``views`` maps camera id to ``(PanoImage, usable_mask_or_None)``; ERP
    images may be larger than ``grid``.  For ``kind="census"`` each view is
    warped onto the reference grid at the hypothesis sphere and census codes
    are computed on the warped image, so every view is described in the
    same local geometry.  A view's sample counts only if its whole census
    window is usable.  ``"census_nn"`` instead samples codes computed in each
    camera's own image at the nearest pixel, and ``"zncc"`` compares warped
    intensity patches.
    """
    if kind not in ("census", "census_nn", "zncc"):
        raise ParameterError(f"unknown sweep cost kind {kind!r}")
    ids = sorted(views)
    if len(ids) < 2:
        raise ParameterError("spherical sweeping needs at least two cameras")
    c_ref, dirs = _ref_points(rig, grid)
    h, w = grid.shape
    n = len(hyp)
    cost = np.full((h, w, n), SENTINEL, dtype=np.float32)
    count = np.zeros((h, w, n), dtype=np.int8)
    prepared = []
    for cid in ids:
        img, mask = views[cid]
        usable = np.ones((img.height, img.width), bool) if mask is None else np.asarray(mask, bool)
        src = ErpGrid(img.width, img.height)
        feat = census_transform(img, window, wrap_axis=1) if kind == "census_nn" else img.gray()
        prepared.append((rig.pose(cid), src, feat, usable))
    nbits = window * window - 1
    for i, rho in enumerate(hyp.depths):
        pts = c_ref + rho * dirs
        samples = []
        for pose, src, feat, usable in prepared:
            p, ok = _view_pixels(pose, pts, src)
            if kind == "census_nn":
                col = np.mod(np.rint(p.col).astype(np.int64), src.width)
                row = np.clip(np.rint(p.row).astype(np.int64), 0, src.height - 1)
                samples.append((feat.codes[row, col], ok & usable[row, col]))
                continue
            val, vok = sample_bilinear(feat, p.col, p.row, 1, valid=usable)
            vok = ok & vok
            if kind == "census":
                samples.append((census_transform(val, window, wrap_axis=1).codes, _erode_wrap(vok, window)))
            else:
                samples.append((val, vok))
        cnt = np.zeros((h, w), dtype=np.int64)
        for _, ok in samples:
            cnt += ok
        if kind == "zncc":
            c = _zncc_dispersion(samples, zncc_radius, cnt)
        else:
            total = np.zeros((h, w), dtype=np.int64)
            for (ca, oa), (cb, ob) in combinations(samples, 2):
                total += np.where(oa & ob, np.bitwise_count(ca ^ cb), 0)
            npairs = cnt * (cnt - 1) // 2
            with np.errstate(invalid="ignore", divide="ignore"):
                c = total / (npairs * nbits)
        good = cnt >= 2
        cost[:, :, i] = np.where(good, c, SENTINEL)
        count[:, :, i] = cnt
    return SweepVolume(cost, count, hyp, grid)


def _zncc_dispersion(samples, radius, cnt):
    size = 2 * radius + 1
    stats = []
    for val, ok in samples:
        v = np.where(ok, val, 0.0)
        mu = ndimage.uniform_filter(v, size, mode=["nearest", "wrap"])
        var = ndimage.uniform_filter(v * v, size, mode=["nearest", "wrap"]) - mu * mu
        stats.append((v, mu, np.maximum(var, 0.0), ok))
    total = np.zeros(cnt.shape)
    pairs = np.zeros(cnt.shape)
    for (va, ma, sa, oa), (vb, mb, sb, ob) in combinations(stats, 2):
        cov = ndimage.uniform_filter(va * vb, size, mode=["nearest", "wrap"]) - ma * mb
        zncc = cov / np.sqrt(sa * sb + 1e-6)
        both = oa & ob
        total += np.where(both, np.clip((1.0 - zncc) / 2.0, 0.0, 1.0), 0.0)
        pairs += both
    with np.errstate(invalid="ignore", divide="ignore"):
        return total / pairs


def aggregate_sweep(vol: SweepVolume, p1: float = 0.03, p2: float = 0.3, threads: int = 1) -> SweepVolume:
    """SGM along the reference grid; azimuth (ERP columns) wraps, invalid cells stay invalid."""
    if not p2 >= p1 > 0:
        raise ParameterError(f"need P2 >= P1 > 0, got P1={p1}, P2={p2}")
    # The kernel wraps rows, so run it on the transposed volume.
    c = np.ascontiguousarray(vol.cost.transpose(1, 0, 2))
    v = np.ascontiguousarray(vol.valid.transpose(1, 0, 2))
    s = _sgm.aggregate(c, v, p1, p2, threads).transpose(1, 0, 2)
    s = np.where(vol.valid, s, SENTINEL).astype(vol.cost.dtype)
    return SweepVolume(np.ascontiguousarray(s), vol.count, vol.hypotheses, vol.grid)


def softargmin_depth(vol: SweepVolume, temperature: float = 1.0):
    """Softmax(-cost / T)-weighted mean of hypothesis depths, plus 3-neighbour confidence."""
    if not temperature > 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    rho = vol.hypotheses.depths
    valid = vol.valid
    z = np.where(valid, -vol.cost.astype(np.float64) / temperature, -np.inf)
    zmax = np.max(z, axis=2, keepdims=True)
    any_valid = np.isfinite(zmax[..., 0])
    e = np.exp(z - np.where(np.isfinite(zmax), zmax, 0.0))
    total = e.sum(axis=2)
    with np.errstate(invalid="ignore"):
        wts = e / np.where(total > 0, total, 1.0)[..., None]
    depth = np.clip(wts @ rho, rho[0], rho[-1])
    k = np.argmax(wts, axis=2)
    n = rho.size
    conf = np.zeros(k.shape)
    for off in (-1, 0, 1):
        kk = k + off
        inside = (kk >= 0) & (kk < n)
        conf += np.where(inside, np.take_along_axis(wts, np.clip(kk, 0, n - 1)[..., None], 2)[..., 0], 0.0)
    depth = np.where(any_valid, depth, np.inf)
    conf = np.where(any_valid, np.clip(conf, 0.0, 1.0), 0.0)
    return FloatMap(depth, unit="m", projection=ERP), FloatMap(conf, projection=ERP)


@dataclass(frozen=True)
class SweepParams:
    rho_min: float = 0.5
    rho_max: float = 1000.0
    num_hypotheses: int = 64
    temperature: float = 1.0
    kind: str = "census"
    window: int = 7
    p1: float = 0.03
    p2: float = 0.3
    aggregate: bool = True


def sweep_depth(rig: CameraRig, views: dict, grid: ErpGrid, params: SweepParams = SweepParams(), threads: int = 1):
    hyp = make_hypotheses(params.rho_min, params.rho_max, params.num_hypotheses)
    vol = build_sweep_cost(rig, views, hyp, grid, params.window, params.kind)
    temp = params.temperature
    if params.aggregate:
        vol = aggregate_sweep(vol, params.p1, params.p2, threads)
        temp = temp * len(_sgm.DIRECTIONS) * params.p1
    return softargmin_depth(vol, temp)
