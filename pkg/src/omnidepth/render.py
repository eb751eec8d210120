"""Analytic ray-cast renderer for synthetic multi-camera panoramas with exact depth."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import sphere
from .errors import FormatError, InvalidCameraError
from .raster import ERP, GEER, FloatMap, PanoImage, ValidityMask
from .rig import CameraRig, RectifiedPair, grid_rays

T_EPS = 1e-9


# --- textures ----------------------------------------------------------------

@dataclass(frozen=True)
class Solid:
    color: tuple = (0.5, 0.5, 0.5)

    def albedo(self, p):
        return np.broadcast_to(np.asarray(self.color, dtype=np.float64), p.shape).copy()


def _hash01(ix, iy, iz, seed):
    # Integer lattice hash (xorshift-multiply) mapped to [0, 1).
    h = (ix.astype(np.uint64) * np.uint64(0x9E3779B1)
         ^ iy.astype(np.uint64) * np.uint64(0x85EBCA77)
         ^ iz.astype(np.uint64) * np.uint64(0xC2B2AE3D)
         ^ np.uint64(seed) * np.uint64(0x27D4EB2F))
    h ^= h >> np.uint64(15)
    h *= np.uint64(0x2C1B3C6D)
    h ^= h >> np.uint64(12)
    h *= np.uint64(0x297A2D39)
    h ^= h >> np.uint64(15)
    return (h & np.uint64(0xFFFFFF)).astype(np.float64) / float(0x1000000)


@dataclass(frozen=True)
class Checker:
    """World-space 3-D checkerboard.

    ``jitter`` in [0, 1] darkens each cell by a hashed random factor, which
    breaks the pattern's periodicity so that matching has a unique answer.
    ``grain`` adds smooth value noise of period ``grain_scale`` inside cells.
    """

    scale: float = 0.25
    color_a: tuple = (0.9, 0.9, 0.9)
    color_b: tuple = (0.15, 0.15, 0.15)
    jitter: float = 0.0
    seed: int = 0
    grain: float = 0.0
    grain_scale: float = 0.1
    offset: tuple = (0.1234, 0.3456, 0.5678)

    def albedo(self, p):
        q = p / self.scale + np.asarray(self.offset)
        idx = np.floor(q).astype(np.int64)
        parity = (idx.sum(axis=-1) & 1).astype(bool)
        out = np.where(parity[..., None], np.asarray(self.color_a), np.asarray(self.color_b))
        if self.jitter:
            u = _hash01(idx[..., 0], idx[..., 1], idx[..., 2], self.seed)
            out = out * (1.0 - self.jitter * u)[..., None]
        if self.grain:
            out = out * (1.0 - self.grain * value_noise(p / self.grain_scale, self.seed + 101))[..., None]
        return out


def value_noise(q, seed):
    """Trilinearly interpolated lattice noise in [0, 1)."""
    base = np.floor(q)
    f = q - base
    f = f * f * (3.0 - 2.0 * f)
    i = base.astype(np.int64)
    out = np.zeros(q.shape[:-1])
    for dx in (0, 1):
        wx = f[..., 0] if dx else 1.0 - f[..., 0]
        for dy in (0, 1):
            wy = f[..., 1] if dy else 1.0 - f[..., 1]
            for dz in (0, 1):
                wz = f[..., 2] if dz else 1.0 - f[..., 2]
                out += wx * wy * wz * _hash01(i[..., 0] + dx, i[..., 1] + dy, i[..., 2] + dz, seed)
    return out


# --- primitives ----------------------------------------------------------------

@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float
    texture: object = field(default_factory=Checker)
    hollow: bool = False

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("sphere radius must be positive")

    def intersect(self, o, d):
        c = np.asarray(self.center, dtype=np.float64)
        oc = o - c
        b = np.einsum("...i,...i->...", d, oc)
        cc = np.einsum("...i,...i->...", oc, oc) - self.radius ** 2
        disc = b * b - cc
        ok = disc >= 0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        t0 = -b - sq
        t1 = -b + sq
        t = np.where(t0 > T_EPS, t0, np.where(t1 > T_EPS, t1, np.inf))
        return np.where(ok, t, np.inf)

    def normal(self, p):
        n = p - np.asarray(self.center, dtype=np.float64)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def contains(self, x) -> bool:
        return (not self.hollow) and np.linalg.norm(np.asarray(x) - np.asarray(self.center)) < self.radius


@dataclass(frozen=True)
class Plane:
    point: tuple
    normal_vec: tuple
    texture: object = field(default_factory=Checker)

    def __post_init__(self):
        n = np.asarray(self.normal_vec, dtype=np.float64)
        object.__setattr__(self, "normal_vec", tuple(n / np.linalg.norm(n)))

    def intersect(self, o, d):
        n = np.asarray(self.normal_vec)
        denom = d @ n
        num = (np.asarray(self.point) - o) @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = num / denom
        return np.where((denom != 0) & (t > T_EPS), t, np.inf)

    def normal(self, p):
        return np.broadcast_to(np.asarray(self.normal_vec), p.shape)

    def contains(self, x) -> bool:
        return abs((np.asarray(x) - np.asarray(self.point)) @ np.asarray(self.normal_vec)) < 1e-12


@dataclass(frozen=True)
class Box:
    """Axis-aligned box; ``hollow=True`` makes it a room seen from inside."""

    min_corner: tuple
    max_corner: tuple
    texture: object = field(default_factory=Checker)
    hollow: bool = False

    def __post_init__(self):
        if not np.all(np.asarray(self.min_corner) < np.asarray(self.max_corner)):
            raise ValueError("box min corner must be below max corner componentwise")

    def intersect(self, o, d):
        lo = np.asarray(self.min_corner, dtype=np.float64)
        hi = np.asarray(self.max_corner, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / d
            ta = (lo - o) * inv
            tb = (hi - o) * inv
        # Rays parallel to a slab: inside -> unbounded, outside -> miss.
        par = d == 0
        inside = (o >= lo) & (o <= hi)
        ta = np.where(par, np.where(inside, -np.inf, np.inf), ta)
        tb = np.where(par, np.where(inside, np.inf, np.inf), tb)
        t_near = np.max(np.minimum(ta, tb), axis=-1)
        t_far = np.min(np.maximum(ta, tb), axis=-1)
        hit = (t_near <= t_far) & (t_far > T_EPS)
        t = np.where(t_near > T_EPS, t_near, t_far)
        return np.where(hit, t, np.inf)

    def normal(self, p):
        lo = np.asarray(self.min_corner, dtype=np.float64)
        hi = np.asarray(self.max_corner, dtype=np.float64)
        dist = np.stack([np.abs(p - lo), np.abs(p - hi)], axis=-2)  # (..., 2, 3)
        flat = dist.reshape(dist.shape[:-2] + (6,))
        k = np.argmin(flat, axis=-1)
        axis = k % 3
        sign = np.where(k < 3, -1.0, 1.0)
        n = np.zeros(p.shape)
        np.put_along_axis(n, axis[..., None], sign[..., None], axis=-1)
        return n

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return (not self.hollow) and bool(np.all(x > np.asarray(self.min_corner)) and np.all(x < np.asarray(self.max_corner)))


@dataclass(frozen=True)
class Scene:
    primitives: tuple
    light_dir: tuple = (0.3, -0.5, 0.8)
    ambient: float = 0.35
    background: tuple = (0.0, 0.0, 0.0)
    soiling: tuple = ()

    def check_camera(self, center) -> None:
        for prim in self.primitives:
            if prim.contains(center):
                raise InvalidCameraError(f"camera at {tuple(center)} lies inside {type(prim).__name__}")


def cast(scene: Scene, origins, dirs):
    """Nearest positive hit distance and primitive index per ray (``inf`` / -1 on miss)."""
    shape = dirs.shape[:-1]
    best = np.full(shape, np.inf)
    which = np.full(shape, -1, dtype=np.int64)
    for k, prim in enumerate(scene.primitives):
        t = prim.intersect(origins, dirs)
        closer = t < best
        best = np.where(closer, t, best)
        which = np.where(closer, k, which)
    return best, which


def shade(scene: Scene, origins, dirs, t, which):
    shape = dirs.shape[:-1]
    rgb = np.broadcast_to(np.asarray(scene.background, dtype=np.float64), shape + (3,)).copy()
    light = np.asarray(scene.light_dir, dtype=np.float64)
    light = light / np.linalg.norm(light)
    for k, prim in enumerate(scene.primitives):
        sel = which == k
        if not np.any(sel):
            continue
        p = origins[sel] + t[sel, None] * dirs[sel]
        n = np.array(prim.normal(p))
        facing = np.einsum("ij,ij->i", n, dirs[sel]) > 0
        n[facing] *= -1.0
        lam = np.maximum(n @ light, 0.0)
        rgb[sel] = prim.texture.albedo(p) * (scene.ambient + (1 - scene.ambient) * lam)[:, None]
    return np.clip(rgb, 0.0, 1.0)


def _render_rays(scene, origins, dirs, threads):
    origins = np.ascontiguousarray(np.broadcast_to(origins, dirs.shape))
    h = dirs.shape[0]
    chunks = [(a, min(a + 64, h)) for a in range(0, h, 64)]

    def work(span):
        a, b = span
        o, d = origins[a:b], dirs[a:b]
        t, which = cast(scene, o, d)
        return t, shade(scene, o, d, t, which)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def render_panorama(scene: Scene, rig: CameraRig, cam_id: str, grid, projection=ERP, threads: int = 1):
    """Render RGB and Euclidean depth for one camera.

    ``projection`` is ``"ERP"`` (``grid`` is an :class:`ErpGrid`) or a
    :class:`RectifiedPair` containing ``cam_id`` (its GEER grid is used).
    """
    center = rig.pose(cam_id).center
    scene.check_camera(center)
    if isinstance(projection, RectifiedPair):
        which = "left" if cam_id == projection.left_id else "right"
        if cam_id not in (projection.left_id, projection.right_id):
            raise KeyError(f"camera {cam_id!r} is not part of pair {projection.name}")
        origins, dirs = grid_rays(projection, projection.grid, which)
        tag = GEER
    else:
        origins, dirs = grid_rays(rig.pose(cam_id), grid)
        tag = ERP
    t, rgb = _render_rays(scene, origins, dirs, threads)
    return PanoImage(rgb, projection=tag), FloatMap(t, unit="m", projection=tag)


def render_gt_disparity(depth: FloatMap, pair: RectifiedPair, margin_cols: int = 0) -> FloatMap:
    """Ground-truth disparity in pixels for a depth map in the pair's left GEER frame.

    Blind columns get ``+inf`` (invalid); infinite depth maps to disparity 0.
    """
    phi = sphere.geer_column_phi(pair.grid)[None, :]
    d = sphere.depth_to_disparity(phi, depth.data, pair.baseline)
    px = d * pair.grid.width / np.pi
    px = np.where(np.isnan(px), np.inf, px)
    keep = sphere.blind_point_mask(pair.grid, margin_cols).data
    return FloatMap(np.where(keep, px, np.inf), unit="px", projection=GEER)


def render_occlusion(scene: Scene, pair: RectifiedPair, depth: FloatMap, rel_gap: float = 0.01) -> ValidityMask:
    """True where the left-view surface point is hidden from the right camera."""
    o_l, d_l = grid_rays(pair, pair.grid, "left")
    pts = o_l + depth.data[..., None] * d_l
    finite = np.isfinite(depth.data)
    pts = np.where(finite[..., None], pts, 0.0)
    v = pts - pair.right_center
    dist = np.linalg.norm(v, axis=-1)
    dirs = v / np.where(dist > 0, dist, 1.0)[..., None]
    t, _ = cast(scene, np.broadcast_to(pair.right_center, dirs.shape), dirs)
    occ = finite & (t < dist * (1.0 - rel_gap))
    return ValidityMask(occ, projection=GEER)


# --- scene files ---------------------------------------------------------------

def _texture_from(d):
    if d is None:
        return Checker()
    kind = d.get("kind", "checker")
    if kind == "solid":
        return Solid(tuple(d.get("color", (0.5, 0.5, 0.5))))
    if kind == "checker":
        return Checker(scale=d.get("scale", 0.25), color_a=tuple(d.get("color_a", (0.9, 0.9, 0.9))),
                       color_b=tuple(d.get("color_b", (0.15, 0.15, 0.15))), jitter=d.get("jitter", 0.0),
                       seed=d.get("seed", 0), grain=d.get("grain", 0.0), grain_scale=d.get("grain_scale", 0.1))
    raise FormatError(f"unknown texture kind {kind!r}")


def _texture_to(t):
    if isinstance(t, Solid):
        return {"kind": "solid", "color": list(t.color)}
    return {"kind": "checker", "scale": t.scale, "color_a": list(t.color_a), "color_b": list(t.color_b),
            "jitter": t.jitter, "seed": t.seed, "grain": t.grain, "grain_scale": t.grain_scale}


def scene_from_dict(d: dict) -> Scene:
    from .soil import SoilSpec

    prims = []
    try:
        for p in d["primitives"]:
            tex = _texture_from(p.get("texture"))
            kind = p["kind"]
            if kind == "sphere":
                prims.append(Sphere(tuple(p["center"]), p["radius"], tex, p.get("hollow", False)))
            elif kind == "plane":
                prims.append(Plane(tuple(p["point"]), tuple(p["normal"]), tex))
            elif kind == "box":
                prims.append(Box(tuple(p["min"]), tuple(p["max"]), tex, p.get("hollow", False)))
            else:
                raise FormatError(f"unknown primitive kind {kind!r}")
        light = d.get("light", {})
        soil = tuple(
            (s["camera"], SoilSpec(kind=s["kind"], seed=s.get("seed", 0), coverage=s.get("coverage", 0.3),
                                   radius_range=tuple(s.get("radius_range", (6, 30))),
                                   blur_px=s.get("blur_px", 6.0), glare_gain=s.get("glare_gain", 0.8)))
            for s in d.get("soiling", [])
        )
        return Scene(tuple(prims), tuple(light.get("direction", (0.3, -0.5, 0.8))), light.get("ambient", 0.35),
                     tuple(d.get("background", (0.0, 0.0, 0.0))), soil)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"bad scene description: {exc}") from None


def scene_to_dict(scene: Scene) -> dict:
    prims = []
    for p in scene.primitives:
        if isinstance(p, Sphere):
            prims.append({"kind": "sphere", "center": list(p.center), "radius": p.radius, "hollow": p.hollow,
                          "texture": _texture_to(p.texture)})
        elif isinstance(p, Plane):
            prims.append({"kind": "plane", "point": list(p.point), "normal": list(p.normal_vec),
                          "texture": _texture_to(p.texture)})
        else:
            prims.append({"kind": "box", "min": list(p.min_corner), "max": list(p.max_corner), "hollow": p.hollow,
                          "texture": _texture_to(p.texture)})
    return {
        "primitives": prims,
        "light": {"direction": list(scene.light_dir), "ambient": scene.ambient},
        "background": list(scene.background),
        "soiling": [
            {"camera": cam, "kind": s.kind, "seed": s.seed, "coverage": s.coverage,
             "radius_range": list(s.radius_range), "blur_px": s.blur_px, "glare_gain": s.glare_gain}
            for cam, s in scene.soiling
        ],
    }


def load_scene(path) -> Scene:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"scene file is not valid JSON: {exc}") from None
    return scene_from_dict(d)


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=2) + "\n")


def desk_scene(jitter: float = 0.6, grain: float = 0.4, with_objects: bool = True) -> Scene:
    """Textured room around a 1 m square rig, kept far enough away that
    disparities stay below 64 px on a 512-column GEER grid for every pair."""

    def tex(scale, a, b, seed):
        return Checker(scale=scale, color_a=a, color_b=b, jitter=jitter, seed=seed, grain=grain, grain_scale=0.1)

    room = Box((-5.8, -5.6, -4.7), (6.8, 6.6, 5.0), tex(0.4, (0.9, 0.9, 0.9), (0.15, 0.15, 0.15), 1), hollow=True)
    prims = [room]
    if with_objects:
        prims += [
            Sphere((4.4, -3.4, -1.5), 0.9, tex(0.3, (0.9, 0.6, 0.3), (0.2, 0.1, 0.05), 2)),
            Box((-4.3, 2.9, -2.6), (-3.1, 4.1, -0.8), tex(0.25, (0.3, 0.7, 0.9), (0.05, 0.15, 0.25), 3)),
            Sphere((0.5, 4.9, 1.8), 0.8, tex(0.25, (0.8, 0.9, 0.4), (0.2, 0.25, 0.05), 4)),
        ]
    return Scene(tuple(prims))


def near_scene(jitter: float = 0.6, grain: float = 0.4) -> Scene:
    """Small textured room hugging the rig.

    Inverse-depth hypotheses from 0.5 m outward are spaced a few percent
    apart only at short range, so sweep accuracy is checked here.
    """

    def tex(scale, a, b, seed):
        return Checker(scale=scale, color_a=a, color_b=b, jitter=jitter, seed=seed, grain=grain, grain_scale=0.15)

    return Scene((
        Box((-1.3, -1.2, -1.1), (2.3, 2.2, 1.3), tex(0.4, (0.9, 0.9, 0.9), (0.15, 0.15, 0.15), 1), hollow=True),
        Sphere((1.7, -0.6, -0.5), 0.3, tex(0.28, (0.9, 0.6, 0.3), (0.2, 0.1, 0.05), 2)),
        Box((-0.9, 1.3, -0.9), (-0.4, 1.8, -0.3), tex(0.28, (0.3, 0.7, 0.9), (0.05, 0.15, 0.25), 3)),
    ))
