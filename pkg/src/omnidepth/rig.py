"""Camera rigs, GEER rectification of arbitrary camera pairs, and ray generation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from . import sphere
from .errors import ConfigError, DegeneratePairError, FormatError
from .raster import ERP, GEER, PanoImage, sample_bilinear
from .sphere import ErpGrid, GeerGrid, PixelCoord


@dataclass(frozen=True)
class Pose:
    """Camera centre in the rig frame and rotation taking rig directions to camera directions.

    Points transform as ``X_cam = R @ (X_rig - center)``.
    """

    center: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        c = np.array(self.center, dtype=np.float64).reshape(3)
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-10) or np.linalg.det(r) < 0:
            raise ValueError("rotation must be orthonormal with determinant +1")
        c.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "rotation", r)

    def to_frame(self, points):
        return (np.asarray(points) - self.center) @ self.rotation.T

    def from_frame(self, points):
        return np.asarray(points) @ self.rotation + self.center

    def dirs_to_rig(self, dirs):
        return np.asarray(dirs) @ self.rotation


@dataclass(frozen=True)
class CameraRig:
    cameras: tuple[tuple[str, Pose], ...]
    reference_id: str

    def __post_init__(self):
        cams = tuple((str(i), p) for i, p in self.cameras)
        ids = [i for i, _ in cams]
        if len(set(ids)) != len(ids):
            raise ValueError(f"camera ids must be unique: {ids}")
        if self.reference_id not in ids:
            raise ValueError(f"reference id {self.reference_id!r} not among cameras {ids}")
        object.__setattr__(self, "cameras", cams)

    @property
    def ids(self) -> list[str]:
        return [i for i, _ in self.cameras]

    def pose(self, cam_id: str) -> Pose:
        for i, p in self.cameras:
            if i == cam_id:
                return p
        raise KeyError(f"unknown camera id {cam_id!r}")

    @property
    def reference(self) -> Pose:
        return self.pose(self.reference_id)

    def pairs(self) -> list[tuple[str, str]]:
        return list(combinations(self.ids, 2))

    def subset(self, n_views: int) -> "CameraRig":
        """First ``n_views`` cameras; the reference camera must be among them."""
        if not 1 <= n_views <= len(self.cameras):
            raise ConfigError(f"views must be in [1, {len(self.cameras)}], got {n_views}")
        cams = self.cameras[:n_views]
        if self.reference_id not in [i for i, _ in cams]:
            raise ConfigError(f"reference camera {self.reference_id!r} not within the first {n_views} views")
        return CameraRig(cams, self.reference_id)


# Camera frame whose polar (+x) axis points up the rig +z axis, so ERP rows
# run from zenith to nadir and columns sweep the horizon.
UPRIGHT = np.array([[0.0, 0.0, 1.0], [0.0, -1.0, 0.0], [1.0, 0.0, 0.0]])


def square_rig(side: float = 1.0, upright: bool = True) -> CameraRig:
    """Four cameras on the corners of a horizontal square; ``cam1`` at the origin is the reference."""
    rot = UPRIGHT if upright else np.eye(3)
    corners = [(0.0, 0.0), (side, 0.0), (side, side), (0.0, side)]
    cams = tuple((f"cam{k + 1}", Pose(np.array([x, y, 0.0]), rot)) for k, (x, y) in enumerate(corners))
    return CameraRig(cams, "cam1")


def rig_to_dict(rig: CameraRig) -> dict:
    return {
        "reference_id": rig.reference_id,
        "cameras": [
            {"id": i, "center": [float(v) for v in p.center], "rotation": [float(v) for v in p.rotation.ravel()]}
            for i, p in rig.cameras
        ],
    }


def rig_from_dict(d: dict) -> CameraRig:
    try:
        cams = tuple(
            (c["id"], Pose(np.array(c["center"], dtype=np.float64),
                           np.array(c["rotation"], dtype=np.float64).reshape(3, 3)))
            for c in d["cameras"]
        )
        return CameraRig(cams, d["reference_id"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad rig manifest: {exc}") from None


def save_rig(rig: CameraRig, path) -> None:
    Path(path).write_text(json.dumps(rig_to_dict(rig), indent=2) + "\n")


def load_rig(path) -> CameraRig:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"rig manifest is not valid JSON: {exc}") from None
    return rig_from_dict(d)


@dataclass(frozen=True)
class RectifiedPair:
    """GEER frame of a stereo pair: x runs from the right centre to the left centre."""

    left_id: str
    right_id: str
    baseline: float
    rect_rotation: np.ndarray
    grid: GeerGrid
    left_center: np.ndarray
    right_center: np.ndarray

    @property
    def name(self) -> str:
        return f"{self.left_id}-{self.right_id}"

    def frame_pose(self, which: str = "left") -> Pose:
        c = self.left_center if which == "left" else self.right_center
        return Pose(c, self.rect_rotation)


def rectify_pair(rig: CameraRig, left_id: str, right_id: str, grid: GeerGrid) -> RectifiedPair:
    if left_id == right_id:
        raise DegeneratePairError(f"pair needs two distinct cameras, got {left_id!r} twice")
    c_l = rig.pose(left_id).center
    c_r = rig.pose(right_id).center
    delta = c_l - c_r
    baseline = float(np.linalg.norm(delta))
    if baseline == 0.0:
        raise DegeneratePairError(f"cameras {left_id!r} and {right_id!r} share a centre")
    ex = delta / baseline
    w = np.array([0.0, 0.0, 1.0])
    if abs(w @ ex) > 0.999:
        w = np.array([0.0, 1.0, 0.0])
    ez = w - (w @ ex) * ex
    ez /= np.linalg.norm(ez)
    ey = np.cross(ez, ex)
    rot = np.stack([ex, ey, ez])
    rot.setflags(write=False)
    return RectifiedPair(left_id, right_id, baseline, rot, grid, c_l, c_r)


def resample_to_geer(image: PanoImage, pose: Pose, pair: RectifiedPair) -> PanoImage:
    """Resample an ERP panorama taken with ``pose`` into the pair's GEER frame."""
    dirs_rect = sphere.grid_dirs(pair.grid)
    dirs_cam = dirs_rect @ pair.rect_rotation @ pose.rotation.T
    s = sphere.cart_to_sph(dirs_cam)
    src = ErpGrid(image.width, image.height)
    p = sphere.erp_pixel_of(s, src)
    out = sample_bilinear(image.data, p.col, p.row, wrap_axis=1)
    return PanoImage(np.clip(out, 0.0, 1.0), projection=GEER)


def resample_mask_to_geer(mask: np.ndarray, pose: Pose, pair: RectifiedPair) -> np.ndarray:
    """Flag GEER pixels whose bilinear footprint touches a flagged ERP pixel."""
    dirs_cam = sphere.grid_dirs(pair.grid) @ pair.rect_rotation @ pose.rotation.T
    p = sphere.erp_pixel_of(sphere.cart_to_sph(dirs_cam), ErpGrid(mask.shape[1], mask.shape[0]))
    _, ok = sample_bilinear(np.zeros(mask.shape), p.col, p.row, 1, valid=~mask)
    return ~ok


def world_ray_of(rig: CameraRig, cam_id: str, pixel: PixelCoord, grid, projection=ERP):
    """Origin and unit direction (rig frame) of the ray through ``pixel``.

    ``projection`` is ``"ERP"`` for the camera's own panorama or a
    :class:`RectifiedPair` containing ``cam_id`` for its GEER image.
    """
    pose = rig.pose(cam_id)
    if isinstance(projection, RectifiedPair):
        if cam_id not in (projection.left_id, projection.right_id):
            raise KeyError(f"camera {cam_id!r} is not part of pair {projection.name}")
        rot = projection.rect_rotation
        s = sphere.geer_dir_of(pixel, projection.grid)
    else:
        rot = pose.rotation
        s = sphere.erp_dir_of(pixel, grid)
    d = sphere.unit_dirs(s.phi, s.theta) @ rot
    origin = np.broadcast_to(pose.center, d.shape).copy()
    return origin, d


def grid_rays(pose_or_pair, grid, which: str = "left"):
    """Rays for every pixel of a camera ERP (``Pose``) or a pair's GEER image."""
    if isinstance(pose_or_pair, RectifiedPair):
        pose = pose_or_pair.frame_pose(which)
    else:
        pose = pose_or_pair
    d = sphere.grid_dirs(grid) @ pose.rotation
    return np.broadcast_to(pose.center, d.shape), d
