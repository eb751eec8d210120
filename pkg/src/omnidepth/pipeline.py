"""Render, estimate and evaluate frame sets on disk.

Frame layout under the output directory::

    rgb/<cam>.png                 clean ERP panorama per camera
    rgb_soiled/<cam>.png          soiled panorama (soiled cameras only)
    mask_soiled/<cam>.png         soiled pixels (white)
    pairs/<l>-<r>/left.png        GEER-rectified pair
    pairs/<l>-<r>/right.png
    pairs/<l>-<r>/left_soiled.png, right_soiled.png, mask_left.png, mask_right.png
    pairs/<l>-<r>/disp.pfm        ground-truth disparity (px), inf where undefined
    pairs/<l>-<r>/occlusion.png   left pixels hidden from the right camera
    depth/<ref>.pfm               ground-truth reference depth on the depth grid
    estimate/depth.pfm            estimated reference depth (inf = invalid)
    estimate/confidence.pfm
    estimate/pairs/<l>-<r>/disp.pfm
    eval/report.json, eval/report.txt, eval/error_map.png, eval/cloud.xyz
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fusion, metrics, render, rig as rigmod, sphere, stereo, sweep
from .config import RunConfig
from .errors import ConfigError, DataError, FormatError, InvariantViolation
from .raster import ERP, GEER, FloatMap, PanoImage, mask_read, mask_write, pfm_read, pfm_write, png_read, png_write, sample_bilinear
from .soil import SoilSpec, apply_soiling
from .sphere import ErpGrid, GeerGrid


def _load_rig(cfg: RunConfig) -> rigmod.CameraRig:
    try:
        return rigmod.load_rig(cfg.rig_path)
    except FileNotFoundError:
        raise ConfigError(f"rig manifest not found: {cfg.rig_path}") from None
    except (FormatError, ValueError, KeyError) as exc:
        raise ConfigError(f"bad rig manifest {cfg.rig_path}: {exc}") from None


def _load_scene(cfg: RunConfig) -> render.Scene:
    if cfg.scene_path is None:
        raise ConfigError("rendering needs [paths] scene")
    try:
        return render.load_scene(cfg.scene_path)
    except FileNotFoundError:
        raise ConfigError(f"scene file not found: {cfg.scene_path}") from None
    except FormatError as exc:
        raise ConfigError(str(exc)) from None


def active_rig(cfg: RunConfig) -> rigmod.CameraRig:
    rig = _load_rig(cfg)
    if cfg.views is None:
        return rig
    if cfg.views > len(rig.ids):
        raise ConfigError(f"--views {cfg.views} exceeds the {len(rig.ids)} cameras of the rig")
    return rig.subset(cfg.views)


def geer_grid(cfg: RunConfig) -> GeerGrid:
    return GeerGrid(cfg.render.geer_width, cfg.render.geer_height)


def erp_grid(cfg: RunConfig) -> ErpGrid:
    return ErpGrid(cfg.render.erp_width, cfg.render.erp_height)


def depth_grid(cfg: RunConfig) -> ErpGrid:
    return ErpGrid(cfg.depth_width, cfg.depth_height)


def _soil_specs(scene: render.Scene, seed: int) -> dict:
    specs = {}
    for cam, spec in scene.soiling:
        specs[cam] = SoilSpec(spec.kind, spec.seed + seed, spec.coverage, spec.radius_range, spec.blur_px,
                              spec.glare_gain)
    return specs


def _mkdir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {path}: {exc}") from None
    return path


# --- render --------------------------------------------------------------------

def cmd_render(cfg: RunConfig) -> Path:
    """Render every camera, every pair and the reference ground truth."""
    rig = _load_rig(cfg)
    scene = _load_scene(cfg)
    out = _mkdir(cfg.output_dir)
    specs = _soil_specs(scene, cfg.seed)
    unknown = set(specs) - set(rig.ids)
    if unknown:
        raise ConfigError(f"soiling names unknown cameras {sorted(unknown)}")
    egrid = erp_grid(cfg)
    ggrid = geer_grid(cfg)
    th = cfg.threads

    rgb_dir = _mkdir(out / "rgb")
    soiled = {}
    for cam in rig.ids:
        img, _ = render.render_panorama(scene, rig, cam, egrid, threads=th)
        png_write(img, rgb_dir / f"{cam}.png")
        if cam in specs:
            dirty, mask = apply_soiling(img, specs[cam])
            png_write(dirty, _mkdir(out / "rgb_soiled") / f"{cam}.png")
            mask_write(mask, _mkdir(out / "mask_soiled") / f"{cam}.png")
            soiled[cam] = (dirty, mask.data)

    for left, right in rig.pairs():
        pair = rigmod.rectify_pair(rig, left, right, ggrid)
        pdir = _mkdir(out / "pairs" / pair.name)
        img_l, depth_l = render.render_panorama(scene, rig, left, None, projection=pair, threads=th)
        img_r, _ = render.render_panorama(scene, rig, right, None, projection=pair, threads=th)
        png_write(img_l, pdir / "left.png")
        png_write(img_r, pdir / "right.png")
        pfm_write(render.render_gt_disparity(depth_l, pair, cfg.render.margin_cols), pdir / "disp.pfm")
        mask_write(render.render_occlusion(scene, pair, depth_l), pdir / "occlusion.png")
        if left in soiled or right in soiled:
            for which, cam, clean in (("left", left, img_l), ("right", right, img_r)):
                dirty, m = _soiled_geer(clean, cam, rig, pair, soiled)
                png_write(dirty, pdir / f"{which}_soiled.png")
                mask_write(m, pdir / f"mask_{which}.png")

    ref = rig.reference_id
    _, gt = render.render_panorama(scene, rig, ref, depth_grid(cfg), threads=th)
    pfm_write(gt, _mkdir(out / "depth") / f"{ref}.pfm")
    rigmod.save_rig(rig, out / "rig.json")
    return out


def _soiled_geer(clean: PanoImage, cam, rig, pair, soiled):
    """Soiled GEER view: clean pixels outside the resampled soil mask."""
    h, w = clean.data.shape[:2]
    if cam not in soiled:
        return clean, np.zeros((h, w), bool)
    dirty, mask = soiled[cam]
    pose = rig.pose(cam)
    m = rigmod.resample_mask_to_geer(mask, pose, pair)
    warped = rigmod.resample_to_geer(dirty, pose, pair)
    data = np.where(m[..., None], warped.data, clean.data)
    return PanoImage(data, projection=GEER), m


# --- estimate ------------------------------------------------------------------

def _need(path: Path) -> Path:
    if not path.exists():
        raise DataError(f"missing input {path}")
    return path


def resolve_pairs(cfg: RunConfig, rig: rigmod.CameraRig) -> list:
    if cfg.pairs is None:
        return rig.pairs()
    ids = set(rig.ids)
    for left, right in cfg.pairs:
        if left not in ids or right not in ids:
            raise ConfigError(f"pair {left}-{right} names a camera outside the active rig {sorted(ids)}")
        if left == right:
            raise ConfigError(f"pair {left}-{right} repeats a camera")
    return list(cfg.pairs)


def pair_depth(result: stereo.StereoResult, pair: rigmod.RectifiedPair):
    """Left-camera depth and confidence from a pairwise disparity map.

    Pixels whose disparity is not a valid triangulation become invalid;
    left-right failures stay valid with confidence 0.
    """
    disp = result.disparity.disparity.data
    grid = pair.grid
    phi = np.broadcast_to(sphere.geer_column_phi(grid)[None, :], disp.shape)
    d = np.where(np.isfinite(disp), disp, 0.0) * grid.col_step
    ok = np.isfinite(disp) & (d > sphere.D_MIN) & (phi - d > 0)
    rho = np.full(disp.shape, np.inf)
    rho[ok] = sphere.disparity_to_depth(phi[ok], d[ok], pair.baseline)
    conf = np.where(ok & result.lr_ok.data, result.confidence.data, 0.0)
    return FloatMap(rho, unit="m", projection=GEER), FloatMap(conf, projection=GEER)


def _stereo_inputs(frame: Path, pair_name: str, soiled: bool):
    pdir = frame / "pairs" / pair_name
    if soiled and (pdir / "left_soiled.png").exists():
        left = png_read(_need(pdir / "left_soiled.png"), GEER)
        right = png_read(_need(pdir / "right_soiled.png"), GEER)
        ml = ~mask_read(_need(pdir / "mask_left.png"), GEER).data
        mr = ~mask_read(_need(pdir / "mask_right.png"), GEER).data
        return left, right, ml, mr
    return png_read(_need(pdir / "left.png"), GEER), png_read(_need(pdir / "right.png"), GEER), None, None


@dataclass
class Estimate:
    depth: FloatMap
    confidence: FloatMap
    pair_disparities: dict


def estimate_pairwise(cfg: RunConfig, rig: rigmod.CameraRig, frame: Path) -> Estimate:
    pairs = resolve_pairs(cfg, rig)
    ggrid = geer_grid(cfg)
    dgrid = depth_grid(cfg)
    layers = []
    disps = {}
    for left, right in pairs:
        pair = rigmod.rectify_pair(rig, left, right, ggrid)
        img_l, img_r, ml, mr = _stereo_inputs(frame, pair.name, cfg.soiled)
        if img_l.data.shape[:2] != ggrid.shape or img_r.data.shape[:2] != ggrid.shape:
            raise DataError(f"pair {pair.name} images do not match the configured GEER grid {ggrid.shape}")
        res = stereo.match_pair(img_l, img_r, cfg.stereo, ml, mr, threads=cfg.threads)
        disps[pair.name] = res.disparity.disparity
        depth, conf = pair_depth(res, pair)
        d, c, m = fusion.reproject_depth(depth, conf, pair.frame_pose("left"), rig.reference, dgrid,
                                         cfg.fusion.splat_radius)
        layers.append(fusion.AlignedLayer(d, c, m))
    fused, fconf, _ = fusion.fuse_with_confidence(fusion.AlignedDepthSet(dgrid, tuple(layers)), cfg.fusion.conf_floor)
    if cfg.fusion.fill_holes:
        fused = fusion.fill_holes(fused)
    return Estimate(fused, fconf, disps)


def _sweep_views(cfg: RunConfig, rig: rigmod.CameraRig, frame: Path) -> dict:
    views = {}
    for cam in rig.ids:
        dirty = frame / "rgb_soiled" / f"{cam}.png"
        if cfg.soiled and dirty.exists():
            img = png_read(dirty, ERP)
            mask = ~mask_read(_need(frame / "mask_soiled" / f"{cam}.png"), ERP).data
        else:
            img, mask = png_read(_need(frame / "rgb" / f"{cam}.png"), ERP), None
        views[cam] = (img, mask)
    return views


def estimate_sweep(cfg: RunConfig, rig: rigmod.CameraRig, frame: Path) -> Estimate:
    views = _sweep_views(cfg, rig, frame)
    depth, conf = sweep.sweep_depth(rig, views, depth_grid(cfg), cfg.sweep, threads=cfg.threads)
    return Estimate(depth, conf, {})


def _check_estimate(est: Estimate, grid: ErpGrid) -> None:
    d, c = est.depth.data, est.confidence.data
    if d.shape != grid.shape or c.shape != grid.shape:
        raise InvariantViolation("estimate does not match the depth grid")
    if np.any(d <= 0) or np.any(np.isnan(d)):
        raise InvariantViolation("estimated depth must be positive or inf")
    if np.any((c < 0) | (c > 1)):
        raise InvariantViolation("confidence left [0, 1]")


def cmd_estimate(cfg: RunConfig, frame: Path | None = None) -> Estimate:
    """Estimate the reference depth from the frame set under ``frame`` (default: output dir)."""
    frame = cfg.output_dir if frame is None else Path(frame)
    rig = active_rig(cfg)
    est = estimate_pairwise(cfg, rig, frame) if cfg.kind == "pairwise-fuse" else estimate_sweep(cfg, rig, frame)
    _check_estimate(est, depth_grid(cfg))
    out = _mkdir(cfg.output_dir / "estimate")
    pfm_write(est.depth, out / "depth.pfm")
    pfm_write(est.confidence, out / "confidence.pfm")
    for name, disp in est.pair_disparities.items():
        pfm_write(disp, _mkdir(out / "pairs" / name) / "disp.pfm")
    return est


# --- eval ----------------------------------------------------------------------

def point_cloud(rig: rigmod.CameraRig, depth: FloatMap, colors: np.ndarray | None = None):
    """Rig-frame points and 8-bit colours of the valid pixels of a reference ERP depth map."""
    h, w = depth.data.shape
    grid = ErpGrid(w, h)
    ok = np.isfinite(depth.data)
    rows, cols = np.nonzero(ok)
    origin, dirs = rigmod.world_ray_of(rig, rig.reference_id, sphere.PixelCoord(cols.astype(np.float64),
                                                                               rows.astype(np.float64)), grid)
    pts = origin + depth.data[ok][:, None].astype(np.float64) * dirs
    if colors is None:
        rgb = np.full((pts.shape[0], 3), 255, dtype=np.int64)
    else:
        rgb = np.rint(np.clip(colors[ok], 0.0, 1.0) * 255).astype(np.int64)
    return pts, rgb


def write_point_cloud(path: Path, pts: np.ndarray, rgb: np.ndarray) -> None:
    with open(path, "w") as f:
        for (x, y, z), (r, g, b) in zip(pts.tolist(), rgb.tolist()):
            f.write(f"{x:.9f} {y:.9f} {z:.9f} {r} {g} {b}\n")


def _colors_for(frame: Path, ref: str, grid: ErpGrid):
    path = frame / "rgb" / f"{ref}.png"
    if not path.exists():
        return None
    img = png_read(path, ERP).data
    sh, sw = img.shape[:2]
    rows, cols = np.meshgrid(np.arange(grid.height), np.arange(grid.width), indexing="ij")
    c = (cols + 0.5) * sw / grid.width - 0.5
    r = (rows + 0.5) * sh / grid.height - 0.5
    chans = img if img.ndim == 3 else img[..., None]
    out = np.stack([sample_bilinear(chans[..., k], c, r, 1) for k in range(chans.shape[2])], axis=-1)
    return out if img.ndim == 3 else np.repeat(out, 3, axis=-1)


def evaluate(cfg: RunConfig, pred: FloatMap, gt: FloatMap):
    if pred.data.shape != gt.data.shape:
        raise DataError(f"prediction grid {pred.data.shape} does not match ground truth {gt.data.shape}")
    return metrics.depth_metrics(pred, gt, np.isfinite(gt.data), cfg.metrics.silog_lambda)


def cmd_eval(cfg: RunConfig, pred_path: Path | None = None, gt_path: Path | None = None) -> dict:
    """Write the metric report, error map and point cloud for an estimate."""
    rig = _load_rig(cfg)
    frame = cfg.output_dir
    pred_path = Path(pred_path) if pred_path else frame / "estimate" / "depth.pfm"
    gt_path = Path(gt_path) if gt_path else frame / "depth" / f"{rig.reference_id}.pfm"
    pred = pfm_read(_need(pred_path), unit="m")
    gt = pfm_read(_need(gt_path), unit="m")
    report = evaluate(cfg, pred, gt)
    doc = {"depth": report.to_dict(), "pairs": {}}
    text = [report.to_table()]
    est_pairs = frame / "estimate" / "pairs"
    if est_pairs.is_dir():
        for pdir in sorted(p for p in est_pairs.iterdir() if p.is_dir()):
            gt_disp = frame / "pairs" / pdir.name / "disp.pfm"
            if not gt_disp.exists():
                continue
            pd = pfm_read(pdir / "disp.pfm", "px", GEER)
            gd = pfm_read(gt_disp, "px", GEER)
            if pd.data.shape != gd.data.shape:
                raise DataError(f"pair {pdir.name}: disparity grids differ")
            mask = np.isfinite(gd.data)
            occ = frame / "pairs" / pdir.name / "occlusion.png"
            if occ.exists():
                mask &= ~mask_read(occ, GEER).data
            rep = metrics.disparity_metrics(pd, gd, mask)
            doc["pairs"][pdir.name] = rep.to_dict()
            text.append(f"[{pdir.name}]\n" + rep.to_table())
    out = _mkdir(frame / "eval")
    (out / "report.json").write_text(json.dumps(doc, indent=2) + "\n")
    (out / "report.txt").write_text("\n".join(text))
    png_write(metrics.error_map(pred, gt, np.isfinite(gt.data)), out / "error_map.png")
    pts, rgb = point_cloud(rig, pred, _colors_for(frame, rig.reference_id, ErpGrid(pred.width, pred.height)))
    write_point_cloud(out / "cloud.xyz", pts, rgb)
    return doc


def cmd_pipeline(cfg: RunConfig) -> dict:
    cmd_render(cfg)
    cmd_estimate(cfg)
    return cmd_eval(cfg)


def validate_runtime(cfg: RunConfig) -> None:
    """Re-check configuration after command-line overrides."""
    from .config import validate

    validate(cfg)
