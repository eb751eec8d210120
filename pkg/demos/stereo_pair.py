"""Match one rectified pair of the desk scene and compare with ground truth.

Run: python demos/stereo_pair.py [--pair cam2 cam1] [--width 512]
"""

import argparse
import time

import numpy as np

from omnidepth.metrics import disparity_metrics
from omnidepth.render import desk_scene, render_gt_disparity, render_occlusion, render_panorama
from omnidepth.rig import rectify_pair, square_rig
from omnidepth.sphere import GeerGrid
from omnidepth.stereo import StereoParams, match_pair


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pair", nargs=2, default=["cam2", "cam1"], metavar=("LEFT", "RIGHT"))
    ap.add_argument("--width", type=int, default=256, help="GEER width; height is twice this")
    ap.add_argument("--disparities", type=int, default=32)
    ap.add_argument("--threads", type=int, default=4)
    args = ap.parse_args()

    rig, scene = square_rig(), desk_scene()
    grid = GeerGrid(args.width, 2 * args.width)
    rp = rectify_pair(rig, *args.pair, grid)
    print(f"pair {args.pair[0]}-{args.pair[1]}: baseline {rp.baseline:.3f} m, grid {grid.shape}")

    left, depth = render_panorama(scene, rig, args.pair[0], grid, projection=rp, threads=args.threads)
    right, _ = render_panorama(scene, rig, args.pair[1], grid, projection=rp, threads=args.threads)

    params = StereoParams(num_disparities=args.disparities)
    start = time.perf_counter()
    res = match_pair(left, right, params, threads=args.threads)
    print(f"census + SGM + soft-argmin: {time.perf_counter() - start:.2f} s")

    # score only pixels the right camera can see and the matcher kept
    gt = render_gt_disparity(depth, rp, params.margin_cols)
    occluded = render_occlusion(scene, rp, depth).data
    mask = res.disparity.mask.data & ~occluded
    print(f"occluded {100 * occluded.mean():.1f}%, LR-check rejects {100 * (~res.lr_ok.data).mean():.1f}%")
    print(disparity_metrics(res.disparity.disparity, gt, mask).to_table())
    conf = res.confidence.data[mask]
    print(f"median confidence {np.median(conf):.3f}")


if __name__ == "__main__":
    main()
