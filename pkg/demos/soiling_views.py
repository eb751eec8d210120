"""Compare the pairwise-fuse and sweep pipelines on clean and soiled frames.

Renders the desk frame from demos/desk once, then estimates reference depth
with 2, 3 and 4 views, with and without the mud on cam2.

Run: python demos/soiling_views.py [--output /tmp/soiling]
"""

import argparse
from pathlib import Path

import numpy as np

from omnidepth import pipeline
from omnidepth.config import load_config
from omnidepth.raster import pfm_read

HERE = Path(__file__).parent


def mae(est, gt):
    d = est.depth.data
    ok = np.isfinite(d) & np.isfinite(gt)
    return float(np.mean(np.abs(d[ok] - gt[ok]))), 100.0 * ok.mean()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--output", type=Path, default=Path("/tmp/omnidepth-soiling"))
    args = ap.parse_args()

    cfg = load_config(HERE / "desk" / "config.toml").with_overrides(output_dir=args.output / "frame")
    pipeline.cmd_render(cfg)
    gt = pfm_read(cfg.output_dir / "depth" / "cam1.pfm").data.astype(np.float64)

    print(f"{'pipeline':<14}{'views':>6}{'clean MAE':>11}{'soiled MAE':>12}{'valid %':>9}")
    for kind in ("pairwise-fuse", "sweep"):
        for views in (2, 3, 4):
            row = []
            for soiled in (False, True):
                run = cfg.with_overrides(kind=kind, views=views, soiled=soiled,
                                         output_dir=args.output / f"{kind}-{views}-{int(soiled)}")
                row.append(mae(pipeline.cmd_estimate(run, frame=cfg.output_dir), gt))
            print(f"{kind:<14}{views:>6}{row[0][0]:>11.3f}{row[1][0]:>12.3f}{row[1][1]:>9.2f}")


if __name__ == "__main__":
    main()
