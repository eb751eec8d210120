"""Semi-global cost aggregation kernel shared by pairwise stereo and spherical sweeping.

Volumes are ``(H, W, N)`` with rows along the periodic azimuth axis.  The
eight scanline directions are processed in a fixed order; within a direction
the paths are independent and may be split across threads, each cell being
written by exactly one path.  Results are therefore bit-identical for any
thread count.

Path layout per direction ``(dr, dc)``:

* ``dc != 0``: one path per start row, beginning at the phi border column
  and ending at the opposite one; the row index wraps modulo H.
* ``dc == 0``: vertical paths are cycles.  Each column is traversed twice
  starting at row 0 (or H-1); the first lap only warms up the recurrence and
  the second lap is accumulated.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numba
import numpy as np

DIRECTIONS = ((0, 1), (0, -1), (1, 0), (-1, 0), (1, 1), (1, -1), (-1, 1), (-1, -1))


@numba.njit(nogil=True, cache=True)
def _step(cost, ok, lp, lc, have_prev, p1, p2):
    n = cost.shape[0]
    m = np.inf
    if have_prev:
        for k in range(n):
            if lp[k] < m:
                m = lp[k]
    if not have_prev or m == np.inf:
        for k in range(n):
            lc[k] = cost[k] if ok[k] else np.inf
        return
    for k in range(n):
        if not ok[k]:
            lc[k] = np.inf
            continue
        best = lp[k]
        if k > 0 and lp[k - 1] + p1 < best:
            best = lp[k - 1] + p1
        if k < n - 1 and lp[k + 1] + p1 < best:
            best = lp[k + 1] + p1
        if m + p2 < best:
            best = m + p2
        lc[k] = cost[k] + best - m


@numba.njit(nogil=True, cache=True)
def _aggregate_direction(cost, valid, p1, p2, dr, dc, s0, s1, out):
    h, w, n = cost.shape
    lp = np.empty(n, dtype=out.dtype)
    lc = np.empty(n, dtype=out.dtype)
    if dc == 0:
        for c in range(s0, s1):
            r = 0 if dr > 0 else h - 1
            have_prev = False
            for t in range(2 * h):
                _step(cost[r, c], valid[r, c], lp, lc, have_prev, p1, p2)
                have_prev = True
                if t >= h:
                    for k in range(n):
                        out[r, c, k] += lc[k]
                lp, lc = lc, lp
                r = (r + dr) % h
    else:
        for s in range(s0, s1):
            r = s
            c = 0 if dc > 0 else w - 1
            have_prev = False
            for _ in range(w):
                _step(cost[r, c], valid[r, c], lp, lc, have_prev, p1, p2)
                have_prev = True
                for k in range(n):
                    out[r, c, k] += lc[k]
                lp, lc = lc, lp
                r = (r + dr) % h
                c += dc


def aggregate(cost: np.ndarray, valid: np.ndarray, p1: float, p2: float, threads: int = 1) -> np.ndarray:
    """Sum of the eight directional SGM path costs.

    Entries with ``valid == False`` are excluded from path minima and come
    out as ``+inf``.
    """
    cost = np.ascontiguousarray(cost)
    valid = np.ascontiguousarray(valid, dtype=np.bool_)
    h, w, _ = cost.shape
    out = np.zeros(cost.shape, dtype=cost.dtype)
    p1 = cost.dtype.type(p1)
    p2 = cost.dtype.type(p2)
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        for dr, dc in DIRECTIONS:
            n_paths = w if dc == 0 else h
            if pool is None:
                _aggregate_direction(cost, valid, p1, p2, dr, dc, 0, n_paths, out)
                continue
            bounds = np.linspace(0, n_paths, threads + 1).astype(int)
            futures = [pool.submit(_aggregate_direction, cost, valid, p1, p2, dr, dc, int(a), int(b), out)
                       for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
            for f in futures:
                f.result()
    finally:
        if pool is not None:
            pool.shutdown()
    return out
