"""Disparity and depth error metrics.

Sums use :func:`math.fsum`, so results do not depend on pixel order or
platform.  Thresholds are strict: a disparity error of exactly 3 px is not
an outlier for Px3 and a ratio of exactly 1.25 fails delta1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, EmptyEvaluationError
from .raster import FloatMap

DISPARITY_KEYS = ("MAE", "RMSE", "Px1", "Px3", "Px5", "D1")
DEPTH_KEYS = ("MAE", "RMSE", "AbsRel", "SqRel", "SILog", "delta1", "delta2", "delta3")


@dataclass
class MetricReport:
    kind: str
    values: dict = field(default_factory=dict)
    count: int = 0
    excluded: int = 0

    def __getitem__(self, key):
        return self.values[key]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "count": self.count, "excluded": self.excluded, "metrics": dict(self.values)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def to_table(self) -> str:
        rows = [(k, f"{v:.6f}") for k, v in self.values.items()]
        rows += [("pixels", str(self.count)), ("excluded", str(self.excluded))]
        kw = max(len(k) for k, _ in rows)
        vw = max(len(v) for _, v in rows)
        lines = [f"{self.kind} metrics", "-" * (kw + vw + 3)]
        lines += [f"{k.ljust(kw)}   {v.rjust(vw)}" for k, v in rows]
        return "\n".join(lines) + "\n"


def _data(x):
    return x.data if isinstance(x, FloatMap) else np.asarray(x, dtype=np.float64)


def _select(pred, gt, mask):
    p, g = _data(pred), _data(gt)
    if p.shape != g.shape:
        raise DomainError(f"prediction {p.shape} and ground truth {g.shape} differ in shape")
    m = np.ones(p.shape, bool) if mask is None else np.asarray(getattr(mask, "data", mask), bool)
    usable = m & np.isfinite(p) & np.isfinite(g)
    n = int(usable.sum())
    if n == 0:
        raise EmptyEvaluationError("no pixel left to evaluate")
    return p[usable], g[usable], n, int(m.sum()) - n


def _mean(x) -> float:
    return math.fsum(x.tolist()) / x.size


def _pct(flags) -> float:
    return 100.0 * int(np.count_nonzero(flags)) / flags.size


def disparity_metrics(pred, gt, mask=None) -> MetricReport:
    """MAE, RMSE, Px1/3/5 and D1 in pixels; outlier rates are percentages."""
    p, g, n, excluded = _select(pred, gt, mask)
    e = np.abs(p - g)
    vals = {
        "MAE": _mean(e),
        "RMSE": math.sqrt(_mean(e * e)),
        "Px1": _pct(e > 1),
        "Px3": _pct(e > 3),
        "Px5": _pct(e > 5),
        "D1": _pct((e > 3) & (e > 0.05 * g)),
    }
    return MetricReport("disparity", vals, n, excluded)


def silog(p: np.ndarray, g: np.ndarray, lam: float = 0.5) -> float:
    d = (np.log(p) - np.log(g)).ravel()
    s1 = math.fsum(d.tolist())
    s2 = math.fsum((d * d).tolist())
    n = d.size
    return s2 / n - lam * (s1 / n) ** 2


def depth_metrics(pred, gt, mask=None, lam: float = 0.5) -> MetricReport:
    """MAE, RMSE, AbsRel, SqRel, SILog and delta accuracies (percent) in metres."""
    p, g, n, excluded = _select(pred, gt, mask)
    if np.any(p <= 0) or np.any(g <= 0):
        raise DomainError("depths must be positive on the evaluated pixels")
    diff = p - g
    ratio = np.maximum(p / g, g / p)
    vals = {
        "MAE": _mean(np.abs(diff)),
        "RMSE": math.sqrt(_mean(diff * diff)),
        "AbsRel": _mean(np.abs(diff) / g),
        "SqRel": _mean(diff * diff / g),
        "SILog": silog(p, g, lam),
        "delta1": _pct(ratio < 1.25),
        "delta2": _pct(ratio < 1.25 ** 2),
        "delta3": _pct(ratio < 1.25 ** 3),
    }
    return MetricReport("depth", vals, n, excluded)


def error_map(pred, gt, mask=None) -> np.ndarray:
    """|pred - gt| scaled to [0, 1] by its maximum; excluded pixels are 0."""
    p, g = _data(pred), _data(gt)
    m = np.ones(p.shape, bool) if mask is None else np.asarray(getattr(mask, "data", mask), bool)
    ok = m & np.isfinite(p) & np.isfinite(g)
    e = np.where(ok, np.abs(np.where(ok, p, 0.0) - np.where(ok, g, 0.0)), 0.0)
    top = e.max() if e.size else 0.0
    return e / top if top > 0 else e
