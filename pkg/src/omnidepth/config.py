"""Run configuration read from a TOML file.

Example::

    [paths]
    rig = "rig.json"
    scene = "scene.json"
    output = "run"

    [render]
    erp_width = 1024
    erp_height = 512
    geer_width = 512
    geer_height = 1024

    [pipeline]
    kind = "pairwise-fuse"     # or "sweep"
    pairs = [["cam1", "cam2"], ["cam1", "cam3"]]
    depth_width = 512
    depth_height = 256

Relative paths are resolved against the directory of the config file.
Sections ``[stereo]``, ``[sweep]``, ``[fusion]`` and ``[metrics]`` take the
keyword arguments of the matching parameter classes.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from .errors import ConfigError
from .stereo import StereoParams
from .sweep import SweepParams

PIPELINE_KINDS = ("pairwise-fuse", "sweep")
_MODE_ALIASES = {"pairwise": "pairwise-fuse", "pairwise-fuse": "pairwise-fuse", "sweep": "sweep"}


@dataclass(frozen=True)
class RenderParams:
    erp_width: int = 1024
    erp_height: int = 512
    geer_width: int = 512
    geer_height: int = 1024
    margin_cols: int = 4


@dataclass(frozen=True)
class FusionParams:
    conf_floor: float = 0.3
    splat_radius: int = 1
    fill_holes: bool = False


@dataclass(frozen=True)
class MetricParams:
    silog_lambda: float = 0.5


@dataclass(frozen=True)
class RunConfig:
    rig_path: Path
    scene_path: Path | None
    output_dir: Path
    kind: str = "pairwise-fuse"
    pairs: tuple | None = None
    views: int | None = None
    soiled: bool = False
    threads: int = 1
    seed: int = 0
    depth_width: int = 512
    depth_height: int = 256
    render: RenderParams = field(default_factory=RenderParams)
    stereo: StereoParams = field(default_factory=StereoParams)
    sweep: SweepParams = field(default_factory=SweepParams)
    fusion: FusionParams = field(default_factory=FusionParams)
    metrics: MetricParams = field(default_factory=MetricParams)

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        if "kind" in kw:
            kw["kind"] = normalize_kind(kw["kind"])
        return dataclasses.replace(self, **kw)


def normalize_kind(kind: str) -> str:
    try:
        return _MODE_ALIASES[kind]
    except KeyError:
        raise ConfigError(f"unknown pipeline kind {kind!r}; expected one of {sorted(_MODE_ALIASES)}") from None


def _section(cls, table: dict, name: str):
    known = {f.name for f in dataclasses.fields(cls)}
    extra = set(table) - known
    if extra:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(extra)}")
    try:
        return cls(**table)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad [{name}] section: {exc}") from exc


def _check_positive(name, value):
    if not isinstance(value, int) or value <= 0:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")


def parse_config(doc: dict, base: Path) -> RunConfig:
    allowed = {"paths", "render", "stereo", "sweep", "fusion", "metrics", "pipeline"}
    extra = set(doc) - allowed
    if extra:
        raise ConfigError(f"unknown config sections: {sorted(extra)}")
    paths = doc.get("paths", {})
    if "rig" not in paths:
        raise ConfigError("[paths] must name a rig manifest")

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    rig_path = resolve(paths["rig"])
    scene_path = resolve(paths["scene"]) if "scene" in paths else None
    output = resolve(paths.get("output", "run"))
    extra = set(paths) - {"rig", "scene", "output"}
    if extra:
        raise ConfigError(f"unknown keys in [paths]: {sorted(extra)}")

    pipe = dict(doc.get("pipeline", {}))
    known = {"kind", "pairs", "views", "soiled", "threads", "seed", "depth_width", "depth_height"}
    extra = set(pipe) - known
    if extra:
        raise ConfigError(f"unknown keys in [pipeline]: {sorted(extra)}")
    kind = normalize_kind(pipe.get("kind", "pairwise-fuse"))
    pairs = pipe.get("pairs")
    if pairs is not None:
        if not all(isinstance(p, list) and len(p) == 2 and all(isinstance(c, str) for c in p) for p in pairs):
            raise ConfigError("[pipeline] pairs must be a list of [left, right] camera ids")
        pairs = tuple((a, b) for a, b in pairs)
    cfg = RunConfig(
        rig_path=rig_path,
        scene_path=scene_path,
        output_dir=output,
        kind=kind,
        pairs=pairs,
        views=pipe.get("views"),
        soiled=bool(pipe.get("soiled", False)),
        threads=pipe.get("threads", 1),
        seed=pipe.get("seed", 0),
        depth_width=pipe.get("depth_width", 512),
        depth_height=pipe.get("depth_height", 256),
        render=_section(RenderParams, doc.get("render", {}), "render"),
        stereo=_section(StereoParams, doc.get("stereo", {}), "stereo"),
        sweep=_section(SweepParams, doc.get("sweep", {}), "sweep"),
        fusion=_section(FusionParams, doc.get("fusion", {}), "fusion"),
        metrics=_section(MetricParams, doc.get("metrics", {}), "metrics"),
    )
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    """Check parameter preconditions that do not need the input files."""
    for name in ("threads", "depth_width", "depth_height"):
        _check_positive(name, getattr(cfg, name))
    if cfg.views is not None:
        _check_positive("views", cfg.views)
        if cfg.views < 2:
            raise ConfigError("at least two views are needed")
    r = cfg.render
    for name in ("erp_width", "erp_height", "geer_width", "geer_height"):
        _check_positive(name, getattr(r, name))
    if not 0 <= r.margin_cols < r.geer_width // 2:
        raise ConfigError(f"margin_cols must lie in [0, {r.geer_width // 2}), got {r.margin_cols}")
    s = cfg.stereo
    if not 1 <= s.num_disparities <= r.geer_width // 2:
        raise ConfigError(f"stereo num_disparities must lie in [1, {r.geer_width // 2}]")
    if s.window not in (3, 5, 7):
        raise ConfigError("stereo window must be 3, 5 or 7")
    if not s.p2 >= s.p1 > 0 or not s.temperature > 0:
        raise ConfigError("stereo needs P2 >= P1 > 0 and a positive temperature")
    w = cfg.sweep
    if not 0 < w.rho_min < w.rho_max or w.num_hypotheses < 2:
        raise ConfigError("sweep needs 0 < rho_min < rho_max and at least two hypotheses")
    if w.kind not in ("census", "census_nn", "zncc") or w.window not in (3, 5, 7):
        raise ConfigError("sweep kind must be census, census_nn or zncc with window 3, 5 or 7")
    if not w.p2 >= w.p1 > 0 or not w.temperature > 0:
        raise ConfigError("sweep needs P2 >= P1 > 0 and a positive temperature")
    if not 0 <= cfg.fusion.conf_floor <= 1 or cfg.fusion.splat_radius < 0:
        raise ConfigError("fusion needs conf_floor in [0, 1] and splat_radius >= 0")


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = tomli.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return parse_config(doc, path.parent)
