import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


TINY_CONFIG = """\
[paths]
rig = "rig.json"
scene = "scene.json"
output = "run"

[render]
erp_width = 128
erp_height = 64
geer_width = 64
geer_height = 128
margin_cols = 2

[stereo]
num_disparities = 16
margin_cols = 2

[sweep]
num_hypotheses = 16

[pipeline]
depth_width = 64
depth_height = 32
{extra}
"""


def make_workspace(root, scene=None, extra="", rig=None):
    """Write a rig, a scene and a small-grid config under ``root``; returns the config path."""
    from omnidepth.render import desk_scene, save_scene
    from omnidepth.rig import save_rig, square_rig

    save_rig(rig or square_rig(), root / "rig.json")
    save_scene(scene or desk_scene(), root / "scene.json")
    cfg = root / "config.toml"
    cfg.write_text(TINY_CONFIG.format(extra=extra))
    return cfg


@pytest.fixture
def workspace(tmp_path):
    return lambda **kw: make_workspace(tmp_path, **kw)
