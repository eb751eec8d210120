import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from omnidepth import sphere
from omnidepth.errors import DegeneratePairError, FormatError
from omnidepth.raster import ERP, GEER, PanoImage
from omnidepth.rig import (UPRIGHT, CameraRig, Pose, load_rig, rectify_pair, resample_to_geer, rig_from_dict,
                           save_rig, square_rig, world_ray_of)
from omnidepth.sphere import ErpGrid, GeerGrid, PixelCoord

import oracles

G = GeerGrid(512, 1024)
coord = st.floats(-3, 3)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def test_square_rig_baselines():
    rig = square_rig()
    assert rectify_pair(rig, "cam1", "cam2", G).baseline == 1.0
    assert rectify_pair(rig, "cam1", "cam3", G).baseline == pytest.approx(math.sqrt(2), abs=1e-15)


def test_degenerate_pairs():
    rig = square_rig()
    with pytest.raises(DegeneratePairError):
        rectify_pair(rig, "cam1", "cam1", G)
    twin = CameraRig((("a", Pose(np.zeros(3), np.eye(3))), ("b", Pose(np.zeros(3), UPRIGHT))), "a")
    with pytest.raises(DegeneratePairError):
        rectify_pair(twin, "a", "b", G)


def test_pose_rejects_non_rotation():
    with pytest.raises(ValueError):
        Pose(np.zeros(3), np.diag([1.0, 1.0, -1.0]))


@pytest.mark.parametrize("pair", [("cam1", "cam2"), ("cam3", "cam1"), ("cam2", "cam4"), ("cam4", "cam3")])
def test_rect_rotation_axis_and_orthonormal(pair):
    rig = square_rig()
    rp = rectify_pair(rig, *pair, G)
    ex = (rig.pose(pair[0]).center - rig.pose(pair[1]).center) / rp.baseline
    np.testing.assert_allclose(rp.rect_rotation @ ex, [1, 0, 0], atol=1e-10)
    np.testing.assert_allclose(rp.rect_rotation @ rp.rect_rotation.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(rp.rect_rotation) == pytest.approx(1.0)


def test_vertical_baseline_falls_back_to_y():
    rig = CameraRig((("a", Pose([0, 0, 1.0], np.eye(3))), ("b", Pose(np.zeros(3), np.eye(3)))), "a")
    rp = rectify_pair(rig, "a", "b", G)
    # e_x = +z, e_z = +y, e_y = e_z x e_x = +x
    np.testing.assert_allclose(rp.rect_rotation, [[0, 0, 1], [1, 0, 0], [0, 1, 0]], atol=1e-15)


@given(coord, coord, coord)
def test_rows_agree_and_disparity_matches_triangulation(x, y, z):
    rig = square_rig()
    rp = rectify_pair(rig, "cam3", "cam1", G)
    p = np.array([x, y, z])
    c_l, c_r = rp.left_center, rp.right_center
    if min(np.linalg.norm(p - c_l), np.linalg.norm(p - c_r)) < 0.05:
        return
    ex = rp.rect_rotation[0]
    off_axis = np.linalg.norm(np.cross(p - c_r, ex))
    if off_axis < 0.05:
        return
    sl = sphere.cart_to_sph(rp.rect_rotation @ (p - c_l))
    sr = sphere.cart_to_sph(rp.rect_rotation @ (p - c_r))
    pl, pr = sphere.geer_pixel_of(sl, G), sphere.geer_pixel_of(sr, G)
    assert abs(pl.row - pr.row) < 1e-9
    phi_l, phi_r, rho = oracles.triangulate(c_l, c_r, p)
    assert sl.phi == pytest.approx(phi_l, abs=1e-12)
    d = sl.phi - sr.phi
    assert d > 0
    assert (pl.col - pr.col) == pytest.approx(d * G.width / math.pi, abs=1e-9)
    assert sphere.disparity_to_depth(sl.phi, d, rp.baseline) == pytest.approx(rho, rel=1e-8)


def test_swapping_sides_negates_axis_and_disparity():
    rig = square_rig()
    a = rectify_pair(rig, "cam1", "cam2", G)
    b = rectify_pair(rig, "cam2", "cam1", G)
    np.testing.assert_allclose(a.rect_rotation[0], -b.rect_rotation[0], atol=1e-15)
    p = np.array([0.3, 1.2, 0.4])
    da = sphere.cart_to_sph(a.rect_rotation @ (p - a.left_center)).phi - \
        sphere.cart_to_sph(a.rect_rotation @ (p - a.right_center)).phi
    # same camera order (cam1 minus cam2) measured in the swapped frame
    db = sphere.cart_to_sph(b.rect_rotation @ (p - a.left_center)).phi - \
        sphere.cart_to_sph(b.rect_rotation @ (p - a.right_center)).phi
    assert da == pytest.approx(-db, abs=1e-12)


def test_constant_image_stays_constant():
    rig = square_rig()
    rp = rectify_pair(rig, "cam1", "cam3", GeerGrid(32, 64))
    out = resample_to_geer(PanoImage(np.full((32, 64, 3), 0.37)), rig.pose("cam1"), rp)
    assert out.projection == GEER
    np.testing.assert_allclose(out.data, 0.37, atol=1e-15)


def test_analytic_field_resample(rng):
    rot = random_rotation(rng)
    rig = CameraRig((("a", Pose([0.0, 0, 0], rot)), ("b", Pose([0.4, -0.7, 0.2], np.eye(3)))), "a")
    erp = ErpGrid(1024, 512)
    dirs_cam = sphere.grid_dirs(erp)
    field = (dirs_cam @ rot)[..., 2]  # rig-frame z of every camera pixel
    src = PanoImage((field + 1) / 2)
    rp = rectify_pair(rig, "a", "b", G)
    out = resample_to_geer(src, rig.pose("a"), rp)
    expect = (sphere.grid_dirs(G) @ rp.rect_rotation)[..., 2]
    assert np.max(np.abs(out.data * 2 - 1 - expect)) < 1e-3


def test_identity_resample_is_reindexing(rng):
    # identity pose, rect_rotation = I: GEER (phi, theta) equals ERP (theta, phi) transposed
    rig = CameraRig((("a", Pose([1.0, 0, 0], np.eye(3))), ("b", Pose([0.0, 0, 0], np.eye(3)))), "a")
    grid = GeerGrid(16, 32)
    rp = rectify_pair(rig, "a", "b", grid)
    np.testing.assert_allclose(rp.rect_rotation, np.eye(3), atol=0)
    img = rng.random((16, 32))
    out = resample_to_geer(PanoImage(img), rig.pose("a"), rp)
    np.testing.assert_allclose(out.data, img.T, atol=1e-12)


def test_world_ray_examples():
    rig = CameraRig((("a", Pose([0.0, 0, 0], np.eye(3))), ("b", Pose([1.0, 0, 0], np.eye(3)))), "a")
    erp = ErpGrid(1024, 512)
    px = sphere.erp_pixel_of(sphere.SphericalCoord(1.0, math.pi / 2, 0.0), erp)
    o, d = world_ray_of(rig, "a", px, erp)
    np.testing.assert_allclose(o, 0)
    np.testing.assert_allclose(d, [0, 0, 1], atol=1e-15)
    o, d2 = world_ray_of(rig, "b", px, erp)
    np.testing.assert_allclose(o, [1, 0, 0])
    np.testing.assert_array_equal(d, d2)
    with pytest.raises(KeyError):
        world_ray_of(rig, "zzz", px, erp)


def test_world_ray_geer_composes_with_resample_map(rng):
    rot = random_rotation(rng)
    rig = CameraRig((("a", Pose([0.1, 0.2, 0.3], rot)), ("b", Pose([-0.5, 0.4, 0.0], np.eye(3)))), "a")
    rp = rectify_pair(rig, "a", "b", G)
    px = PixelCoord(np.array([100.0, 300.5]), np.array([17.0, 900.25]))
    o, d = world_ray_of(rig, "a", px, G, projection=rp)
    s = sphere.geer_dir_of(px, G)
    x = sphere.unit_dirs(s.phi, s.theta)
    # walk the resample chain: rectified -> rig -> camera -> rig
    cam = x @ rp.rect_rotation @ rot.T
    np.testing.assert_allclose(d, cam @ rot, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(d, axis=-1), 1, atol=1e-12)


def test_manifest_round_trip_bit_exact(tmp_path, rng):
    rig = CameraRig((("a", Pose(rng.normal(size=3), random_rotation(rng))),
                     ("b", Pose(rng.normal(size=3), random_rotation(rng)))), "b")
    save_rig(rig, tmp_path / "rig.json")
    back = load_rig(tmp_path / "rig.json")
    assert back.ids == ["a", "b"] and back.reference_id == "b"
    for i in rig.ids:
        assert back.pose(i).center.tobytes() == rig.pose(i).center.tobytes()
        assert back.pose(i).rotation.tobytes() == rig.pose(i).rotation.tobytes()
    save_rig(back, tmp_path / "again.json")
    assert (tmp_path / "again.json").read_bytes() == (tmp_path / "rig.json").read_bytes()


def test_manifest_errors(tmp_path):
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(FormatError):
        load_rig(tmp_path / "bad.json")
    with pytest.raises(FormatError):
        rig_from_dict({"cameras": [{"id": "a", "center": [0, 0, 0], "rotation": [1] * 9}], "reference_id": "a"})
    with pytest.raises(FormatError):
        rig_from_dict(json.loads('{"cameras": [], "reference_id": "a"}'))


def test_subset_keeps_reference():
    rig = square_rig()
    assert rig.subset(2).ids == ["cam1", "cam2"]
    assert len(rig.pairs()) == 6
