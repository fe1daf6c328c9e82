import numpy as np
import pytest
from scipy import constants

from merisc.scene import SceneConfig, build_scene, make_snapshot, wavenumber

from conftest import desk_config


def test_full_scale_counts():
    sc = build_scene(SceneConfig())
    assert sc.M == 900
    assert sc.P == 2025
    assert sc.wall_size == (6.0, 7.0)
    assert sc.ris_side == pytest.approx(1.93)


def test_wavenumber_matches_direct_evaluation():
    k0 = wavenumber(3.5e9)
    assert k0 == pytest.approx(2 * np.pi * 3.5e9 / constants.c, rel=1e-15)
    # with c0 rounded to 3e8 the same formula gives 73.304
    assert k0 == pytest.approx(73.304, abs=0.06)
    assert 2 * np.pi * 3.5e9 / 3e8 == pytest.approx(73.304, abs=1e-3)


def test_ris_larger_than_wall_rejected():
    with pytest.raises(ValueError, match="does not fit"):
        build_scene(SceneConfig(ris_rows=2, ris_cols=2, ris_side=2.0, wall_width=1.0,
                                wall_height=1.0))


@pytest.mark.parametrize("kw", [dict(f0=0.0), dict(bs_rows=0), dict(ris_rows=0),
                                dict(ris_rows=4, ris_cols=5), dict(wall_width=-1.0),
                                dict(quadrature=3), dict(user_area=(1.0, 0.0, 0.0, 1.0))])
def test_invalid_configs(kw):
    with pytest.raises(ValueError):
        build_scene(desk_config(**kw))


def test_wall_tiles_cover_wall_exactly(desk_scene):
    assert desk_scene.areas.sum() == pytest.approx(0.6 * 0.6, rel=1e-12)
    assert desk_scene.areas[:desk_scene.P].sum() == pytest.approx(0.3424 ** 2, rel=1e-12)


def test_shifted_wall_keeps_area_and_contains_ris():
    sc = build_scene(desk_config(wall_width=1.2, wall_height=1.2, wall_offset=(0.4, -0.1)))
    assert sc.areas.sum() == pytest.approx(1.44, rel=1e-12)
    lo = sc.uv[sc.P:] - sc.sizes[sc.P:] / 2
    hi = sc.uv[sc.P:] + sc.sizes[sc.P:] / 2
    assert lo[:, 0].min() == pytest.approx(-0.2)
    assert hi[:, 0].max() == pytest.approx(1.0)
    assert lo[:, 1].min() == pytest.approx(-0.7)
    with pytest.raises(ValueError):
        build_scene(desk_config(wall_width=0.6, wall_height=0.6, wall_offset=(0.2, 0.0)))


def test_frame_is_right_handed(desk_scene):
    sc = desk_scene
    assert np.allclose(np.cross(sc.e1, sc.e2), sc.normal)
    assert np.allclose(sc.centers[:sc.P] @ sc.normal, sc.origin @ sc.normal)


def test_bs_array_faces_ris(desk_scene):
    bs = desk_scene.bs_elements
    centroid = bs.mean(axis=0)
    assert np.allclose(centroid, (-3.0, 3.0, 2.5))
    bore = desk_scene.origin - centroid
    # array plane is orthogonal to the boresight
    assert np.allclose((bs - centroid) @ bore, 0.0, atol=1e-12)
    spacing = np.linalg.norm(bs[1] - bs[0])
    assert spacing == pytest.approx(desk_scene.wavelength / 2)


def test_without_wall_keeps_ris_only(desk_scene):
    bare = desk_scene.without_wall()
    assert bare.Q == 0 and bare.P == desk_scene.P
    assert np.array_equal(bare.centers, desk_scene.centers[:desk_scene.P])


def test_quadrature_2x2_preserves_weights(desk_scene):
    sc = build_scene(desk_config(quadrature=2))
    pos, w, idx = sc.quadrature_nodes()
    assert len(pos) == 4 * sc.n_patches
    assert np.allclose(np.bincount(idx, w), sc.areas)
    assert np.allclose(pos.reshape(-1, 4, 3).mean(axis=1), sc.centers)


def test_geometry_arrays_are_read_only(desk_scene):
    with pytest.raises(ValueError):
        desk_scene.centers[0, 0] = 1.0


def test_make_snapshot_validation(desk_scene):
    snap = make_snapshot(3, [[0.0, 2.0], [1.0, 2.0]], scene=desk_scene)
    assert snap.L == 2 and np.allclose(snap.positions[:, 2], 1.5)
    with pytest.raises(ValueError):
        make_snapshot(1, [[100.0, 2.0]], scene=desk_scene)
    with pytest.raises(ValueError):
        make_snapshot(1, [[0.0, 2.0], [0.0, 2.05]], scene=desk_scene)
    with pytest.raises(ValueError):
        make_snapshot(1, [[0.0, 2.0, 3.0]], scene=desk_scene)
