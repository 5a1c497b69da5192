from __future__ import annotations

import numpy as np
import pytest

from ldi4d.camera import CameraPose
from ldi4d.layering import LayerConfig, assign_layers, cluster_depth
from ldi4d.renderer import SplatConfig, splat
from ldi4d.synthetic import PRESETS, SyntheticConfig, generate_scene, reference_render

SMALL = SyntheticConfig(width=64, height=64, margin=16)


def test_same_seed_is_bit_identical():
    cfg = SyntheticConfig(width=64, height=64, margin=16, gt_view_count=1)
    a = generate_scene("planes", seed=11, config=cfg)
    b = generate_scene("planes", seed=11, config=cfg)

    assert np.array_equal(a.assets.original.data, b.assets.original.data)
    assert np.array_equal(a.assets.outpainted.data, b.assets.outpainted.data)
    assert np.array_equal(a.assets.depth.data, b.assets.depth.data)
    assert np.array_equal(a.assets.flow.data, b.assets.flow.data)
    assert np.array_equal(a.fluid_mask, b.fluid_mask)
    assert np.array_equal(a.intervals.boundaries, b.intervals.boundaries)
    for la, lb in zip(a.stack.layers, b.stack.layers):
        assert np.array_equal(la.color.data, lb.color.data)
        assert np.array_equal(la.depth.data, lb.depth.data)
        assert np.array_equal(la.validity, lb.validity)
    for va, vb in zip(a.gt_views, b.gt_views):
        assert np.array_equal(va.color, vb.color)
        assert np.array_equal(va.depth, vb.depth)
        assert np.array_equal(va.disocclusion, vb.disocclusion)
        assert np.array_equal(va.pose.quaternion, vb.pose.quaternion)
        assert np.array_equal(va.pose.translation, vb.pose.translation)


def test_different_seeds_differ():
    a = generate_scene("planes", seed=0, config=SMALL)
    b = generate_scene("planes", seed=1, config=SMALL)
    assert not np.array_equal(a.assets.original.data, b.assets.original.data)


def test_unknown_preset():
    with pytest.raises(ValueError, match="preset"):
        generate_scene("spheres", seed=0)


@pytest.mark.parametrize("preset", PRESETS)
def test_presets_have_consistent_ground_truth(preset):
    scene = generate_scene(preset, seed=7, config=SMALL)
    depth = scene.assets.depth.data[:, :, 0]

    assert (depth > 0).all()
    # Every layer's depth samples sit inside that layer's interval.
    for i, layer in enumerate(scene.stack.layers):
        lo, hi = scene.intervals.boundaries[i], scene.intervals.boundaries[i + 1]
        d = layer.depth.data[:, :, 0][layer.validity]
        assert d.size
        assert (d >= lo - 1e-6).all() and (d <= hi + 1e-6).all()
    # The composite of visible layer parts reproduces the scene depth map.
    visible = np.full(depth.shape, np.inf, dtype=np.float64)
    for layer in scene.stack.layers:
        d = layer.depth.data[:, :, 0]
        visible = np.where(layer.validity & (d < visible), d, visible)
    np.testing.assert_array_equal(visible, depth)


def test_planes_depths_recovered_by_clustering():
    # Three-layer planes scene is built from depths 2, 5, 10; clustering its
    # depth map back into three groups must separate exactly those planes.
    scene = generate_scene("planes", seed=3, config=SMALL)
    depth = scene.assets.depth.data[:, :, 0]
    intervals = cluster_depth(depth, LayerConfig(target_layers=3))
    labels = [assign_layers(np.array([[d]]), intervals)[0, 0] for d in (2.0, 5.0, 10.0)]
    assert labels == [1, 2, 3]


def test_flow_zero_outside_fluid_mask():
    scene = generate_scene("planes", seed=2, config=SMALL)
    flow = scene.flow.field.data
    outside = ~scene.fluid_mask
    assert np.abs(flow[outside]).max() == 0.0
    assert np.abs(flow[scene.fluid_mask]).max() > 0.0


def test_fluid_band_lives_on_the_backdrop():
    scene = generate_scene("planes", seed=2, config=SMALL)
    depth = scene.assets.depth.data[:, :, 0]
    backdrop = scene.intervals.boundaries[-1]
    assert (depth[scene.fluid_mask] == backdrop).all()


def test_gt_view_count_and_shapes():
    cfg = SyntheticConfig(width=64, height=64, margin=16, gt_view_count=3)
    scene = generate_scene("corridor", seed=9, config=cfg)
    assert len(scene.gt_views) == 3
    out_h = cfg.height + 2 * cfg.margin
    out_w = cfg.width + 2 * cfg.margin
    for view in scene.gt_views:
        assert view.color.shape == (out_h, out_w, 3)
        assert view.depth.shape == (out_h, out_w)
        assert view.disocclusion.shape == (out_h, out_w)
        assert view.disocclusion.dtype == bool
    # Views are actual novel poses, not copies of the identity.
    assert any(not np.array_equal(v.pose.translation, np.zeros(3)) for v in scene.gt_views)


def test_focal_override():
    cfg = SyntheticConfig(width=64, height=64, margin=16, focal_pixels=96.0)
    scene = generate_scene("planes", seed=0, config=cfg)
    assert scene.intrinsics.fx == 96.0
    assert scene.intrinsics.fy == 96.0


def test_config_validation():
    with pytest.raises(ValueError):
        SyntheticConfig(layer_count=1)
    with pytest.raises(ValueError):
        SyntheticConfig(margin=-1)
    with pytest.raises(ValueError):
        SyntheticConfig(focal_pixels=0.0)


def test_reference_render_empty_cloud():
    scene = generate_scene("planes", seed=0, config=SMALL)
    frame = reference_render(
        np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0),
        scene.intrinsics, CameraPose.identity(),
    )
    assert frame.hole_mask.all()
    assert frame.coverage.max() == 0.0


def test_reference_render_single_point_matches_splat():
    scene = generate_scene("planes", seed=0, config=SMALL)
    intr = scene.intrinsics
    pos = np.array([[0.0, 0.0, 4.0]])
    feat = np.array([[0.2, 0.9, 0.4]])
    w = np.ones(1)
    cfg = SplatConfig(radius=1.5)
    ref = reference_render(pos, feat, w, intr, CameraPose.identity(), cfg)
    fast = splat(pos, feat, w, intr, CameraPose.identity(), cfg)
    np.testing.assert_array_equal(ref.color, fast.color)
    np.testing.assert_array_equal(ref.depth, fast.depth)
    cx, cy = int(intr.cx), int(intr.cy)
    np.testing.assert_allclose(ref.color[cy, cx], feat[0])
