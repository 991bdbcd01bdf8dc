import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.geometry.point_cloud import PointCloud
from src.synthetic.augmentation import PointCloudAugmenter, augment
from src.synthetic.scene import (
    DYNAMIC, GROUND, STATIC, ObjectSpec, SceneScript, generate, grid_superpixels, load_script,
    object_pose, read_ground_truth, sample_surface, write_ground_truth,
)
from src.utils.errors import DataFormatError, EmptyCloudError

from conftest import moving_object_script


def test_scene_without_objects_has_zero_flow():
    scene = generate(SceneScript(frame_count=3))
    for i in range(3):
        assert (scene.labels[i] == GROUND).all()
        assert_allclose(scene.gt_flow(i), 0.0, atol=1e-9)


def test_moving_object_flow_magnitude(moving_scene):
    keyframe = moving_scene.sequence.keyframe_index
    for i in (0, keyframe - 1, keyframe + 2):
        flow = moving_scene.gt_flow(i)
        dynamic = moving_scene.labels[i] == DYNAMIC
        expected = 2.0 * abs(keyframe - i) * 0.05
        assert_allclose(np.linalg.norm(flow[dynamic], axis=1), expected, atol=1e-9)
        assert_allclose(flow[~dynamic], 0.0, atol=1e-9)


def test_keyframe_flow_is_zero(moving_scene):
    assert_allclose(moving_scene.gt_flow(moving_scene.sequence.keyframe_index), 0.0, atol=1e-9)


def test_labels_and_ids_line_up(moving_scene):
    for frame, labels, ids in zip(moving_scene.sequence.frames, moving_scene.labels, moving_scene.object_ids):
        assert len(frame.cloud) == len(labels) == len(ids)
        assert set(np.unique(labels)) == {GROUND, STATIC, DYNAMIC}
        assert (ids[labels == GROUND] == -1).all()
        assert set(np.unique(ids[labels == DYNAMIC])) == {2}


def test_generation_is_deterministic():
    first = generate(moving_object_script(seed=5))
    second = generate(moving_object_script(seed=5))
    for a, b in zip(first.sequence.frames, second.sequence.frames):
        assert_array_equal(a.cloud.points, b.cloud.points)
    other = generate(moving_object_script(seed=6))
    assert not np.array_equal(first.sequence.frames[0].cloud.points, other.sequence.frames[0].cloud.points)


def test_default_keyframe_is_middle_frame():
    assert SceneScript(frame_count=11).keyframe == 5
    assert SceneScript(frame_count=4, keyframe_index=0).keyframe == 0
    with pytest.raises(ValueError):
        SceneScript(frame_count=4, keyframe_index=4)


def test_constant_turn_pose():
    spec = ObjectSpec(velocity=(2.0, 0.0), yaw_rate=math.pi / 2)
    pose = object_pose(spec, 1.0)
    # 四分之一圆弧，半径 v/ω
    radius = 2.0 / (math.pi / 2)
    assert_allclose(pose.translation, [radius, radius, 0.0], atol=1e-12)
    straight = object_pose(ObjectSpec(position=(1.0, 2.0), velocity=(1.0, -1.0)), 2.0)
    assert_allclose(straight.translation, [3.0, 0.0, 0.0])


def test_surface_sampling(rng):
    box = sample_surface(ObjectSpec(size=(4.0, 2.0, 1.5), density=10.0), rng)
    # 侧面 2*(4*1.5 + 2*1.5) + 顶面 4*2
    assert len(box) == 260
    assert box[:, 2].min() >= 0.5 and box[:, 2].max() == pytest.approx(2.0)
    cylinder = sample_surface(ObjectSpec(shape="cylinder", size=(1.0, 1.0, 2.0)), rng)
    side = np.abs(np.hypot(cylinder[:, 0], cylinder[:, 1]) - 0.5) < 1e-9
    assert (side | np.isclose(cylinder[:, 2], 2.5)).all()


def test_grid_superpixels():
    sp = grid_superpixels(10, 6, 4)
    assert sp.labels.shape == (6, 10)
    assert sp.labels[0, 0] == 0 and sp.labels[0, 4] == 1 and sp.labels[4, 0] == 3
    assert sp.labels.max() == 5


def test_load_script(tmp_path):
    path = tmp_path / "script.json"
    path.write_text(json.dumps({"frame_count": 5, "moving_objects": [{"velocity": [1.0, 0.0]}]}))
    script = load_script(path)
    assert script.moving_objects[0].is_dynamic
    path.write_text(json.dumps({"frame_count": 0}))
    with pytest.raises(DataFormatError):
        load_script(path)
    path.write_text("[")
    with pytest.raises(DataFormatError):
        load_script(path)


def test_ground_truth_file(tmp_path, moving_scene):
    path = write_ground_truth(moving_scene, tmp_path / "gt.npz")
    data = read_ground_truth(path)
    assert int(data["keyframe_index"]) == moving_scene.sequence.keyframe_index
    assert len(data["endpoints"]) == sum(len(f.cloud) for f in moving_scene.sequence.frames)
    assert_array_equal(data["endpoints"][data["frame_index"] == 0], moving_scene.gt_endpoints[0])


def test_stacked_matches_frame_order(moving_scene):
    start, endpoints, labels = moving_scene.stacked(window=3)
    keyframe = moving_scene.sequence.keyframe_index
    sizes = [len(moving_scene.labels[i]) for i in range(keyframe - 1, keyframe + 2)]
    assert len(start) == len(endpoints) == len(labels) == sum(sizes)
    assert_allclose(start[:sizes[0]], moving_scene.compensated_points(keyframe - 1))


# ---- augmentation ----

def test_identity_augmentation(rng):
    cloud = PointCloud(rng.normal(size=(100, 3)))
    result = augment(cloud, seed=1, rotate=False, flip=False, drop_cuboid=False)
    assert_allclose(result.points, cloud.points, atol=0)


def test_flip_only_negates_x_or_y(rng):
    cloud = PointCloud(rng.normal(size=(100, 3)))
    augmenter = PointCloudAugmenter(rotate=False, drop_cuboid=False, flip_probability=1.0)
    result = augmenter.augment(cloud, seed=3)
    assert_allclose(result.points, cloud.points * [-1.0, -1.0, 1.0])


def test_rotation_and_flip_preserve_distances(rng):
    cloud = PointCloud(rng.normal(size=(60, 3)))
    result = augment(cloud, seed=4, drop_cuboid=False)
    before = np.linalg.norm(cloud.points[:, None] - cloud.points[None], axis=2)
    after = np.linalg.norm(result.points[:, None] - result.points[None], axis=2)
    assert_allclose(after, before, atol=1e-9)
    assert_allclose(result.points[:, 2], cloud.points[:, 2], atol=1e-12)


def test_cuboid_drop_only_removes_points(rng):
    cloud = PointCloud(rng.uniform(-5, 5, size=(20000, 3)))
    rotated = augment(cloud, seed=8, drop_cuboid=False)
    result = augment(cloud, seed=8)
    assert len(result) < len(cloud)
    assert set(result.source_index.tolist()) <= set(range(len(cloud)))
    kept = rotated.points[result.source_index]
    assert_allclose(result.points, kept, atol=0)


def test_augmentation_is_deterministic(rng):
    cloud = PointCloud(rng.normal(size=(200, 3)) * 5)
    assert_array_equal(augment(cloud, seed=9).points, augment(cloud, seed=9).points)


def test_augment_empty_cloud():
    with pytest.raises(EmptyCloudError):
        augment(PointCloud(np.empty((0, 3))))


def test_flip_x_example():
    cloud = PointCloud([[1.0, 2.0, 3.0]])
    augmenter = PointCloudAugmenter(rotate=False, drop_cuboid=False)
    results = {tuple(augmenter.augment(cloud, seed).points[0]) for seed in range(64)}
    assert (-1.0, 2.0, 3.0) in results
    assert results <= {(1.0, 2.0, 3.0), (-1.0, 2.0, 3.0), (1.0, -2.0, 3.0), (-1.0, -2.0, 3.0)}
