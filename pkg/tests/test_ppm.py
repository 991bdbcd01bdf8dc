import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.geometry.point_cloud import PointCloud
from src.geometry.sequence import Frame, FrameSequence
from src.geometry.transforms import RigidTransform, rotation_about_z, rotation_angle
from src.matching.correspondence import match_unsynced
from src.matching.projection import project_points
from src.ppm.aggregation import aggregate
from src.ppm.clustering import ClusterExtractor, ClusterLabeling, cluster
from src.ppm.ground import GroundRemover, GroundStatus, ground_removal
from src.ppm.miner import (
    InterframeSampler, PPMConfig, PositivePairMiner, mine, sample_interframe, sample_interframes,
)
from src.ppm.registration import ICPConfig, ICPStatus, centroid_init, icp_register
from src.ppm.tracking import track_moving
from src.synthetic.scene import DYNAMIC, GROUND, generate
from src.utils.errors import ConfigurationError, ContractError

from conftest import moving_object_script


def blob(rng, center, count=200, scale=(2.0, 1.0, 0.5)):
    return rng.normal(size=(count, 3)) * np.asarray(scale) + np.asarray(center)


# ---- aggregation ----

def test_aggregate_single_frame(camera, rng):
    cloud = PointCloud(rng.normal(size=(10, 3)))
    aggregated = aggregate(FrameSequence([Frame(cloud, RigidTransform.identity())], 0, camera))
    assert_allclose(aggregated.points, cloud.points)


def test_aggregate_provenance(camera, rng):
    frames = [Frame(PointCloud(rng.normal(size=(100, 3)), t), RigidTransform.identity()) for t in (0.0, 0.1)]
    aggregated = aggregate(FrameSequence(frames, 0, camera))
    assert len(aggregated) == 200
    assert np.bincount(aggregated.frame_index).tolist() == [100, 100]
    assert aggregated.source_index[:100].tolist() == list(range(100))


def test_aggregate_static_world_points_coincide(camera, rng):
    world = rng.uniform(-10, 10, size=(50, 3))
    poses = [RigidTransform(rotation_about_z(0.1 * i), [2.0 * i, 0.5 * i, 1.8]) for i in range(3)]
    frames = [Frame(PointCloud(pose.inverse().apply_points(world), 0.1 * i), pose)
              for i, pose in enumerate(poses)]
    aggregated = aggregate(FrameSequence(frames, 1, camera))
    for i in range(3):
        assert_allclose(aggregated.points[aggregated.frame_mask(i)], world, atol=1e-9)


def test_aggregate_missing_pose(camera):
    frames = [Frame(PointCloud(np.zeros((1, 3)), 0.0), None)]
    with pytest.raises(ConfigurationError, match="pose"):
        aggregate(FrameSequence(frames, 0, camera))


# ---- ground removal ----

def test_ground_plane_with_outlier(rng):
    plane = np.column_stack([rng.uniform(-10, 10, (200, 2)), np.zeros(200)])
    cloud = PointCloud(np.vstack([plane, [[0.0, 0.0, 5.0]]]))
    flags = ground_removal(cloud)
    assert flags[:200].all()
    assert not flags[200]


def test_ground_recall_on_labeled_scene(rng):
    ground = np.column_stack([rng.uniform(-30, 30, (10000, 2)), rng.normal(0, 0.02, 10000)])
    objects = np.column_stack([rng.uniform(-20, 20, (2000, 2)), rng.uniform(0.5, 3.0, 2000)])
    result = GroundRemover(seed=3).segment(np.vstack([ground, objects]))
    assert result.status is GroundStatus.OK
    assert result.is_ground[:10000].mean() >= 0.99
    assert result.is_ground[10000:].mean() <= 0.01


def test_ground_only_cloud_is_all_ground(rng):
    plane = np.column_stack([rng.uniform(-5, 5, (150, 2)), np.full(150, -1.8)])
    assert GroundRemover().segment(plane).is_ground.all()


def test_ground_rejects_steep_planes(rng):
    wall = np.column_stack([np.zeros(300), rng.uniform(-5, 5, (300, 2))])
    result = GroundRemover().segment(wall)
    assert result.status is GroundStatus.NO_PLANE
    assert not result.is_ground.any()


def test_ground_too_few_points(rng):
    result = GroundRemover(min_points=100).segment(rng.normal(size=(20, 3)))
    assert result.status is GroundStatus.TOO_FEW_POINTS


# ---- clustering ----

def brute_force_dbscan(points, eps, min_pts):
    """O(n²) 参考实现：BFS 扩展核心点"""
    n = len(points)
    distances = np.linalg.norm(points[:, None] - points[None], axis=2)
    neighbours = distances <= eps
    core = neighbours.sum(axis=1) >= min_pts
    labels = np.full(n, -1)
    current = 0
    for seed in range(n):
        if not core[seed] or labels[seed] != -1:
            continue
        labels[seed] = current
        queue = [seed]
        while queue:
            i = queue.pop()
            for j in np.flatnonzero(neighbours[i] & core):
                if labels[j] == -1:
                    labels[j] = current
                    queue.append(j)
        current += 1
    for i in np.flatnonzero(~core):
        core_neighbours = np.flatnonzero(neighbours[i] & core)
        if len(core_neighbours):
            labels[i] = labels[core_neighbours.min()]
    # 按簇的最小成员下标重新编号
    order = {}
    for label in labels[labels != -1]:
        order.setdefault(label, len(order))
    return np.array([order.get(label, -1) for label in labels])


def same_partition(a, b):
    if not np.array_equal(a == -1, b == -1):
        return False
    pairs = set(zip(a[a != -1].tolist(), b[b != -1].tolist()))
    return len(pairs) == len(set(a[a != -1].tolist())) == len(set(b[b != -1].tolist()))


def test_two_separated_blobs():
    rng = np.random.default_rng(1)
    points = np.vstack([rng.normal(0, 0.1, (50, 3)), rng.normal(0, 0.1, (50, 3)) + [5.0, 0, 0]])
    labeling = cluster(PointCloud(points), np.ones(100, dtype=bool))
    assert labeling.cluster_count == 2
    assert set(labeling.labels[:50]) == {0}
    assert set(labeling.labels[50:]) == {1}


def test_isolated_point_is_noise():
    labeling = cluster(PointCloud([[0.0, 0.0, 0.0]]), np.array([True]), min_pts=10)
    assert labeling.labels.tolist() == [-1]


def test_ground_points_are_unlabeled(rng):
    points = rng.normal(0, 0.1, (40, 3))
    mask = np.ones(40, dtype=bool)
    mask[:5] = False
    labeling = cluster(PointCloud(points), mask, min_pts=3)
    assert (labeling.labels[:5] == -1).all()
    assert labeling.is_ground[:5].all()
    with pytest.raises(ContractError):
        ClusterLabeling([0, 0], [True, False])


@pytest.mark.parametrize("backend", ["kdtree", "brute_force"])
def test_dbscan_matches_brute_force_oracle(backend):
    extractor = ClusterExtractor(eps=0.5, min_pts=10, backend=backend)
    scenes = 100 if backend == "kdtree" else 10
    for seed in range(scenes):
        rng = np.random.default_rng(seed)
        centers = rng.uniform(-6, 6, size=(3, 3))
        points = np.vstack([rng.normal(size=(150, 3)) * 0.4 + c for c in centers] +
                           [rng.uniform(-8, 8, size=(50, 3))])
        labels = extractor.fit(points)
        expected = brute_force_dbscan(points, 0.5, 10)
        assert same_partition(labels, expected), f"scene {seed}"
        assert np.array_equal(labels, expected), f"scene {seed}"


# ---- tracking ----

def labeled_track(offsets, count=20):
    """一个簇在各时刻的点，时刻 i 整体平移 offsets[i]"""
    base = np.random.default_rng(5).normal(size=(count, 3))
    points = np.vstack([base + offset for offset in offsets])
    timestamps = np.repeat(np.arange(len(offsets)) * 0.05, count)
    labeling = ClusterLabeling(np.zeros(len(points), dtype=int), np.zeros(len(points), dtype=bool))
    return points, labeling, timestamps


def test_moving_threshold_boundary():
    points, labeling, timestamps = labeled_track([(0, 0, 0), (0.6, 0, 0)])
    assert track_moving(points, labeling, timestamps, c=0.5)[0].is_moving
    points, labeling, timestamps = labeled_track([(0, 0, 0), (0.3, 0, 0)])
    assert not track_moving(points, labeling, timestamps, c=0.5)[0].is_moving
    # L1 距离：0.2 + 0.2
    points, labeling, timestamps = labeled_track([(0, 0, 0), (0.2, 0.2, 0)])
    track = track_moving(points, labeling, timestamps, c=0.5)[0]
    assert track.consecutive_l1_displacements == [pytest.approx(0.4)]
    assert not track.is_moving
    assert track_moving(points, labeling, timestamps, c=0.3)[0].is_moving


def test_single_timestamp_is_not_moving():
    points, labeling, timestamps = labeled_track([(0, 0, 0)])
    track = track_moving(points, labeling, timestamps)[0]
    assert not track.is_moving
    assert track.consecutive_l1_displacements == []


def test_sparse_timestamps_are_skipped():
    points, labeling, timestamps = labeled_track([(0, 0, 0), (5.0, 0, 0), (0.1, 0, 0)])
    # 中间时刻只保留 3 个点，低于 min_track_points
    keep = np.ones(len(points), dtype=bool)
    keep[23:40] = False
    labeling = ClusterLabeling(labeling.labels[keep], labeling.is_ground[keep])
    track = track_moving(points[keep], labeling, timestamps[keep], min_track_points=5)[0]
    assert not track.valid[1]
    assert len(track.consecutive_l1_displacements) == 1
    assert not track.is_moving


# ---- ICP ----

def test_icp_identity(rng):
    points = blob(rng, (0, 0, 0))
    result = icp_register(points, points)
    assert_allclose(result.transform.as_matrix(), np.eye(4), atol=1e-12)
    assert result.rmse == pytest.approx(0.0, abs=1e-12)


def test_icp_recovers_translation(rng):
    source = blob(rng, (0, 0, 0), count=150)
    target = source + [0.4, 0.2, 0.0]
    result = icp_register(source, target, centroid_init(source, target))
    assert_allclose(result.transform.translation, [0.4, 0.2, 0.0], atol=1e-6)
    assert result.status is ICPStatus.CONVERGED


def box_points(rng, count=1000):
    return rng.uniform(-1, 1, size=(count, 3)) * [3.0, 1.5, 0.8]


@pytest.mark.parametrize("seed", range(10))
def test_icp_recovers_rotation_and_translation(seed):
    rng = np.random.default_rng(seed)
    source = box_points(rng)
    angle = math.radians(rng.uniform(-8, 8))
    truth = RigidTransform(rotation_about_z(angle), rng.uniform(-1, 1, 3))
    target = truth.apply_points(source)

    result = icp_register(source, target, centroid_init(source, target))
    assert_allclose(result.transform.translation, truth.translation, atol=1e-4)
    error = rotation_angle(result.transform.rotation.T @ truth.rotation)
    assert math.degrees(error) < 0.01
    assert result.iterations <= 50
    assert all(b <= a for a, b in zip(result.rmse_history, result.rmse_history[1:]))


@pytest.mark.parametrize("seed", range(20))
def test_icp_fifteen_degrees_on_sparse_cluster(seed):
    rng = np.random.default_rng(seed)
    source = box_points(rng, count=100)
    angle = math.radians(15.0) * rng.choice([-1.0, 1.0])
    translation = rng.uniform(-1, 1, 3)
    translation /= max(1.0, np.linalg.norm(translation))
    truth = RigidTransform(rotation_about_z(angle), translation)
    target = truth.apply_points(source)

    result = icp_register(source, target, centroid_init(source, target))
    assert_allclose(result.transform.translation, truth.translation, atol=1e-4)
    assert math.degrees(rotation_angle(result.transform.rotation.T @ truth.rotation)) < 0.01


def test_icp_ten_degree_rotation_from_identity(rng):
    source = box_points(rng)
    truth = RigidTransform(rotation_about_z(math.radians(10)), [0.3, 0.1, 0.0])
    target = truth.apply_points(source)
    result = icp_register(source, target, centroid_init(source, target))
    assert_allclose(result.transform.translation, truth.translation, atol=1e-4)
    assert math.degrees(rotation_angle(result.transform.rotation.T @ truth.rotation)) < 0.01


def test_icp_degenerate_geometry():
    line = np.column_stack([np.linspace(0, 5, 20), np.zeros(20), np.zeros(20)])
    init = RigidTransform.from_translation([0.1, 0.0, 0.0])
    result = icp_register(line, line + [0.3, 0.0, 0.0], init)
    assert result.status is ICPStatus.DEGENERATE
    assert result.transform is init


def test_icp_needs_three_points():
    with pytest.raises(ContractError):
        icp_register(np.zeros((2, 3)), np.zeros((5, 3)))


# ---- mining ----

def slow_object_config(**overrides):
    return PPMConfig(c=0.05, **overrides)


def test_static_scene_gives_identity():
    script = moving_object_script().model_copy(update={"moving_objects": []})
    result = mine(generate(script).sequence)
    assert result.diagnostics["moving_cluster_count"] == 0
    assert result.z.identity_mask().all()


def test_mined_translation_one_step_before_keyframe(moving_scene):
    result = PositivePairMiner(slow_object_config()).mine(moving_scene.sequence)
    assert result.diagnostics["moving_cluster_count"] == 1

    sequence = moving_scene.sequence
    previous = sequence.keyframe_index - 1
    labels = moving_scene.labels[previous]
    z = result.frame_transforms(previous)
    moving = labels == DYNAMIC
    assert_allclose(z.translations[moving], np.tile([0.10, 0.0, 0.0], (moving.sum(), 1)), atol=0.01)
    assert z.identity_mask()[~moving].all()


def test_mined_transforms_land_on_ground_truth(moving_scene):
    result = PositivePairMiner(slow_object_config()).mine(moving_scene.sequence)
    start, endpoints, labels = moving_scene.stacked(window=11)
    predicted = result.z.apply_points(start)
    error = np.linalg.norm(predicted - endpoints, axis=1)
    assert error[labels == DYNAMIC].max() < 0.01
    assert error[labels != DYNAMIC].max() < 1e-6

    # 地面点的变换逐位为单位变换
    assert result.z.identity_mask()[labels == GROUND].all()
    assert all(r["rmse"] < 0.01 for r in result.diagnostics["registrations"])


def test_shared_transform_per_cluster_and_timestamp(moving_scene):
    result = PositivePairMiner(slow_object_config()).mine(moving_scene.sequence)
    labels = result.labeling.labels
    for cluster_id in range(result.labeling.cluster_count):
        for t in np.unique(result.aggregated.timestamps):
            mask = (labels == cluster_id) & (result.aggregated.timestamps == t)
            if mask.sum() > 1:
                first = result.z.as_matrices()[mask][0]
                assert (result.z.as_matrices()[mask] == first).all()


def test_unsynced_matching_after_mining(moving_scene):
    result = PositivePairMiner(slow_object_config()).mine(moving_scene.sequence)
    camera = moving_scene.sequence.camera
    frame = 0
    cloud = result.frame_cloud(frame)
    corr = match_unsynced(camera, cloud, result.frame_transforms(frame))

    truth = project_points(camera, moving_scene.gt_endpoints[frame])
    dynamic = moving_scene.labels[frame][corr.point_index] == DYNAMIC
    assert dynamic.sum() > 100
    truth_uv = truth.uv[corr.point_index[dynamic]]
    pixel_error = np.hypot(corr.u[dynamic] - truth_uv[:, 0], corr.v[dynamic] - truth_uv[:, 1])
    assert pixel_error.max() < 1.0


def test_mining_is_deterministic_with_threads(moving_scene):
    serial = PositivePairMiner(slow_object_config()).mine(moving_scene.sequence)
    threaded = PositivePairMiner(slow_object_config(threads=4)).mine(moving_scene.sequence)
    assert np.array_equal(serial.z.rotations, threaded.z.rotations)
    assert np.array_equal(serial.z.translations, threaded.z.translations)


def test_cluster_absent_at_keyframe_is_chained(camera):
    """关键帧上没有该簇的点时，通过最近的有效时刻外推"""
    rng = np.random.default_rng(11)
    grid = np.stack(np.meshgrid(np.arange(6), np.arange(4), np.arange(3), indexing="ij"), axis=-1)
    body = grid.reshape(-1, 3) * 0.25 + [0.0, 0.0, 1.5]
    ground = np.column_stack([rng.uniform(-20, 20, (400, 2)), np.zeros(400)])
    step = np.array([0.6, 0.0, 0.0])
    frames = []
    for i in range(5):
        points = ground if i == 2 else np.vstack([ground, body + step * i])
        frames.append(Frame(PointCloud(points, 0.05 * i), RigidTransform.identity()))
    sequence = FrameSequence(frames, 2, camera)

    result = mine(sequence)
    assert result.diagnostics["moving_cluster_count"] == 1
    assert result.diagnostics["unresolved_clusters"] == []
    for i in (0, 1, 3, 4):
        z = result.frame_transforms(i)
        moved = z.translations[400:]
        assert_allclose(moved, np.tile(step * (2 - i), (len(body), 1)), atol=1e-6)


# ---- inter-frame sampling ----

def timed_sequence(camera, timestamps, keyframe_index):
    frames = [Frame(PointCloud(np.zeros((1, 3)), t), RigidTransform.identity()) for t in timestamps]
    return FrameSequence(frames, keyframe_index, camera)


def test_single_interframe_is_always_chosen(camera):
    sequence = timed_sequence(camera, [0.0, 0.1], 0)
    assert {sample_interframe(sequence, seed) for seed in range(20)} == {1}


def test_sampling_frequency_is_proportional_to_offset(camera):
    sequence = timed_sequence(camera, [0.0, 1.0, 2.0, 3.0], 0)
    draws = InterframeSampler(seed=7).draw(sequence, size=100_000)
    frequencies = np.bincount(draws, minlength=4)[1:] / len(draws)
    assert_allclose(frequencies, [1 / 6, 2 / 6, 3 / 6], atol=0.02)


def test_symmetric_offsets_are_equally_likely(camera):
    sequence = timed_sequence(camera, [0.0, 1.0, 2.0], 1)
    draws = InterframeSampler(seed=3).draw(sequence, size=20_000)
    assert abs((draws == 0).mean() - 0.5) < 0.02


def test_sampling_is_deterministic(camera):
    sequence = timed_sequence(camera, [0.0, 0.1, 0.2, 0.3, 0.4], 2)
    assert sample_interframe(sequence, 42) == sample_interframe(sequence, 42)
    pair = sample_interframes(sequence, seed=1, count=2)
    assert len(set(pair)) == 2 and 2 not in pair
    with pytest.raises(ContractError):
        sample_interframe(timed_sequence(camera, [0.0], 0), 0)
