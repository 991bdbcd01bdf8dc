"""正样本对挖掘：汇聚 → 去地面 → 聚类 → 运动簇跟踪 → 簇级ICP → 逐点变换Z"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from src.geometry.point_cloud import PointCloud
from src.geometry.transforms import PerPointTransform, RigidTransform, compose
from src.ppm.aggregation import aggregate
from src.ppm.clustering import ClusterExtractor
from src.ppm.ground import GroundRemover
from src.ppm.registration import ClusterICP, ICPConfig, centroid_init
from src.ppm.tracking import MovingClusterTracker
from src.utils.errors import ConfigurationError, ContractError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PPMConfig:
    window: Optional[int] = 11
    ground_inlier_dist: float = 0.2
    max_ground_tilt_deg: float = 15.0
    ransac_iters: int = 200
    ransac_min_points: int = 100
    eps: float = 0.5
    min_pts: int = 10
    c: float = 0.5
    min_track_points: int = 5
    icp: ICPConfig = field(default_factory=ICPConfig)
    seed: int = 0
    threads: Optional[int] = None

    def __post_init__(self):
        if self.min_track_points < 3:
            raise ConfigurationError("min_track_points must be >= 3 for cluster registration")
        if self.threads is not None and self.threads < 1:
            raise ConfigurationError(f"threads must be >= 1, got {self.threads}")


@dataclass(frozen=True, eq=False)
class MiningResult:
    """Z 与汇聚点一一对应，位于关键帧的LiDAR坐标系"""
    z: PerPointTransform
    aggregated: object
    labeling: object
    tracks: list
    frames: object
    diagnostics: dict

    @property
    def keyframe_pose(self):
        return self.frames.keyframe.pose

    def frame_cloud(self, i):
        """第 i 帧（窗口内下标）的点，已做自车运动补偿"""
        mask = self.aggregated.frame_mask(i)
        return PointCloud(
            self.keyframe_pose.inverse().apply_points(self.aggregated.points[mask]),
            self.frames.frames[i].cloud.timestamp,
            self.aggregated.source_index[mask],
        )

    def frame_transforms(self, i):
        return self.z.subset(self.aggregated.frame_mask(i))


class PositivePairMiner:
    """对每个运动簇，把各时间戳的切片配准到关键帧时刻的切片"""

    def __init__(self, config=None):
        self.config = config or PPMConfig()
        cfg = self.config
        self.ground_remover = GroundRemover(
            inlier_dist=cfg.ground_inlier_dist, max_tilt_deg=cfg.max_ground_tilt_deg,
            iterations=cfg.ransac_iters, min_points=cfg.ransac_min_points, seed=cfg.seed,
        )
        self.extractor = ClusterExtractor(eps=cfg.eps, min_pts=cfg.min_pts)
        self.tracker = MovingClusterTracker(c=cfg.c, min_track_points=cfg.min_track_points)
        self.icp = ClusterICP(cfg.icp)

    def mine(self, frames):
        frames = frames.window(self.config.window)
        aggregated = aggregate(frames)

        ground = self.ground_remover.segment(aggregated.points)
        labeling = self.extractor.label(aggregated.cloud, ~ground.is_ground)
        tracks = self.tracker.track(aggregated.points, labeling, aggregated.timestamps)
        moving = [t for t in tracks if t.is_moving]

        keyframe_time = frames.keyframe_timestamp
        jobs = [(track, labeling.labels, aggregated.points, aggregated.timestamps, keyframe_time)
                for track in moving]
        if self.config.threads and self.config.threads > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=self.config.threads) as executor:
                solved = list(executor.map(lambda job: self._solve_cluster(*job), jobs))
        else:
            solved = [self._solve_cluster(*job) for job in jobs]

        rotations = np.tile(np.eye(3), (len(aggregated), 1, 1))
        translations = np.zeros((len(aggregated), 3))
        registrations, unresolved = [], []
        # 按簇编号合并，结果与线程调度无关
        for cluster_id, transforms, records in sorted(solved, key=lambda item: item[0]):
            if transforms is None:
                unresolved.append(cluster_id)
                continue
            in_cluster = labeling.labels == cluster_id
            for timestamp, transform in transforms.items():
                mask = in_cluster & (aggregated.timestamps == timestamp)
                rotations[mask] = transform.rotation
                translations[mask] = transform.translation
            registrations.extend(records)

        z = PerPointTransform(rotations, translations).conjugated(frames.keyframe.pose)
        diagnostics = {
            "point_count": len(aggregated),
            "frame_count": len(frames),
            "ground_status": ground.status.value,
            "ground_fraction": ground.ground_fraction,
            "cluster_count": labeling.cluster_count,
            "moving_cluster_count": len(moving),
            "moving_point_count": int((~z.identity_mask()).sum()),
            "unresolved_clusters": unresolved,
            "registrations": registrations,
        }
        logger.info("Mined %d moving clusters, %d points carry a non-identity transform",
                    len(moving), diagnostics["moving_point_count"])
        return MiningResult(z, aggregated, labeling, tracks, frames, diagnostics)

    def _solve_cluster(self, track, labels, points, timestamps, keyframe_time):
        """返回 (簇编号, {时间戳: 全局坐标下的变换}, 配准记录)；无法解算时变换为 None"""
        in_cluster = labels == track.cluster_id
        valid_times = track.timestamps[track.valid]

        def slice_at(t):
            return points[in_cluster & (timestamps == t)]

        if keyframe_time in valid_times:
            anchor, link = keyframe_time, None
        elif len(valid_times) >= 2:
            # 关键帧上缺少该簇：先配准到最近的有效时刻，再按匀速外推到关键帧
            nearest = np.argsort(np.abs(valid_times - keyframe_time), kind="stable")[:2]
            anchor = valid_times[nearest[0]]
            t_a, t_b = np.sort(valid_times[nearest])
            velocity = (track.center_at(t_b) - track.center_at(t_a)) / (t_b - t_a)
            link = RigidTransform.from_translation(velocity * (keyframe_time - anchor))
            logger.info("Cluster %d is absent at the keyframe, chaining through t=%.3f",
                        track.cluster_id, anchor)
        else:
            logger.warning("Cluster %d has one usable slice and no keyframe slice, left as identity",
                           track.cluster_id)
            return track.cluster_id, None, []

        transforms, records = {}, []
        target = slice_at(anchor)
        if link is not None:
            transforms[anchor] = link
        for t in valid_times:
            if t == anchor:
                continue
            source = slice_at(t)
            result = self.icp.register(source, target, centroid_init(source, target))
            transform = result.transform if link is None else compose(link, result.transform)
            transforms[float(t)] = transform
            records.append({
                "cluster_id": int(track.cluster_id),
                "timestamp": float(t),
                "rmse": None if np.isnan(result.rmse) else result.rmse,
                "iterations": result.iterations,
                "status": result.status.value,
            })
        return track.cluster_id, transforms, records


def mine(frames, config=None):
    return PositivePairMiner(config).mine(frames)


class InterframeSampler:
    """按与关键帧的时间差 |Δt| 成比例地抽取非关键帧"""

    def __init__(self, seed=0):
        self.rng = np.random.default_rng(seed)

    @staticmethod
    def weights(frames):
        candidates = np.asarray(frames.interframe_indices, dtype=np.int64)
        if len(candidates) == 0:
            raise ContractError("sequence has no inter-frames to sample")
        offsets = np.abs(frames.timestamps[candidates] - frames.keyframe_timestamp)
        return candidates, offsets / offsets.sum()

    def draw(self, frames, size=None):
        candidates, p = self.weights(frames)
        return self.rng.choice(candidates, size=size, p=p)

    def draw_distinct(self, frames, count):
        candidates, p = self.weights(frames)
        if not 1 <= count <= len(candidates):
            raise ConfigurationError(f"cannot draw {count} distinct inter-frames from {len(candidates)}")
        return [int(i) for i in self.rng.choice(candidates, size=count, replace=False, p=p)]


def sample_interframe(frames, seed=0):
    return int(InterframeSampler(seed).draw(frames))


def sample_interframes(frames, seed=0, count=2):
    return InterframeSampler(seed).draw_distinct(frames, count)
