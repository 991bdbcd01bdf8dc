"""RANSAC 地面分割：单平面，法向量限制在接近竖直的范围内"""
import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from src.utils.errors import ConfigurationError, EmptyCloudError

logger = logging.getLogger(__name__)


class GroundStatus(str, Enum):
    OK = "ok"
    NO_PLANE = "no_plane"
    TOO_FEW_POINTS = "too_few_points"


@dataclass(frozen=True, eq=False)
class GroundResult:
    is_ground: np.ndarray
    status: GroundStatus
    normal: np.ndarray = None
    offset: float = 0.0

    @property
    def ground_fraction(self):
        return float(self.is_ground.mean()) if len(self.is_ground) else 0.0


class GroundRemover:
    """平面 n·p + d = 0，|n·p + d| ≤ inlier_dist 的点记为地面"""

    def __init__(self, inlier_dist=0.2, max_tilt_deg=15.0, iterations=200, min_points=100, seed=0):
        if not inlier_dist > 0:
            raise ConfigurationError(f"inlier_dist must be positive, got {inlier_dist}")
        if not 0 <= max_tilt_deg < 90:
            raise ConfigurationError(f"max_tilt_deg must be in [0, 90), got {max_tilt_deg}")
        if iterations < 1:
            raise ConfigurationError(f"iterations must be >= 1, got {iterations}")
        self.inlier_dist = inlier_dist
        self.min_cos_tilt = math.cos(math.radians(max_tilt_deg))
        self.iterations = iterations
        self.min_points = min_points
        self.seed = seed

    def segment(self, points):
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if len(points) == 0:
            raise EmptyCloudError()
        no_ground = np.zeros(len(points), dtype=bool)
        if len(points) < max(self.min_points, 3):
            logger.warning("Ground removal skipped: %d points is below the minimum of %d",
                           len(points), self.min_points)
            return GroundResult(no_ground, GroundStatus.TOO_FEW_POINTS)

        # 先去均值，平面拟合在中心化坐标下进行
        mean = points.mean(axis=0)
        centered = points - mean
        rng = np.random.default_rng(self.seed)

        best_inliers, best_count, best_plane = None, 0, None
        for _ in range(self.iterations):
            sample = centered[rng.choice(len(points), size=3, replace=False)]
            normal = np.cross(sample[1] - sample[0], sample[2] - sample[0])
            norm = np.linalg.norm(normal)
            if norm < 1e-12:
                continue
            normal /= norm
            if normal[2] < 0:
                normal = -normal
            if normal[2] < self.min_cos_tilt:
                continue
            inliers = np.abs(centered @ normal - normal @ sample[0]) <= self.inlier_dist
            count = int(inliers.sum())
            if count > best_count:
                best_inliers, best_count = inliers, count
                best_plane = (normal, -float(normal @ sample[0]))

        if best_inliers is None or best_count < 3:
            logger.warning("No ground plane within %.1f degrees of horizontal found",
                           math.degrees(math.acos(self.min_cos_tilt)))
            return GroundResult(no_ground, GroundStatus.NO_PLANE)

        normal, offset = self._refine(centered[best_inliers])
        if normal[2] < self.min_cos_tilt:
            normal, offset = best_plane
        is_ground = np.abs(centered @ normal + offset) <= self.inlier_dist
        # 还原到原始坐标：n·(p - mean) + d = n·p + (d - n·mean)
        logger.info("Ground plane covers %d of %d points", int(is_ground.sum()), len(points))
        return GroundResult(is_ground, GroundStatus.OK, normal, float(offset - normal @ mean))

    @staticmethod
    def _refine(inliers):
        """内点上用SVD做最小二乘平面"""
        center = inliers.mean(axis=0)
        _, _, vt = np.linalg.svd(inliers - center, full_matrices=False)
        normal = vt[-1]
        if normal[2] < 0:
            normal = -normal
        return normal, -float(normal @ center)


def ground_removal(cloud, **kwargs):
    """返回每个点是否为地面"""
    return GroundRemover(**kwargs).segment(cloud.points).is_ground
