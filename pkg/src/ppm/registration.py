"""簇级点到点ICP"""
import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from src.geometry.spatial_index import PointIndex
from src.geometry.transforms import RigidTransform, compose
from src.utils.errors import ConfigurationError, ContractError

logger = logging.getLogger(__name__)

# 中心化源点云的第二奇异值低于此比例视为共线
DEGENERACY_RATIO = 1e-9


class ICPStatus(str, Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    STALLED = "stalled"
    DEGENERATE = "degenerate"
    NO_CORRESPONDENCES = "no_correspondences"


@dataclass(frozen=True)
class ICPConfig:
    max_iters: int = 50
    tol: float = 1e-6
    max_correspondence_dist: float = 2.0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigurationError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.tol >= 0:
            raise ConfigurationError(f"tol must be non-negative, got {self.tol}")
        if not self.max_correspondence_dist > 0:
            raise ConfigurationError("max_correspondence_dist must be positive")


@dataclass(frozen=True, eq=False)
class ICPResult:
    transform: RigidTransform
    rmse: float
    iterations: int
    status: ICPStatus
    rmse_history: list = field(default_factory=list)


def kabsch(source, target):
    """已知对应关系下 source -> target 的最小二乘刚体变换"""
    source_center = source.mean(axis=0)
    target_center = target.mean(axis=0)
    u, _, vt = np.linalg.svd((source - source_center).T @ (target - target_center))
    rotation = vt.T @ u.T
    # 反射修正，保证 det(R) = +1
    if np.linalg.det(rotation) < 0:
        vt[-1, :] *= -1
        rotation = vt.T @ u.T
    return RigidTransform(_orthonormalize(rotation), target_center - rotation @ source_center)


def _orthonormalize(rotation):
    u, _, vt = np.linalg.svd(rotation)
    result = u @ vt
    if np.linalg.det(result) < 0:
        u[:, -1] *= -1
        result = u @ vt
    return result


def is_degenerate(points):
    """秩不足（共线或重合）的点集"""
    centered = points - points.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    return s[0] == 0.0 or s[1] <= DEGENERACY_RATIO * s[0]


class ClusterICP:
    """最近邻关联与SVD闭式求解交替进行，保留最优变换，rmse 单调不增"""

    def __init__(self, config=None):
        self.config = config or ICPConfig()

    def _associate(self, index, target, moved):
        distances, neighbours = index.nearest(moved)
        keep = distances <= self.config.max_correspondence_dist
        if keep.sum() < 3:
            return None, None, np.inf
        rmse = float(np.sqrt(np.mean(distances[keep] ** 2)))
        return keep, target[neighbours[keep]], rmse

    def register(self, source, target, init=None):
        source = np.asarray(getattr(source, "points", source), dtype=np.float64).reshape(-1, 3)
        target = np.asarray(getattr(target, "points", target), dtype=np.float64).reshape(-1, 3)
        if len(source) < 3 or len(target) < 3:
            raise ContractError(
                f"ICP needs at least 3 points on each side, got {len(source)} and {len(target)}"
            )
        transform = init or RigidTransform.identity()

        if is_degenerate(source) or is_degenerate(target):
            logger.warning("ICP skipped: degenerate cluster geometry (%d / %d points)",
                           len(source), len(target))
            return ICPResult(transform, float("nan"), 0, ICPStatus.DEGENERATE)

        index = PointIndex(target)
        keep, matched, rmse = self._associate(index, target, transform.apply_points(source))
        if keep is None:
            logger.warning("ICP found no correspondences within %.2f m",
                           self.config.max_correspondence_dist)
            return ICPResult(transform, float("nan"), 0, ICPStatus.NO_CORRESPONDENCES)

        history = [rmse]
        status = ICPStatus.CONVERGED if rmse <= self.config.tol else ICPStatus.MAX_ITERATIONS
        iterations = 0
        while status is ICPStatus.MAX_ITERATIONS and iterations < self.config.max_iters:
            moved = transform.apply_points(source)
            candidate = compose(kabsch(moved[keep], matched), transform)
            next_keep, next_matched, next_rmse = self._associate(
                index, target, candidate.apply_points(source)
            )
            if next_keep is None or next_rmse > rmse:
                status = ICPStatus.STALLED
                break

            improvement = rmse - next_rmse
            transform, keep, matched, rmse = candidate, next_keep, next_matched, next_rmse
            iterations += 1
            history.append(rmse)
            if improvement < self.config.tol:
                status = ICPStatus.CONVERGED
                break

        logger.debug("ICP %s after %d iterations, rmse %.6f m", status.value, iterations, rmse)
        return ICPResult(transform, rmse, iterations, status, history)


def centroid_init(source, target):
    """质心差平移，作为ICP初值"""
    source = np.asarray(getattr(source, "points", source), dtype=np.float64)
    target = np.asarray(getattr(target, "points", target), dtype=np.float64)
    return RigidTransform.from_translation(target.mean(axis=0) - source.mean(axis=0))


def icp_register(source, target, init=None, config=None):
    return ClusterICP(config).register(source, target, init)
