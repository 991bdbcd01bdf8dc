import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from src.utils.errors import ContractError


class Point3(NamedTuple):
    """单个三维点，单位米"""
    x: float
    y: float
    z: float


def make_point3(x, y, z):
    """构造Point3并检查坐标有限"""
    point = Point3(float(x), float(y), float(z))
    if not all(math.isfinite(c) for c in point):
        raise ContractError(f"point coordinates must be finite, got {point}")
    return point


@dataclass(frozen=True, eq=False)
class PointCloud:
    """带时间戳的点云，source_index 记录每个点的原始编号，过滤和去重后保持不变"""
    points: np.ndarray
    timestamp: float = 0.0
    source_index: np.ndarray = None

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64)
        if points.size == 0:
            points = points.reshape(0, 3)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ContractError(f"points must have shape (N, 3), got {points.shape}")
        if not np.all(np.isfinite(points)):
            raise ContractError("point coordinates must be finite")

        if self.source_index is None:
            index = np.arange(len(points), dtype=np.int64)
        else:
            index = np.array(self.source_index, dtype=np.int64).reshape(-1)
        if len(index) != len(points):
            raise ContractError(
                f"source_index length {len(index)} does not match point count {len(points)}"
            )
        if len(np.unique(index)) != len(index):
            raise ContractError("source_index values must be unique")

        points.setflags(write=False)
        index.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "source_index", index)
        object.__setattr__(self, "timestamp", float(self.timestamp))

    def __len__(self):
        return len(self.points)

    @property
    def is_empty(self):
        return len(self.points) == 0

    def subset(self, selector):
        """按布尔掩码或位置索引取子集，保留原始编号"""
        selector = np.asarray(selector)
        return PointCloud(self.points[selector], self.timestamp, self.source_index[selector])

    def with_points(self, points):
        """替换坐标，保留时间戳和原始编号"""
        return PointCloud(points, self.timestamp, self.source_index)
