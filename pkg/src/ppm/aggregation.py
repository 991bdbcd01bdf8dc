"""把连续帧汇聚到全局坐标系"""
import logging
from dataclasses import dataclass

import numpy as np

from src.geometry.point_cloud import PointCloud
from src.geometry.transforms import apply
from src.utils.errors import ConfigurationError, EmptyCloudError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AggregatedCloud:
    """汇聚后的点云；frame_index/source_index 记录每个点来自哪一帧的哪个点"""
    cloud: PointCloud
    frame_index: np.ndarray
    source_index: np.ndarray
    timestamps: np.ndarray

    def __len__(self):
        return len(self.cloud)

    @property
    def points(self):
        return self.cloud.points

    def frame_mask(self, i):
        return self.frame_index == i


def aggregate(frames, window=None):
    """逐帧 sensor_to_global 后拼接，每个点保留其来源帧和原始编号"""
    frames = frames.window(window)
    missing = [i for i, frame in enumerate(frames.frames) if frame.pose is None]
    if missing:
        raise ConfigurationError(f"missing pose for frame(s) {missing}")

    chunks, frame_index, source_index, timestamps = [], [], [], []
    for i, (cloud, pose) in enumerate(frames.frames):
        if cloud.is_empty:
            continue
        chunks.append(apply(pose, cloud).points)
        frame_index.append(np.full(len(cloud), i, dtype=np.int64))
        source_index.append(cloud.source_index)
        timestamps.append(np.full(len(cloud), cloud.timestamp))
    if not chunks:
        raise EmptyCloudError()

    points = np.concatenate(chunks)
    result = AggregatedCloud(
        cloud=PointCloud(points, frames.keyframe_timestamp),
        frame_index=np.concatenate(frame_index),
        source_index=np.concatenate(source_index),
        timestamps=np.concatenate(timestamps),
    )
    logger.info("Aggregated %d frames into %d points", len(frames), len(result))
    return result
