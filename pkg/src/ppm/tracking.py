"""按时间跟踪簇中心，判断簇是否在运动"""
import logging
from dataclasses import dataclass

import numpy as np

from src.utils.errors import ConfigurationError, ContractError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ClusterTrack:
    """一个簇在各时间戳上的成员数和中心

    成员数少于 min_track_points 的时间戳中心为 NaN，不参与位移计算。
    """
    cluster_id: int
    timestamps: np.ndarray
    member_counts: np.ndarray
    centers: np.ndarray
    is_moving: bool
    consecutive_l1_displacements: list

    @property
    def valid(self):
        return ~np.isnan(self.centers[:, 0])

    def center_at(self, timestamp):
        hit = np.flatnonzero(self.timestamps == timestamp)
        if len(hit) == 0 or not self.valid[hit[0]]:
            return None
        return self.centers[hit[0]]


class MovingClusterTracker:
    """相邻有效时间戳的中心L1距离任一超过 c 即视为运动"""

    def __init__(self, c=0.5, min_track_points=5):
        if not c > 0:
            raise ConfigurationError(f"moving threshold c must be positive, got {c}")
        if min_track_points < 1:
            raise ConfigurationError(f"min_track_points must be >= 1, got {min_track_points}")
        self.c = c
        self.min_track_points = int(min_track_points)

    def track(self, points, labeling, timestamps):
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        timestamps = np.asarray(timestamps, dtype=np.float64).reshape(-1)
        if not (len(points) == len(timestamps) == len(labeling.labels)):
            raise ContractError("points, labels and timestamps must have equal length")

        tracks = []
        for cluster_id in range(labeling.cluster_count):
            members = labeling.members(cluster_id)
            tracks.append(self._track_cluster(cluster_id, points[members], timestamps[members]))

        moving = sum(t.is_moving for t in tracks)
        logger.info("%d of %d clusters are moving (c = %.3f m)", moving, len(tracks), self.c)
        return tracks

    def _track_cluster(self, cluster_id, points, timestamps):
        times, inverse, counts = np.unique(timestamps, return_inverse=True, return_counts=True)
        sums = np.zeros((len(times), 3))
        np.add.at(sums, inverse, points)
        centers = sums / counts[:, None]
        centers[counts < self.min_track_points] = np.nan

        valid_centers = centers[counts >= self.min_track_points]
        displacements = [float(d) for d in np.abs(np.diff(valid_centers, axis=0)).sum(axis=1)]
        is_moving = any(d > self.c for d in displacements)
        return ClusterTrack(cluster_id, times, counts.astype(np.int64), centers, is_moving, displacements)


def track_moving(points, labeling, timestamps, c=0.5, min_track_points=5):
    return MovingClusterTracker(c=c, min_track_points=min_track_points).track(points, labeling, timestamps)
