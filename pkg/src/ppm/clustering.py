"""非地面点的欧氏DBSCAN聚类"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from src.geometry.spatial_index import PointIndex
from src.utils.errors import ConfigurationError, ContractError

logger = logging.getLogger(__name__)

NOISE = -1


@dataclass(frozen=True, eq=False)
class ClusterLabeling:
    """label 为 -1 表示噪声或地面；簇编号连续 0..C-1"""
    labels: np.ndarray
    is_ground: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        is_ground = np.asarray(self.is_ground, dtype=bool).reshape(-1)
        if len(labels) != len(is_ground):
            raise ContractError("labels and ground flags must have equal length")
        if np.any(labels[is_ground] != NOISE):
            raise ContractError("ground points must carry the noise label")
        ids = np.unique(labels[labels != NOISE])
        if len(ids) and not np.array_equal(ids, np.arange(len(ids))):
            raise ContractError("cluster ids must be contiguous from 0")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "is_ground", is_ground)

    @property
    def cluster_count(self):
        return int(self.labels.max(initial=NOISE)) + 1

    def members(self, cluster_id):
        return np.flatnonzero(self.labels == cluster_id)


class ClusterExtractor:
    """核心点：eps 邻域内（含自身、含边界）至少 min_pts 个点

    核心点之间的连通分量构成簇，边界点归入 eps 内下标最小的核心点所在的簇，
    簇按其最小点下标编号。
    """

    def __init__(self, eps=0.5, min_pts=10, backend="kdtree"):
        if not eps > 0:
            raise ConfigurationError(f"eps must be positive, got {eps}")
        if min_pts < 1:
            raise ConfigurationError(f"min_pts must be >= 1, got {min_pts}")
        self.eps = eps
        self.min_pts = int(min_pts)
        self.backend = backend

    def fit(self, points):
        """对一组点聚类，返回每个点的簇编号"""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        n = len(points)
        labels = np.full(n, NOISE, dtype=np.int64)
        if n == 0:
            return labels

        index = PointIndex(points, backend=self.backend)
        is_core = index.radius_counts(points, self.eps) >= self.min_pts
        core = np.flatnonzero(is_core)
        if len(core) == 0:
            return labels

        pairs = index.pairs(self.eps)
        pairs = pairs[is_core[pairs[:, 0]] & is_core[pairs[:, 1]]]
        graph = coo_matrix(
            (np.ones(len(pairs), dtype=np.int8), (pairs[:, 0], pairs[:, 1])), shape=(n, n)
        )
        _, component = connected_components(graph, directed=False)
        labels[core] = component[core]

        # 边界点：非核心但 eps 内有核心点
        for i in np.flatnonzero(~is_core):
            neighbours = index.radius_neighbors(points[i], self.eps)[0]
            core_neighbours = neighbours[is_core[neighbours]]
            if len(core_neighbours):
                labels[i] = labels[core_neighbours.min()]

        return _renumber_by_first_member(labels)

    def label(self, cloud, non_ground):
        non_ground = np.asarray(non_ground, dtype=bool).reshape(-1)
        if len(non_ground) != len(cloud):
            raise ContractError(f"mask of length {len(non_ground)} for {len(cloud)} points")
        labels = np.full(len(cloud), NOISE, dtype=np.int64)
        labels[non_ground] = self.fit(cloud.points[non_ground])
        labeling = ClusterLabeling(labels, ~non_ground)
        logger.info("DBSCAN found %d clusters among %d non-ground points",
                    labeling.cluster_count, int(non_ground.sum()))
        return labeling


def _renumber_by_first_member(labels):
    clustered = labels != NOISE
    if not np.any(clustered):
        return labels
    _, first = np.unique(labels[clustered], return_index=True)
    old_ids = labels[clustered][np.sort(first)]
    mapping = {old: new for new, old in enumerate(old_ids)}
    result = labels.copy()
    result[clustered] = [mapping[label] for label in labels[clustered]]
    return result


def cluster(cloud, non_ground, eps=0.5, min_pts=10):
    return ClusterExtractor(eps=eps, min_pts=min_pts).label(cloud, non_ground)
