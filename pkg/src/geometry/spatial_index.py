import logging

import numpy as np

logger = logging.getLogger(__name__)

# 优先使用scipy的KD树，导入失败时退回numpy暴力搜索
try:
    from scipy.spatial import cKDTree
    KDTREE_AVAILABLE = True
except ImportError:
    KDTREE_AVAILABLE = False
    logger.warning("scipy not available, falling back to brute force neighbour search")


class PointIndex:
    """三维点的近邻索引，支持最近邻和半径查询"""

    def __init__(self, points, backend="kdtree"):
        self.points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if backend not in ("kdtree", "brute_force"):
            raise ValueError(f"Unsupported index backend: {backend}")
        self.backend = "kdtree" if backend == "kdtree" and KDTREE_AVAILABLE else "brute_force"
        self.tree = cKDTree(self.points) if self.backend == "kdtree" else None

    def __len__(self):
        return len(self.points)

    def _distances(self, query):
        diff = query[:, None, :] - self.points[None, :, :]
        return np.sqrt(np.einsum("qnk,qnk->qn", diff, diff))

    def nearest(self, query):
        """每个查询点的最近点距离和下标"""
        query = np.asarray(query, dtype=np.float64).reshape(-1, 3)
        if self.backend == "kdtree":
            distances, indices = self.tree.query(query, k=1)
            return np.asarray(distances, dtype=np.float64), np.asarray(indices, dtype=np.int64)

        distances = self._distances(query)
        indices = np.argmin(distances, axis=1)
        return distances[np.arange(len(query)), indices], indices.astype(np.int64)

    def radius_counts(self, query, radius):
        """半径radius内（含边界）的点数，查询点自身也计入"""
        query = np.asarray(query, dtype=np.float64).reshape(-1, 3)
        if self.backend == "kdtree":
            return np.asarray(self.tree.query_ball_point(query, radius, return_length=True),
                              dtype=np.int64)
        return (self._distances(query) <= radius).sum(axis=1).astype(np.int64)

    def radius_neighbors(self, query, radius):
        """每个查询点半径内的点下标列表（升序）"""
        query = np.asarray(query, dtype=np.float64).reshape(-1, 3)
        if self.backend == "kdtree":
            lists = self.tree.query_ball_point(query, radius)
            return [np.sort(np.asarray(ids, dtype=np.int64)) for ids in lists]
        within = self._distances(query) <= radius
        return [np.flatnonzero(row) for row in within]

    def pairs(self, radius):
        """索引内距离不超过radius的点对 (i < j)"""
        if self.backend == "kdtree":
            pairs = self.tree.query_pairs(radius, output_type="ndarray")
            return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        within = np.triu(self._distances(self.points) <= radius, k=1)
        return np.argwhere(within).astype(np.int64)
