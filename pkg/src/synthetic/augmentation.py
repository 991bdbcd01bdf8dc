"""点云增强：绕z轴随机旋转、x/y随机翻转、随机长方体丢弃"""
import logging

import numpy as np
from scipy.spatial.transform import Rotation

from src.utils.errors import ConfigurationError, EmptyCloudError

logger = logging.getLogger(__name__)


class PointCloudAugmenter:
    """依次执行 旋转 → 翻转 → 长方体丢弃，给定种子时结果确定

    长方体在旋转翻转后的坐标中抽取，中心在包围盒内均匀分布。
    """

    def __init__(self, rotate=True, flip=True, drop_cuboid=True, flip_probability=0.5,
                 cuboid_side=(2.0, 10.0)):
        if not 0.0 <= flip_probability <= 1.0:
            raise ConfigurationError(f"flip_probability must be in [0, 1], got {flip_probability}")
        low, high = cuboid_side
        if not 0 < low <= high:
            raise ConfigurationError(f"invalid cuboid side range {cuboid_side}")
        self.rotate = rotate
        self.flip = flip
        self.drop_cuboid = drop_cuboid
        self.flip_probability = flip_probability
        self.cuboid_side = (float(low), float(high))

    def rotate_and_flip(self, points, rng):
        angle = rng.uniform(0.0, 2 * np.pi) if self.rotate else 0.0
        flips = rng.random(2) < self.flip_probability if self.flip else np.zeros(2, dtype=bool)
        points = Rotation.from_euler("z", angle).apply(points)
        signs = np.where(np.append(flips, False), -1.0, 1.0)
        return points * signs

    def cuboid_mask(self, points, rng):
        """落在随机长方体内（含边界）的点"""
        lower, upper = points.min(axis=0), points.max(axis=0)
        center = rng.uniform(lower, upper)
        half = rng.uniform(*self.cuboid_side, size=3) / 2
        return np.all((points >= center - half) & (points <= center + half), axis=1)

    def augment(self, cloud, seed=0):
        if cloud.is_empty:
            raise EmptyCloudError()
        rng = np.random.default_rng(seed)
        result = cloud.with_points(self.rotate_and_flip(cloud.points, rng))
        if self.drop_cuboid:
            inside = self.cuboid_mask(result.points, rng)
            logger.debug("Cuboid dropping removed %d of %d points", int(inside.sum()), len(result))
            result = result.subset(~inside)
        return result


def augment(cloud, seed=0, rotate=True, flip=True, drop_cuboid=True):
    return PointCloudAugmenter(rotate=rotate, flip=flip, drop_cuboid=drop_cuboid).augment(cloud, seed)
