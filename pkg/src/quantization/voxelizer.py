"""笛卡尔/柱坐标体素化，以及稀疏卷积输入所需的去重"""
import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from src.geometry.point_cloud import make_point3
from src.utils.errors import ConfigurationError, EmptyCloudError, QuantizationOverflowError

logger = logging.getLogger(__name__)

# 与稀疏卷积库的int32坐标一致
MAX_KEY = np.iinfo(np.int32).max


class CoordinateSystem(str, Enum):
    CARTESIAN = "cart"
    CYLINDRICAL = "cyl"


@dataclass(frozen=True)
class VoxelSpec:
    """坐标系 + 三个轴的体素尺寸

    笛卡尔: (δx, δy, δz) 米；柱坐标: (δρ 米, δφ 弧度, δz 米)。
    """
    system: CoordinateSystem
    sizes: tuple

    def __post_init__(self):
        system = CoordinateSystem(self.system)
        sizes = tuple(float(s) for s in self.sizes)
        if len(sizes) != 3:
            raise ConfigurationError(f"voxel spec needs 3 sizes, got {len(sizes)}")
        if not all(math.isfinite(s) and s > 0 for s in sizes):
            raise ConfigurationError(f"voxel sizes must be strictly positive, got {sizes}")
        if system is CoordinateSystem.CYLINDRICAL and sizes[1] >= 2 * math.pi:
            raise ConfigurationError("angular voxel size must be below 2π")
        object.__setattr__(self, "system", system)
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def cartesian(cls, dx, dy=None, dz=None):
        return cls(CoordinateSystem.CARTESIAN, (dx, dx if dy is None else dy, dx if dz is None else dz))

    @classmethod
    def cylindrical(cls, drho, dphi_deg, dz):
        """角度按度给出，内部存弧度"""
        return cls(CoordinateSystem.CYLINDRICAL, (drho, math.radians(dphi_deg), dz))

    @classmethod
    def parse(cls, coord, voxel):
        """解析命令行参数 --coord {cart|cyl} --voxel a,b,c"""
        try:
            values = [float(v) for v in str(voxel).split(",")]
        except ValueError:
            raise ConfigurationError(f"invalid --voxel value: {voxel!r}")
        if len(values) != 3:
            raise ConfigurationError(f"--voxel needs three comma-separated values, got {voxel!r}")
        if coord == CoordinateSystem.CARTESIAN.value:
            return cls.cartesian(*values)
        elif coord == CoordinateSystem.CYLINDRICAL.value:
            return cls.cylindrical(*values)
        raise ConfigurationError(f"Unsupported coordinate system: {coord}")

    @property
    def is_cylindrical(self):
        return self.system is CoordinateSystem.CYLINDRICAL

    def describe(self):
        if self.is_cylindrical:
            drho, dphi, dz = self.sizes
            return f"cyl(rho={drho}m, phi={math.degrees(dphi):g}deg, z={dz}m)"
        return "cart({}m, {}m, {}m)".format(*self.sizes)


def cartesian_to_cylindrical(points):
    """(N,3) 笛卡尔 -> (ρ, φ, z)，φ ∈ [-π, π)，ρ=0 时 φ=0"""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    rho = np.hypot(points[:, 0], points[:, 1])
    phi = np.arctan2(points[:, 1], points[:, 0])
    phi = np.where(phi >= np.pi, phi - 2 * np.pi, phi)
    phi = np.where(rho == 0.0, 0.0, phi)
    return np.column_stack([rho, phi, points[:, 2]])


def cylindrical_to_cartesian(coords):
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 3)
    rho, phi, z = coords[:, 0], coords[:, 1], coords[:, 2]
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def to_cylindrical(point):
    """单点版本，返回 (ρ, φ, z)"""
    point = make_point3(*point)
    rho, phi, z = cartesian_to_cylindrical(np.array([point]))[0]
    return float(rho), float(phi), float(z)


def voxel_keys(points, spec):
    """每个点所在体素的整数键 floor(坐标 / 尺寸)"""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    coords = cartesian_to_cylindrical(points) if spec.is_cylindrical else points
    scaled = np.floor(coords / np.asarray(spec.sizes))
    if scaled.size and np.abs(scaled).max() > MAX_KEY:
        raise QuantizationOverflowError(
            f"voxel key magnitude {np.abs(scaled).max():.3g} exceeds {MAX_KEY}; input looks corrupt"
        )
    return scaled.astype(np.int64)


def voxel_anchors(keys, spec):
    """体素角点（量化锚点）的笛卡尔坐标"""
    corners = np.asarray(keys, dtype=np.float64) * np.asarray(spec.sizes)
    return cylindrical_to_cartesian(corners) if spec.is_cylindrical else corners


@dataclass(frozen=True, eq=False)
class QuantizedCloud:
    """去重后的体素化结果，每个体素保留一个代表点"""
    voxel_keys: np.ndarray
    representative_index: np.ndarray
    quantized_positions: np.ndarray
    dropped_count: int
    inverse_index: np.ndarray

    @property
    def retained_count(self):
        return len(self.voxel_keys)

    @property
    def input_count(self):
        return self.retained_count + self.dropped_count

    @property
    def drop_rate(self):
        return self.dropped_count / self.input_count


def quantize(cloud, spec):
    """体素化并去重：每个体素保留 source_index 最小的点"""
    if cloud.is_empty:
        raise EmptyCloudError()

    keys = voxel_keys(cloud.points, spec)
    # 先按原始编号排序，np.unique 的首次出现即为编号最小的点
    order = np.argsort(cloud.source_index, kind="stable")
    _, first, inverse = np.unique(keys[order], axis=0, return_index=True, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)

    # 体素按代表点的原始编号排列
    cell_order = np.argsort(first, kind="stable")
    rank = np.empty_like(cell_order)
    rank[cell_order] = np.arange(len(cell_order))

    representatives = order[first[cell_order]]
    retained_keys = keys[representatives]
    inverse_index = np.empty(len(cloud), dtype=np.int64)
    inverse_index[order] = rank[inverse]

    result = QuantizedCloud(
        voxel_keys=retained_keys,
        representative_index=cloud.source_index[representatives].copy(),
        quantized_positions=voxel_anchors(retained_keys, spec),
        dropped_count=len(cloud) - len(representatives),
        inverse_index=inverse_index,
    )
    logger.debug("Quantized %d points into %d voxels with %s", len(cloud), result.retained_count,
                 spec.describe())
    return result


def retained_cloud(cloud, quantized):
    """去重后保留下来的点（N' 个），顺序与 voxel_keys 一致"""
    order = np.argsort(cloud.source_index, kind="stable")
    rows = order[np.searchsorted(cloud.source_index[order], quantized.representative_index)]
    return cloud.subset(rows)
