"""量化误差：原始点到其体素锚点的欧氏距离"""
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from src.quantization.voxelizer import CoordinateSystem, VoxelSpec, quantize, voxel_anchors, voxel_keys
from src.utils.errors import ConfigurationError, EmptyCloudError

logger = logging.getLogger(__name__)

PROFILE_COLUMNS = ["bin_lo_m", "bin_hi_m", "count", "mean_error_mm"]


@dataclass(frozen=True, eq=False)
class QuantizationError:
    per_point: np.ndarray
    mean: float

    @property
    def mean_mm(self):
        return self.mean * 1000.0


def quantization_error(cloud, spec):
    """对全部输入点（去重前）计算量化误差，单位米"""
    if cloud.is_empty:
        raise EmptyCloudError()
    anchors = voxel_anchors(voxel_keys(cloud.points, spec), spec)
    per_point = np.linalg.norm(cloud.points - anchors, axis=1)
    return QuantizationError(per_point, float(per_point.mean()))


def error_vs_distance_profile(cloud, spec, bin_width, distance="range"):
    """按点到原点的距离分箱统计平均量化误差，空箱省略

    distance="range" 用三维距离，"planar" 用水平距离 √(x²+y²)。
    """
    if not bin_width > 0:
        raise ConfigurationError(f"bin_width must be positive, got {bin_width}")
    errors = quantization_error(cloud, spec).per_point

    points = cloud.points
    if distance == "range":
        dist = np.linalg.norm(points, axis=1)
    elif distance == "planar":
        dist = np.hypot(points[:, 0], points[:, 1])
    else:
        raise ConfigurationError(f"Unsupported distance mode: {distance}")

    df = pd.DataFrame({"bin": np.floor(dist / bin_width).astype(np.int64), "error": errors})
    grouped = df.groupby("bin")["error"].agg(["count", "mean"]).reset_index()

    profile = pd.DataFrame({
        "bin_lo_m": grouped["bin"] * bin_width,
        "bin_hi_m": (grouped["bin"] + 1) * bin_width,
        "count": grouped["count"].astype(np.int64),
        "mean_error_mm": grouped["mean"] * 1000.0,
    })
    return profile[PROFILE_COLUMNS]


def voxel_size_sweep(cloud, system, sizes, angular_size_deg=1.0):
    """不同体素尺寸下的平均误差和保留点比例

    柱坐标下 sizes 指 δρ 和 δz，角度固定为 angular_size_deg。
    """
    system = CoordinateSystem(system)
    rows = []
    for size in sizes:
        if system is CoordinateSystem.CYLINDRICAL:
            spec = VoxelSpec.cylindrical(size, angular_size_deg, size)
        else:
            spec = VoxelSpec.cartesian(size)
        quantized = quantize(cloud, spec)
        rows.append({
            "voxel_size_m": float(size),
            "mean_error_mm": quantization_error(cloud, spec).mean_mm,
            "retained": quantized.retained_count,
            "retention_ratio": quantized.retained_count / quantized.input_count,
        })
        logger.info("Voxel size %.3f m: %.2f mm mean error, %d points kept",
                    size, rows[-1]["mean_error_mm"], quantized.retained_count)
    return pd.DataFrame(rows)
