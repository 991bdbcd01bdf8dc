from dataclasses import dataclass

import numpy as np

# 透视除法的近平面
DEPTH_MIN = 1e-3


@dataclass(frozen=True, eq=False)
class Projection:
    """逐点投影结果；视野外的点 uv 为 NaN"""
    uv: np.ndarray
    depth: np.ndarray
    in_view: np.ndarray


def project_points(camera, points):
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    camera_points = camera.extrinsics.apply_points(points)
    depth = camera_points[:, 2]
    in_front = depth > DEPTH_MIN

    homogeneous = camera_points @ camera.intrinsics.T
    uv = np.full((len(points), 2), np.nan)
    uv[in_front] = homogeneous[in_front, :2] / depth[in_front, None]

    with np.errstate(invalid="ignore"):
        inside = (
            (uv[:, 0] >= 0) & (uv[:, 0] < camera.image_width)
            & (uv[:, 1] >= 0) & (uv[:, 1] < camera.image_height)
        )
    in_view = in_front & inside
    uv[~in_view] = np.nan
    return Projection(uv, depth, in_view)


def project(camera, cloud):
    """把关键帧LiDAR坐标系下的点投影到图像，不做遮挡处理"""
    return project_points(camera, cloud.points)
