from dataclasses import dataclass

import numpy as np

from src.geometry.transforms import RigidTransform
from src.utils.errors import ConfigurationError

# LiDAR坐标系 x前 y左 z上；相机坐标系 x右 y下 z前
LIDAR_TO_CAMERA_AXES = np.array([
    [0.0, -1.0, 0.0],
    [0.0, 0.0, -1.0],
    [1.0, 0.0, 0.0],
])


@dataclass(frozen=True, eq=False)
class CameraModel:
    """针孔相机：内参 + LiDAR到相机的外参"""
    intrinsics: np.ndarray
    extrinsics: RigidTransform
    image_width: int
    image_height: int

    def __post_init__(self):
        intrinsics = np.array(self.intrinsics, dtype=np.float64)
        if intrinsics.shape == (9,):
            intrinsics = intrinsics.reshape(3, 3)
        if intrinsics.shape != (3, 3):
            raise ConfigurationError(f"intrinsics must be 3x3, got {intrinsics.shape}")
        if not isinstance(self.extrinsics, RigidTransform):
            raise ConfigurationError("extrinsics must be a RigidTransform")
        width, height = int(self.image_width), int(self.image_height)
        if width < 1 or height < 1:
            raise ConfigurationError(f"image size must be positive, got {width}x{height}")
        if intrinsics[0, 0] <= 0 or intrinsics[1, 1] <= 0:
            raise ConfigurationError("focal lengths must be positive")
        if not (0 <= intrinsics[0, 2] < width and 0 <= intrinsics[1, 2] < height):
            raise ConfigurationError("principal point must lie inside the image")
        intrinsics.setflags(write=False)
        object.__setattr__(self, "intrinsics", intrinsics)
        object.__setattr__(self, "image_width", width)
        object.__setattr__(self, "image_height", height)

    @classmethod
    def pinhole(cls, fx, fy, cx, cy, width, height, extrinsics=None):
        intrinsics = np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])
        return cls(intrinsics, extrinsics or RigidTransform.identity(), width, height)


def forward_camera_extrinsics(offset=(0.0, 0.0, 0.0)):
    """朝LiDAR x轴方向看的相机外参，offset为相机在LiDAR坐标系中的位置"""
    rotation = LIDAR_TO_CAMERA_AXES
    return RigidTransform(rotation, -rotation @ np.asarray(offset, dtype=np.float64))
