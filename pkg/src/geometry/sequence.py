from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from src.geometry.camera import CameraModel
from src.geometry.point_cloud import PointCloud
from src.geometry.transforms import RigidTransform
from src.utils.errors import ConfigurationError, ContractError


class Frame(NamedTuple):
    """一帧点云及其传感器到全局的位姿"""
    cloud: PointCloud
    pose: Optional[RigidTransform]


@dataclass(frozen=True, eq=False)
class FrameSequence:
    """以关键帧为中心的连续帧序列"""
    frames: tuple
    keyframe_index: int
    camera: CameraModel
    superpixels: object = None

    def __post_init__(self):
        frames = tuple(Frame(*frame) for frame in self.frames)
        if not frames:
            raise ContractError("frame sequence is empty")
        if not 0 <= self.keyframe_index < len(frames):
            raise ConfigurationError(
                f"keyframe_index {self.keyframe_index} out of range for {len(frames)} frames"
            )
        timestamps = np.array([f.cloud.timestamp for f in frames])
        if np.any(np.diff(timestamps) <= 0):
            raise ContractError("frames must be strictly ordered in time")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "keyframe_index", int(self.keyframe_index))

    def __len__(self):
        return len(self.frames)

    @property
    def timestamps(self):
        return np.array([f.cloud.timestamp for f in self.frames])

    @property
    def keyframe(self):
        return self.frames[self.keyframe_index]

    @property
    def keyframe_timestamp(self):
        return self.keyframe.cloud.timestamp

    @property
    def interframe_indices(self):
        return [i for i in range(len(self.frames)) if i != self.keyframe_index]

    def window(self, size):
        """取关键帧前后各 size//2 帧，返回新的序列"""
        if size is None:
            return self
        if size < 1:
            raise ConfigurationError(f"window must be >= 1, got {size}")
        half = size // 2
        start = max(0, self.keyframe_index - half)
        stop = min(len(self.frames), self.keyframe_index + half + 1)
        return FrameSequence(
            self.frames[start:stop], self.keyframe_index - start, self.camera, self.superpixels
        )
