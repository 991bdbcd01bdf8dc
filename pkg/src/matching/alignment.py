import numpy as np

from src.geometry.sequence import FrameSequence
from src.utils.errors import ContractError


def nearest_alignment(frames, image_timestamps):
    """对比基线：每个LiDAR帧配时间最近的图像，距离相同取较早的图像

    frames 可以是 FrameSequence 或时间戳序列。
    """
    lidar_times = frames.timestamps if isinstance(frames, FrameSequence) else np.asarray(frames, dtype=np.float64)
    image_times = np.asarray(image_timestamps, dtype=np.float64).reshape(-1)
    if lidar_times.size == 0 or image_times.size == 0:
        raise ContractError("timestamp lists must be non-empty")
    if np.any(np.diff(image_times) < 0) or np.any(np.diff(lidar_times) < 0):
        raise ContractError("timestamp lists must be sorted")

    right = np.clip(np.searchsorted(image_times, lidar_times), 0, len(image_times) - 1)
    left = np.clip(right - 1, 0, len(image_times) - 1)
    left_gap = np.abs(lidar_times - image_times[left])
    right_gap = np.abs(image_times[right] - lidar_times)
    return np.where(left_gap <= right_gap, left, right).astype(np.int64)
