from dataclasses import dataclass

import numpy as np

from src.utils.errors import ConfigurationError, ContractError

UNLABELED = np.iinfo(np.uint32).max


@dataclass(frozen=True, eq=False)
class SuperpixelMap:
    """超像素标签图，H×W，UNLABELED 表示未标注像素"""
    labels: np.ndarray

    def __post_init__(self):
        labels = np.array(self.labels)
        if labels.ndim != 2 or labels.size == 0:
            raise ContractError(f"superpixel labels must be a non-empty 2D grid, got {labels.shape}")
        if np.issubdtype(labels.dtype, np.signedinteger) and np.any(labels < 0):
            raise ContractError("superpixel ids must be non-negative")
        labels = labels.astype(np.uint32)
        ids = np.unique(labels[labels != UNLABELED])
        # id 必须是 0..K-1 的连续区间
        if len(ids) and (ids[0] != 0 or ids[-1] != len(ids) - 1):
            raise ContractError("superpixel ids must form the contiguous range 0..K-1")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "num_superpixels", int(len(ids)))

    @classmethod
    def uniform(cls, width, height, label=0):
        return cls(np.full((height, width), label, dtype=np.uint32))

    @property
    def height(self):
        return self.labels.shape[0]

    @property
    def width(self):
        return self.labels.shape[1]

    def check_matches(self, camera):
        if (self.height, self.width) != (camera.image_height, camera.image_width):
            raise ConfigurationError(
                f"superpixel map is {self.width}x{self.height} but the camera image is "
                f"{camera.image_width}x{camera.image_height}"
            )

    def lookup(self, u, v):
        """按 floor(u), floor(v) 取标签"""
        cols = np.floor(np.asarray(u)).astype(np.int64)
        rows = np.floor(np.asarray(v)).astype(np.int64)
        return self.labels[rows, cols]
