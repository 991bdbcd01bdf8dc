"""关键帧上的点-像素 / 点-超像素对应关系"""
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from src.geometry.transforms import PerPointTransform
from src.matching.projection import project_points
from src.matching.superpixels import UNLABELED
from src.utils.errors import ContractError

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["point_index", "u", "v", "superpixel_id", "point_frame", "image_frame"]
NO_SUPERPIXEL = -1


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """匹配条目按 point_index 升序；superpixel_id 为 -1 表示没有超像素"""
    point_index: np.ndarray
    u: np.ndarray
    v: np.ndarray
    superpixel_id: np.ndarray
    frame_of_points: float
    frame_of_image: float
    image_width: int
    image_height: int

    def __post_init__(self):
        point_index = np.asarray(self.point_index, dtype=np.int64).reshape(-1)
        u = np.asarray(self.u, dtype=np.float64).reshape(-1)
        v = np.asarray(self.v, dtype=np.float64).reshape(-1)
        superpixel_id = np.asarray(self.superpixel_id, dtype=np.int64).reshape(-1)
        if not (len(point_index) == len(u) == len(v) == len(superpixel_id)):
            raise ContractError("correspondence columns must have equal length")
        if len(np.unique(point_index)) != len(point_index):
            raise ContractError("point indices must be unique within a correspondence set")
        if np.any((u < 0) | (u >= self.image_width) | (v < 0) | (v >= self.image_height)):
            raise ContractError("correspondence pixel outside the image bounds")
        for name, value in (("point_index", point_index), ("u", u), ("v", v),
                            ("superpixel_id", superpixel_id)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    def __len__(self):
        return len(self.point_index)

    def to_frame(self):
        return pd.DataFrame({
            "point_index": self.point_index,
            "u": self.u,
            "v": self.v,
            "superpixel_id": pd.array(
                np.where(self.superpixel_id == NO_SUPERPIXEL, None, self.superpixel_id), dtype="Int64"
            ),
            "point_frame": self.frame_of_points,
            "image_frame": self.frame_of_image,
        })[CSV_COLUMNS]

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        return path

    @classmethod
    def from_frame(cls, df, image_width, image_height):
        superpixel = df["superpixel_id"].astype("Int64").fillna(NO_SUPERPIXEL).to_numpy(dtype=np.int64)
        frame_of_points = float(df["point_frame"].iloc[0]) if len(df) else 0.0
        frame_of_image = float(df["image_frame"].iloc[0]) if len(df) else 0.0
        return cls(df["point_index"].to_numpy(), df["u"].to_numpy(), df["v"].to_numpy(), superpixel,
                   frame_of_points, frame_of_image, image_width, image_height)


def _build(camera, cloud, points, superpixels, image_timestamp):
    if superpixels is not None:
        superpixels.check_matches(camera)

    projection = project_points(camera, points)
    # 按原始编号输出，保证确定性
    rows = np.flatnonzero(projection.in_view)
    rows = rows[np.argsort(cloud.source_index[rows], kind="stable")]
    uv = projection.uv[rows]

    superpixel_id = np.full(len(rows), NO_SUPERPIXEL, dtype=np.int64)
    if superpixels is not None:
        labels = superpixels.lookup(uv[:, 0], uv[:, 1])
        labelled = labels != UNLABELED
        rows, uv, superpixel_id = rows[labelled], uv[labelled], labels[labelled].astype(np.int64)

    image_frame = cloud.timestamp if image_timestamp is None else float(image_timestamp)
    return CorrespondenceSet(
        cloud.source_index[rows], uv[:, 0], uv[:, 1], superpixel_id,
        cloud.timestamp, image_frame, camera.image_width, camera.image_height,
    )


def match_synced(camera, cloud_t, superpixels=None, image_timestamp=None):
    """同步帧：直接投影 x = T(p)"""
    corr = _build(camera, cloud_t, cloud_t.points, superpixels, image_timestamp)
    logger.debug("Synced matching kept %d of %d points", len(corr), len(cloud_t))
    return corr


def match_unsynced(camera, cloud_s, z, superpixels=None, image_timestamp=None):
    """非同步帧：先按逐点变换 Z 移动再投影 x = T(Z(p))

    cloud_s 需已做自车运动补偿，位于关键帧的LiDAR坐标系。
    """
    if not isinstance(z, PerPointTransform):
        z = PerPointTransform.from_transforms(z)
    if len(z) != len(cloud_s):
        raise ContractError(f"{len(z)} transforms supplied for {len(cloud_s)} points")
    moved = z.apply_points(cloud_s.points)
    corr = _build(camera, cloud_s, moved, superpixels, image_timestamp)
    logger.debug("Unsynced matching kept %d of %d points", len(corr), len(cloud_s))
    return corr


def sample_pixel_features(feature_map, corr):
    """按 floor(u), floor(v) 从 H×W×D 特征图取每个匹配的像素特征"""
    feature_map = np.asarray(feature_map, dtype=np.float64)
    if feature_map.shape[:2] != (corr.image_height, corr.image_width):
        raise ContractError(
            f"feature map {feature_map.shape[:2]} does not match image "
            f"{(corr.image_height, corr.image_width)}"
        )
    rows = np.floor(corr.v).astype(np.int64)
    cols = np.floor(corr.u).astype(np.int64)
    return feature_map[rows, cols]
