"""点云、逐点变换、超像素图的文件读写"""
import json
import logging
import struct
from pathlib import Path

import cv2
import numpy as np
import pandas as pd

from src.geometry.point_cloud import PointCloud
from src.geometry.transforms import PerPointTransform
from src.matching.superpixels import UNLABELED, SuperpixelMap
from src.utils.errors import DataFormatError, EmptyCloudError

logger = logging.getLogger(__name__)

CLOUD_MAGIC = b"LDPC"
TRANSFORM_MAGIC = b"LDZT"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sIQ")
PGM_UNLABELED = np.iinfo(np.uint16).max


def _write_block(path, magic, rows):
    rows = np.ascontiguousarray(rows, dtype="<f8")
    with open(path, "wb") as f:
        f.write(HEADER.pack(magic, FORMAT_VERSION, len(rows)))
        f.write(rows.tobytes())


def _read_block(path, magic, width):
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise DataFormatError(f"{path}: file too short for a header")
    found, version, count = HEADER.unpack_from(data)
    if found != magic:
        raise DataFormatError(f"{path}: bad magic {found!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    expected = HEADER.size + count * width * 8
    if len(data) != expected:
        raise DataFormatError(f"{path}: expected {expected} bytes for {count} records, got {len(data)}")
    return np.frombuffer(data, dtype="<f8", offset=HEADER.size).reshape(count, width)


def write_cloud_binary(cloud, path):
    _write_block(path, CLOUD_MAGIC, cloud.points)
    return path


def read_cloud_binary(path, timestamp=0.0):
    if Path(path).stat().st_size == 0:
        raise EmptyCloudError()
    points = _read_block(path, CLOUD_MAGIC, 3)
    if len(points) == 0:
        raise EmptyCloudError()
    return PointCloud(points, timestamp)


def write_cloud_csv(cloud, path):
    pd.DataFrame(cloud.points, columns=["x", "y", "z"]).to_csv(path, index=False, float_format="%.17g")
    return path


def read_cloud_csv(path, timestamp=0.0):
    try:
        df = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        raise EmptyCloudError()
    missing = {"x", "y", "z"} - set(df.columns)
    if missing:
        raise DataFormatError(f"{path}: missing columns {sorted(missing)}")
    if df.empty:
        raise EmptyCloudError()
    try:
        points = df[["x", "y", "z"]].to_numpy(dtype=np.float64)
    except ValueError as e:
        raise DataFormatError(f"{path}: non-numeric coordinates ({e})")
    return PointCloud(points, timestamp)


def read_cloud(path, timestamp=0.0):
    """按扩展名选择读取方式"""
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        return read_cloud_csv(path, timestamp)
    elif suffix in (".bin", ".ldpc"):
        return read_cloud_binary(path, timestamp)
    else:
        raise DataFormatError(f"Unsupported cloud format: {suffix}")


def write_cloud(cloud, path):
    if Path(path).suffix.lower() == ".csv":
        return write_cloud_csv(cloud, path)
    return write_cloud_binary(cloud, path)


def write_transforms(z, path):
    """逐点 3x4 [R|t]，行优先"""
    _write_block(path, TRANSFORM_MAGIC, z.as_matrices().reshape(len(z), 12))
    return path


def read_transforms(path):
    rows = _read_block(path, TRANSFORM_MAGIC, 12).reshape(-1, 3, 4)
    return PerPointTransform(rows[:, :, :3], rows[:, :, 3])


def write_superpixels(sp_map, path):
    """.pgm 写为16位P5；其他扩展名写原始u32加JSON尺寸文件"""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        if sp_map.num_superpixels >= PGM_UNLABELED:
            raise DataFormatError("too many superpixels for a 16-bit PGM")
        labels = sp_map.labels.astype(np.uint16)
        labels[sp_map.labels == UNLABELED] = PGM_UNLABELED
        if not cv2.imwrite(str(path), labels):
            raise OSError(f"could not write {path}")
    else:
        sp_map.labels.astype("<u4").tofile(path)
        sidecar = path.with_suffix(path.suffix + ".json")
        sidecar.write_text(json.dumps({"width": sp_map.width, "height": sp_map.height}))
    return path


def read_superpixels(path):
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        labels = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
        if labels is None:
            raise DataFormatError(f"{path}: not a readable PGM image")
        labels = labels.astype(np.uint32)
        labels[labels == PGM_UNLABELED] = UNLABELED
        return SuperpixelMap(labels)

    sidecar = path.with_suffix(path.suffix + ".json")
    if not sidecar.exists():
        raise DataFormatError(f"{path}: missing dimension sidecar {sidecar.name}")
    dims = json.loads(sidecar.read_text())
    labels = np.fromfile(path, dtype="<u4")
    if labels.size != dims["width"] * dims["height"]:
        raise DataFormatError(f"{path}: {labels.size} labels for a {dims['width']}x{dims['height']} map")
    return SuperpixelMap(labels.reshape(dims["height"], dims["width"]))


def write_json(data, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, ensure_ascii=False, indent=2, sort_keys=True)
    return path
