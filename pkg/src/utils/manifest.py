"""场景清单（JSON）：帧路径、时间戳、位姿和相机标定"""
import json
import logging
from pathlib import Path
from typing import Annotated, List, Optional

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from src.geometry.camera import CameraModel
from src.geometry.sequence import Frame, FrameSequence
from src.geometry.transforms import RigidTransform
from src.utils.errors import ConfigurationError, DataFormatError
from src.utils.io_utils import read_cloud, read_superpixels, write_cloud, write_superpixels

logger = logging.getLogger(__name__)

Matrix4 = Annotated[List[float], Field(min_length=16, max_length=16)]
Matrix3 = Annotated[List[float], Field(min_length=9, max_length=9)]


class FrameEntry(BaseModel):
    cloud_path: str
    timestamp: float
    pose: Optional[Matrix4] = None


class CameraEntry(BaseModel):
    intrinsics: Matrix3
    extrinsics: Matrix4
    width: int = Field(ge=1)
    height: int = Field(ge=1)


class SceneManifest(BaseModel):
    frames: List[FrameEntry] = Field(min_length=1)
    keyframe_index: int = Field(ge=0)
    camera: Optional[CameraEntry] = None
    superpixels: Optional[str] = None


def parse_manifest(path):
    try:
        return SceneManifest.model_validate(json.loads(Path(path).read_text(encoding="utf-8")))
    except json.JSONDecodeError as e:
        raise DataFormatError(f"{path}: invalid JSON ({e})")
    except ValidationError as e:
        raise DataFormatError(f"{path}: invalid scene manifest\n{e}")


def load_scene(path):
    """读取清单及其引用的点云，返回FrameSequence（路径相对清单所在目录）"""
    path = Path(path)
    manifest = parse_manifest(path)
    base = path.parent

    if manifest.camera is None:
        raise ConfigurationError(f"{path}: missing camera calibration")
    camera = CameraModel(
        np.array(manifest.camera.intrinsics).reshape(3, 3),
        RigidTransform.from_matrix(manifest.camera.extrinsics),
        manifest.camera.width,
        manifest.camera.height,
    )

    frames = []
    for entry in manifest.frames:
        cloud = read_cloud(base / entry.cloud_path, timestamp=entry.timestamp)
        pose = RigidTransform.from_matrix(entry.pose) if entry.pose is not None else None
        frames.append(Frame(cloud, pose))

    superpixels = None
    if manifest.superpixels:
        superpixels = read_superpixels(base / manifest.superpixels)
        superpixels.check_matches(camera)

    logger.info("Loaded scene %s with %d frames", path, len(frames))
    return FrameSequence(tuple(frames), manifest.keyframe_index, camera, superpixels)


def write_scene(sequence, out_dir, manifest_name="manifest.json", cloud_format="bin"):
    """把序列写成清单格式：每帧一个点云文件（LDPC 或 CSV）"""
    if cloud_format not in ("bin", "csv"):
        raise ConfigurationError(f"Unsupported cloud format: {cloud_format}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    entries = []
    for i, frame in enumerate(sequence.frames):
        cloud_name = f"frame_{i:03d}.{cloud_format}"
        write_cloud(frame.cloud, out_dir / cloud_name)
        entries.append({
            "cloud_path": cloud_name,
            "timestamp": frame.cloud.timestamp,
            "pose": frame.pose.as_matrix().reshape(-1).tolist() if frame.pose is not None else None,
        })

    camera = sequence.camera
    manifest = {
        "frames": entries,
        "keyframe_index": sequence.keyframe_index,
        "camera": {
            "intrinsics": camera.intrinsics.reshape(-1).tolist(),
            "extrinsics": camera.extrinsics.as_matrix().reshape(-1).tolist(),
            "width": camera.image_width,
            "height": camera.image_height,
        },
    }
    if sequence.superpixels is not None:
        write_superpixels(sequence.superpixels, out_dir / "superpixels.pgm")
        manifest["superpixels"] = "superpixels.pgm"

    manifest_path = out_dir / manifest_name
    manifest_path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return manifest_path
