"""合成场景：地面 + 静态/运动刚体，带真值运动"""
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from src.geometry.camera import CameraModel, forward_camera_extrinsics
from src.geometry.point_cloud import PointCloud
from src.geometry.sequence import Frame, FrameSequence
from src.geometry.transforms import RigidTransform, rotation_about_z
from src.matching.superpixels import SuperpixelMap
from src.utils.errors import DataFormatError

logger = logging.getLogger(__name__)

GROUND, STATIC, DYNAMIC = 0, 1, 2


class GroundSpec(BaseModel):
    extent: float = Field(40.0, gt=0)
    noise_sigma: float = Field(0.0, ge=0)
    points_per_frame: int = Field(4000, ge=0)


class ObjectSpec(BaseModel):
    """box 的 size 为 (长, 宽, 高)；cylinder 取 size[0] 为直径、size[2] 为高"""
    shape: Literal["box", "cylinder"] = "box"
    size: Tuple[float, float, float] = (4.0, 2.0, 1.5)
    position: Tuple[float, float] = (0.0, 0.0)
    yaw: float = 0.0
    base_height: float = Field(0.5, ge=0)
    density: float = Field(20.0, gt=0)
    velocity: Tuple[float, float] = (0.0, 0.0)
    yaw_rate: float = 0.0

    @model_validator(mode="after")
    def _positive_size(self):
        if min(self.size) <= 0:
            raise ValueError("object size must be positive")
        return self

    @property
    def is_dynamic(self):
        return any(v != 0.0 for v in self.velocity) or self.yaw_rate != 0.0


class SensorSpec(BaseModel):
    lidar_height: float = 1.8
    fx: float = Field(500.0, gt=0)
    fy: float = Field(500.0, gt=0)
    cx: float = 320.0
    cy: float = 240.0
    width: int = Field(640, ge=1)
    height: int = Field(480, ge=1)
    camera_offset: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    superpixel_cell: int = Field(0, ge=0)


class SceneScript(BaseModel):
    ground: GroundSpec = GroundSpec()
    static_objects: List[ObjectSpec] = []
    moving_objects: List[ObjectSpec] = []
    frame_count: int = Field(11, ge=1)
    period: float = Field(0.05, gt=0)
    keyframe_index: Optional[int] = None
    ego_start: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    ego_velocity: Tuple[float, float] = (0.0, 0.0)
    sensor: SensorSpec = SensorSpec()
    seed: int = 0

    @model_validator(mode="after")
    def _keyframe_in_range(self):
        if self.keyframe_index is not None and not 0 <= self.keyframe_index < self.frame_count:
            raise ValueError(f"keyframe_index {self.keyframe_index} outside {self.frame_count} frames")
        return self

    @property
    def keyframe(self):
        return self.frame_count // 2 if self.keyframe_index is None else self.keyframe_index


def load_script(path):
    try:
        return SceneScript.model_validate(json.loads(Path(path).read_text(encoding="utf-8")))
    except json.JSONDecodeError as e:
        raise DataFormatError(f"{path}: invalid JSON ({e})")
    except ValidationError as e:
        raise DataFormatError(f"{path}: invalid scene script\n{e}")


def _sample_rectangle(rng, corner, edge_a, edge_b, density):
    area = np.linalg.norm(edge_a) * np.linalg.norm(edge_b)
    count = max(1, int(round(area * density)))
    a, b = rng.random(count), rng.random(count)
    return corner + a[:, None] * edge_a + b[:, None] * edge_b


def sample_surface(spec, rng):
    """物体坐标系下的表面点（侧面 + 顶面），每个物体只采样一次"""
    length, width, height = spec.size
    z0, z1 = spec.base_height, spec.base_height + height
    if spec.shape == "box":
        hl, hw = length / 2, width / 2
        corners = [(-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw)]
        faces = []
        for (xa, ya), (xb, yb) in zip(corners, corners[1:] + corners[:1]):
            faces.append(_sample_rectangle(
                rng, np.array([xa, ya, z0]), np.array([xb - xa, yb - ya, 0.0]),
                np.array([0.0, 0.0, height]), spec.density,
            ))
        faces.append(_sample_rectangle(
            rng, np.array([-hl, -hw, z1]), np.array([length, 0.0, 0.0]),
            np.array([0.0, width, 0.0]), spec.density,
        ))
        return np.concatenate(faces)

    radius = length / 2
    side_count = max(1, int(round(2 * math.pi * radius * height * spec.density)))
    theta = rng.random(side_count) * 2 * math.pi
    side = np.column_stack([radius * np.cos(theta), radius * np.sin(theta),
                            z0 + rng.random(side_count) * height])
    top_count = max(1, int(round(math.pi * radius ** 2 * spec.density)))
    r = radius * np.sqrt(rng.random(top_count))
    phi = rng.random(top_count) * 2 * math.pi
    top = np.column_stack([r * np.cos(phi), r * np.sin(phi), np.full(top_count, z1)])
    return np.concatenate([side, top])


def object_pose(spec, t):
    """t 时刻物体坐标系到世界坐标系的变换；匀速或匀速转弯"""
    v0 = np.asarray(spec.velocity, dtype=np.float64)
    omega = spec.yaw_rate
    if omega == 0.0:
        offset = v0 * t
    else:
        s, c = math.sin(omega * t), math.cos(omega * t)
        offset = np.array([[s, c - 1.0], [1.0 - c, s]]) @ v0 / omega
    center = np.asarray(spec.position, dtype=np.float64) + offset
    return RigidTransform(rotation_about_z(spec.yaw + omega * t), [center[0], center[1], 0.0])


def ego_pose(script, t):
    x, y, yaw = script.ego_start
    vx, vy = script.ego_velocity
    return RigidTransform(rotation_about_z(yaw), [x + vx * t, y + vy * t, script.sensor.lidar_height])


def make_camera(sensor):
    return CameraModel.pinhole(sensor.fx, sensor.fy, sensor.cx, sensor.cy, sensor.width, sensor.height,
                               forward_camera_extrinsics(sensor.camera_offset))


def grid_superpixels(width, height, cell):
    """cell×cell 像素的规则网格超像素"""
    cols = -(-width // cell)
    rows, columns = np.mgrid[0:height, 0:width]
    return SuperpixelMap((rows // cell) * cols + columns // cell)


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    """逐帧的真值：终点位于关键帧LiDAR坐标系；labels 0 地面 1 静态 2 动态；地面 object_id 为 -1"""
    sequence: FrameSequence
    gt_endpoints: list
    labels: list
    object_ids: list
    script: SceneScript

    def compensated_points(self, i):
        """第 i 帧的点经自车运动补偿后在关键帧LiDAR坐标系下的位置"""
        frame = self.sequence.frames[i]
        keyframe_pose = self.sequence.keyframe.pose
        return keyframe_pose.inverse().apply_points(frame.pose.apply_points(frame.cloud.points))

    def gt_flow(self, i):
        return self.gt_endpoints[i] - self.compensated_points(i)

    def stacked(self, window=None):
        """与 aggregate(sequence.window(window)) 相同顺序拼接的真值"""
        windowed = self.sequence.window(window)
        start = self.sequence.keyframe_index - windowed.keyframe_index
        indices = range(start, start + len(windowed))
        return (
            np.concatenate([self.compensated_points(i) for i in indices]),
            np.concatenate([self.gt_endpoints[i] for i in indices]),
            np.concatenate([self.labels[i] for i in indices]),
        )


def generate(script):
    """按脚本生成帧序列和真值，给定种子时结果逐位一致"""
    rng = np.random.default_rng(script.seed)
    objects = [(spec, STATIC) for spec in script.static_objects] + \
              [(spec, DYNAMIC) for spec in script.moving_objects]
    surfaces = [sample_surface(spec, rng) for spec, _ in objects]

    times = np.arange(script.frame_count) * script.period
    keyframe = script.keyframe
    keyframe_time = times[keyframe]
    keyframe_to_sensor = ego_pose(script, keyframe_time).inverse()
    ground = script.ground

    frames, endpoints, labels, object_ids = [], [], [], []
    for t in times:
        pose = ego_pose(script, t)
        world, world_end, frame_labels, frame_ids = [], [], [], []

        count = ground.points_per_frame
        if count:
            xy = rng.uniform(-ground.extent, ground.extent, size=(count, 2)) + pose.translation[:2]
            z = rng.normal(0.0, ground.noise_sigma, count) if ground.noise_sigma > 0 else np.zeros(count)
            ground_points = np.column_stack([xy, z])
            world.append(ground_points)
            world_end.append(ground_points)
            frame_labels.append(np.full(count, GROUND))
            frame_ids.append(np.full(count, -1))

        for object_id, ((spec, label), surface) in enumerate(zip(objects, surfaces)):
            world.append(object_pose(spec, t).apply_points(surface))
            world_end.append(object_pose(spec, keyframe_time).apply_points(surface))
            frame_labels.append(np.full(len(surface), label))
            frame_ids.append(np.full(len(surface), object_id))

        world = np.concatenate(world) if world else np.empty((0, 3))
        frames.append(Frame(PointCloud(pose.inverse().apply_points(world), float(t)), pose))
        endpoints.append(keyframe_to_sensor.apply_points(np.concatenate(world_end)) if len(world)
                         else np.empty((0, 3)))
        labels.append(np.concatenate(frame_labels).astype(np.int64) if frame_labels
                      else np.empty(0, dtype=np.int64))
        object_ids.append(np.concatenate(frame_ids).astype(np.int64) if frame_ids
                          else np.empty(0, dtype=np.int64))

    sensor = script.sensor
    superpixels = grid_superpixels(sensor.width, sensor.height, sensor.superpixel_cell) \
        if sensor.superpixel_cell else None
    sequence = FrameSequence(tuple(frames), keyframe, make_camera(sensor), superpixels)
    logger.info("Generated %d frames with %d static and %d moving objects",
                len(frames), len(script.static_objects), len(script.moving_objects))
    return SyntheticScene(sequence, endpoints, labels, object_ids, script)


def write_ground_truth(scene, path):
    """真值按帧顺序拼接写入 npz"""
    frame_index = np.concatenate([np.full(len(e), i) for i, e in enumerate(scene.gt_endpoints)])
    np.savez(
        path,
        endpoints=np.concatenate(scene.gt_endpoints),
        labels=np.concatenate(scene.labels),
        object_ids=np.concatenate(scene.object_ids),
        frame_index=frame_index.astype(np.int64),
        keyframe_index=np.int64(scene.sequence.keyframe_index),
    )
    return path


def read_ground_truth(path):
    with np.load(path) as data:
        return {key: data[key] for key in data.files}
