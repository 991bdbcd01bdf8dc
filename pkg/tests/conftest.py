import matplotlib

matplotlib.use("Agg")

import numpy as np
import pytest

from src.geometry.camera import CameraModel, forward_camera_extrinsics
from src.geometry.point_cloud import PointCloud
from src.synthetic.scene import GroundSpec, ObjectSpec, SceneScript, SensorSpec, generate


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def uniform_cloud():
    """[0, 50 m]³ 内均匀分布的 10^6 个点"""
    points = np.random.default_rng(2024).uniform(0.0, 50.0, size=(1_000_000, 3))
    return PointCloud(points)


@pytest.fixture
def camera():
    return CameraModel.pinhole(500.0, 500.0, 320.0, 240.0, 640, 480, forward_camera_extrinsics())


def moving_object_script(speed=2.0, seed=0, superpixel_cell=0):
    """一个运动刚体 + 两个静态物体，11帧 20Hz，无噪声"""
    return SceneScript(
        ground=GroundSpec(extent=30.0, noise_sigma=0.0, points_per_frame=1500),
        static_objects=[
            ObjectSpec(shape="box", size=(2.0, 2.0, 1.5), position=(12.0, 8.0), density=15.0),
            ObjectSpec(shape="cylinder", size=(1.0, 1.0, 2.0), position=(28.0, -7.0), density=15.0),
        ],
        moving_objects=[
            ObjectSpec(shape="box", size=(4.0, 2.0, 1.5), position=(20.0, 0.0), density=15.0,
                       velocity=(speed, 0.0)),
        ],
        frame_count=11,
        period=0.05,
        ego_velocity=(1.0, 0.0),
        sensor=SensorSpec(superpixel_cell=superpixel_cell),
        seed=seed,
    )


@pytest.fixture(scope="session")
def moving_scene():
    return generate(moving_object_script())
