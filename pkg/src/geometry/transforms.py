"""刚体变换：传感器与全局坐标之间的位姿，以及逐点变换Z"""
import logging
from dataclasses import dataclass, field

import numpy as np

from src.geometry.point_cloud import PointCloud
from src.utils.errors import ContractError, EmptyCloudError

logger = logging.getLogger(__name__)

ORTHONORMAL_TOL = 1e-9


def _check_rotations(rotations):
    """批量检查旋转矩阵正交且行列式为+1"""
    gram = np.einsum("nki,nkj->nij", rotations, rotations)
    deviation = np.abs(gram - np.eye(3)).max(initial=0.0)
    if deviation > ORTHONORMAL_TOL:
        raise ContractError(f"rotation is not orthonormal (max deviation {deviation:.3e})")
    if len(rotations) and np.abs(np.linalg.det(rotations) - 1.0).max() > ORTHONORMAL_TOL:
        raise ContractError("rotation determinant must be +1")


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """SE3变换 p -> R·p + t"""
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rotation = np.array(self.rotation, dtype=np.float64)
        translation = np.array(self.translation, dtype=np.float64).reshape(-1)
        if rotation.shape != (3, 3):
            raise ContractError(f"rotation must be 3x3, got {rotation.shape}")
        if translation.shape != (3,):
            raise ContractError(f"translation must have 3 elements, got {translation.shape}")
        if not (np.all(np.isfinite(rotation)) and np.all(np.isfinite(translation))):
            raise ContractError("transform entries must be finite")
        _check_rotations(rotation[None])
        rotation.setflags(write=False)
        translation.setflags(write=False)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, translation):
        return cls(np.eye(3), translation)

    @classmethod
    def from_matrix(cls, matrix):
        """从4x4齐次矩阵构造，加载时重新检查正交性"""
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.shape == (16,):
            matrix = matrix.reshape(4, 4)
        if matrix.shape != (4, 4):
            raise ContractError(f"pose matrix must be 4x4, got {matrix.shape}")
        if not np.allclose(matrix[3], [0.0, 0.0, 0.0, 1.0], atol=ORTHONORMAL_TOL):
            raise ContractError("last row of a pose matrix must be [0, 0, 0, 1]")
        return cls(matrix[:3, :3], matrix[:3, 3])

    def as_matrix(self):
        matrix = np.eye(4)
        matrix[:3, :3] = self.rotation
        matrix[:3, 3] = self.translation
        return matrix

    def inverse(self):
        rotation_t = self.rotation.T
        return RigidTransform(rotation_t, -rotation_t @ self.translation)

    def apply_points(self, points):
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def __matmul__(self, other):
        return compose(self, other)


def rotation_about_z(angle):
    """绕z轴旋转angle弧度"""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_angle(rotation):
    """旋转矩阵对应的旋转角（弧度）"""
    cos_angle = (np.trace(rotation) - 1.0) / 2.0
    return float(np.arccos(np.clip(cos_angle, -1.0, 1.0)))


def compose(a, b):
    """先应用b再应用a"""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def apply(transform, cloud):
    """对点云逐点应用 p -> R·p + t，原始编号不变"""
    if cloud.is_empty:
        raise EmptyCloudError()
    return cloud.with_points(transform.apply_points(cloud.points))


def sensor_to_global(frame, pose):
    """pose 为传感器到全局坐标的位姿"""
    return apply(pose, frame)


def global_to_sensor(cloud, pose):
    return apply(pose.inverse(), cloud)


@dataclass(frozen=True, eq=False)
class PerPointTransform:
    """每个点一个刚体变换（Z），默认单位变换"""
    rotations: np.ndarray
    translations: np.ndarray

    def __post_init__(self):
        rotations = np.array(self.rotations, dtype=np.float64).reshape(-1, 3, 3)
        translations = np.array(self.translations, dtype=np.float64).reshape(-1, 3)
        if len(rotations) != len(translations):
            raise ContractError(
                f"{len(rotations)} rotations but {len(translations)} translations"
            )
        if not (np.all(np.isfinite(rotations)) and np.all(np.isfinite(translations))):
            raise ContractError("transform entries must be finite")
        _check_rotations(rotations)
        rotations.setflags(write=False)
        translations.setflags(write=False)
        object.__setattr__(self, "rotations", rotations)
        object.__setattr__(self, "translations", translations)

    @classmethod
    def identity(cls, count):
        return cls(np.tile(np.eye(3), (count, 1, 1)), np.zeros((count, 3)))

    @classmethod
    def from_transforms(cls, transforms):
        transforms = list(transforms)
        if not transforms:
            return cls.identity(0)
        return cls(
            np.stack([t.rotation for t in transforms]),
            np.stack([t.translation for t in transforms]),
        )

    def __len__(self):
        return len(self.rotations)

    def __getitem__(self, i):
        return RigidTransform(self.rotations[i], self.translations[i])

    def subset(self, selector):
        return PerPointTransform(self.rotations[selector], self.translations[selector])

    def identity_mask(self):
        """与单位变换逐位相等的点"""
        same_rotation = np.all(self.rotations == np.eye(3), axis=(1, 2))
        return same_rotation & np.all(self.translations == 0.0, axis=1)

    def apply_points(self, points):
        points = np.asarray(points, dtype=np.float64)
        if len(points) != len(self):
            raise ContractError(f"{len(self)} transforms for {len(points)} points")
        return np.einsum("nij,nj->ni", self.rotations, points) + self.translations

    def apply(self, cloud):
        return cloud.with_points(self.apply_points(cloud.points))

    def conjugated(self, pose):
        """把全局坐标下的Z改写到pose所在的传感器坐标: P^-1 · Z · P

        单位变换保持逐位不变。
        """
        rotations = self.rotations.copy()
        translations = self.translations.copy()
        moving = ~self.identity_mask()
        if np.any(moving):
            rp, tp = pose.rotation, pose.translation
            r = self.rotations[moving]
            t = self.translations[moving]
            rotations[moving] = np.einsum("ji,njk,kl->nil", rp, r, rp)
            translations[moving] = (np.einsum("njk,k->nj", r, tp) + t - tp) @ rp
        return PerPointTransform(rotations, translations)

    def as_matrices(self):
        """逐点的3x4矩阵 [R|t]"""
        return np.concatenate([self.rotations, self.translations[:, :, None]], axis=2)
