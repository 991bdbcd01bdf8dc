"""图像到LiDAR蒸馏的对比损失及其解析梯度

S[d, k] = <f_d, g_k> / τ，对每个像素侧特征 g_k 在点侧 f_d 上做 softmax，
L = -(1/M) Σ_k log softmax(S[:, k])[k]。
"""
import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
import pandas as pd
from scipy.special import logsumexp, softmax

from src.matching.correspondence import NO_SUPERPIXEL
from src.utils.errors import ConfigurationError, ContractError, DataFormatError, DegenerateFeatureError

logger = logging.getLogger(__name__)

DEFAULT_TAU = 0.07
ZERO_NORM = 1e-12


class FeatureRole(str, Enum):
    POINT = "f"
    PIXEL = "g"


@dataclass(frozen=True, eq=False)
class FeatureSet:
    vectors: np.ndarray
    role: FeatureRole = FeatureRole.POINT

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] < 1 or vectors.shape[1] < 1:
            raise ContractError(f"features must be a non-empty M x D matrix, got {vectors.shape}")
        if not np.all(np.isfinite(vectors)):
            raise ContractError("feature entries must be finite")
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "role", FeatureRole(self.role))

    def __len__(self):
        return len(self.vectors)

    @property
    def dim(self):
        return self.vectors.shape[1]


def _matrix(features):
    return features.vectors if isinstance(features, FeatureSet) else np.asarray(features, dtype=np.float64)


def l2_normalize(features):
    vectors = _matrix(features)
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms < ZERO_NORM):
        raise DegenerateFeatureError(f"{int((norms < ZERO_NORM).sum())} feature row(s) have zero norm")
    role = features.role if isinstance(features, FeatureSet) else FeatureRole.POINT
    return FeatureSet(vectors / norms[:, None], role)


def l2_normalize_backward(raw, grad):
    """y = x/|x| 的向量-雅可比积: (grad - y·<y, grad>) / |x|"""
    raw = _matrix(raw)
    grad = np.asarray(grad, dtype=np.float64)
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    if np.any(norms < ZERO_NORM):
        raise DegenerateFeatureError("cannot differentiate through a zero-norm row")
    unit = raw / norms
    return (grad - unit * np.sum(unit * grad, axis=1, keepdims=True)) / norms


def superpixel_pool(corr, point_features, pixel_features):
    """按超像素对点侧和像素侧特征分别取均值

    返回 (f, g, superpixel_ids)，ids 升序；没有超像素的匹配不参与。
    """
    points = _matrix(point_features)
    pixels = _matrix(pixel_features)
    if not (len(points) == len(pixels) == len(corr)):
        raise ContractError(
            f"{len(points)} point and {len(pixels)} pixel features for {len(corr)} correspondences"
        )
    labelled = corr.superpixel_id != NO_SUPERPIXEL
    if not np.any(labelled):
        raise ContractError("no correspondence carries a superpixel id")

    ids, group = np.unique(corr.superpixel_id[labelled], return_inverse=True)
    group = np.asarray(group).reshape(-1)
    counts = np.bincount(group, minlength=len(ids))[:, None]
    pooled_f = np.zeros((len(ids), points.shape[1]))
    pooled_g = np.zeros((len(ids), pixels.shape[1]))
    np.add.at(pooled_f, group, points[labelled])
    np.add.at(pooled_g, group, pixels[labelled])
    return (FeatureSet(pooled_f / counts, FeatureRole.POINT),
            FeatureSet(pooled_g / counts, FeatureRole.PIXEL), ids)


def _similarity(f, g, tau):
    if not tau > 0:
        raise ConfigurationError(f"tau must be positive, got {tau}")
    f, g = _matrix(f), _matrix(g)
    if f.shape != g.shape:
        raise ContractError(f"feature shapes differ: {f.shape} vs {g.shape}")
    return f, g, f @ g.T / tau


def contrastive_loss(f, g, tau=DEFAULT_TAU):
    _, _, logits = _similarity(f, g, tau)
    # 按列做 log-sum-exp（减去每列最大值）
    per_pair = logsumexp(logits, axis=0) - np.diag(logits)
    return float(per_pair.mean())


def contrastive_loss_grad(f, g, tau=DEFAULT_TAU):
    """对已归一化的行求梯度，返回 (dL/df, dL/dg)"""
    f, g, logits = _similarity(f, g, tau)
    m = len(f)
    weights = (softmax(logits, axis=0) - np.eye(m)) / m
    return weights @ g / tau, weights.T @ f / tau


@dataclass(frozen=True)
class GradientCheck:
    loss: float
    rel_error_f: float
    rel_error_g: float

    @property
    def max_rel_error(self):
        return max(self.rel_error_f, self.rel_error_g)

    def to_dict(self):
        return {"loss": self.loss, "rel_error_f": self.rel_error_f,
                "rel_error_g": self.rel_error_g, "max_rel_error": self.max_rel_error}


def _relative_error(analytic, numeric):
    scale = np.abs(analytic).max()
    diff = np.abs(analytic - numeric).max()
    if scale == 0.0:
        return float(diff)
    return float(diff / scale)


def numeric_gradient(f, g, tau, h=1e-5):
    """中心差分梯度"""
    f, g = np.array(_matrix(f)), np.array(_matrix(g))
    grads = []
    for target in (f, g):
        grad = np.zeros_like(target)
        for index in np.ndindex(target.shape):
            saved = target[index]
            target[index] = saved + h
            plus = contrastive_loss(f, g, tau)
            target[index] = saved - h
            minus = contrastive_loss(f, g, tau)
            target[index] = saved
            grad[index] = (plus - minus) / (2 * h)
        grads.append(grad)
    return tuple(grads)


def random_pair(m, d, seed=0):
    rng = np.random.default_rng(seed)
    f = l2_normalize(FeatureSet(rng.standard_normal((m, d)), FeatureRole.POINT))
    g = l2_normalize(FeatureSet(rng.standard_normal((m, d)), FeatureRole.PIXEL))
    return f, g


def gradient_check(m=16, d=8, tau=DEFAULT_TAU, seed=0, h=1e-5):
    """随机归一化特征上比较解析梯度与中心差分"""
    if m < 1 or d < 1:
        raise ConfigurationError(f"m and d must be >= 1, got m={m}, d={d}")
    f, g = random_pair(m, d, seed)
    analytic_f, analytic_g = contrastive_loss_grad(f, g, tau)
    numeric_f, numeric_g = numeric_gradient(f, g, tau, h)
    report = GradientCheck(
        loss=contrastive_loss(f, g, tau),
        rel_error_f=_relative_error(analytic_f, numeric_f),
        rel_error_g=_relative_error(analytic_g, numeric_g),
    )
    logger.info("Gradient check m=%d d=%d tau=%g: max relative error %.3e",
                m, d, tau, report.max_rel_error)
    return report


def read_features_csv(path, role=FeatureRole.POINT):
    """每行一个特征向量，所有列均为数值"""
    df = pd.read_csv(path, float_precision="round_trip")
    try:
        vectors = df.to_numpy(dtype=np.float64)
    except ValueError as e:
        raise DataFormatError(f"non-numeric feature values in {path}: {e}")
    return FeatureSet(vectors, role)


def write_features_csv(features, path):
    vectors = _matrix(features)
    columns = [f"c{i}" for i in range(vectors.shape[1])]
    pd.DataFrame(vectors, columns=columns).to_csv(path, index=False, float_format="%.17g")
    return path
