"""场景流评估指标：EPE、AccS、AccR、离群率，按静态部分/动态前景分开统计"""
import json
import logging
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np
import pandas as pd

from src.synthetic.scene import DYNAMIC, GROUND, STATIC
from src.utils.errors import ConfigurationError, ContractError

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["split", "epe_avg", "epe_med", "acc_s", "acc_r", "outlier_rate", "count"]


class FlowSplit(str, Enum):
    STATIC_PART = "static_part"
    DYNAMIC_FOREGROUND = "dynamic_foreground"


@dataclass(frozen=True)
class FlowThresholds:
    """(绝对误差 米, 相对误差) 阈值对"""
    strict: tuple = (0.05, 0.05)
    relaxed: tuple = (0.1, 0.1)
    outlier: tuple = (0.3, 0.3)

    def __post_init__(self):
        for name in ("strict", "relaxed", "outlier"):
            absolute, relative = getattr(self, name)
            if absolute <= 0 or relative <= 0:
                raise ConfigurationError(f"{name} thresholds must be positive")
        if self.strict[0] > self.relaxed[0] or self.strict[1] > self.relaxed[1]:
            raise ConfigurationError("strict thresholds must not exceed relaxed ones")
        if self.relaxed[0] > self.outlier[0] or self.relaxed[1] > self.outlier[1]:
            raise ConfigurationError("relaxed thresholds must not exceed outlier ones")


@dataclass(frozen=True)
class FlowEval:
    split: FlowSplit
    epe_avg: float
    epe_med: float
    acc_s: float
    acc_r: float
    outlier_rate: float
    count: int

    def to_dict(self):
        data = asdict(self)
        data["split"] = self.split.value
        return data


def relative_error(epe, gt_flow):
    """EPE / |真值流|；真值流为零时 EPE=0 记 0，否则记 +∞"""
    magnitude = np.linalg.norm(gt_flow, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = epe / magnitude
    rel[magnitude == 0] = np.where(epe[magnitude == 0] == 0, 0.0, np.inf)
    return rel


def _evaluate_split(split, epe, rel, thresholds):
    if len(epe) == 0:
        return None
    acc_s = (epe < thresholds.strict[0]) | (rel < thresholds.strict[1])
    acc_r = (epe < thresholds.relaxed[0]) | (rel < thresholds.relaxed[1])
    outliers = (epe > thresholds.outlier[0]) & (rel > thresholds.outlier[1])
    return FlowEval(
        split=split,
        epe_avg=float(epe.mean()),
        epe_med=float(np.median(epe)),
        acc_s=float(acc_s.mean()),
        acc_r=float(acc_r.mean()),
        outlier_rate=float(outliers.mean()),
        count=int(len(epe)),
    )


def evaluate_flow(predicted, gt_endpoints, start_points, labels, thresholds=None):
    """predicted/gt_endpoints 为预测和真值终点，start_points 为补偿后的起点

    静态部分 = 地面 + 静态物体，动态前景 = 运动物体；空的划分返回 None。
    """
    thresholds = thresholds or FlowThresholds()
    predicted = np.asarray(predicted, dtype=np.float64).reshape(-1, 3)
    gt_endpoints = np.asarray(gt_endpoints, dtype=np.float64).reshape(-1, 3)
    start_points = np.asarray(start_points, dtype=np.float64).reshape(-1, 3)
    labels = np.asarray(labels).reshape(-1)
    if not (len(predicted) == len(gt_endpoints) == len(start_points) == len(labels)):
        raise ContractError("predicted, ground-truth, start points and labels must have equal length")

    epe = np.linalg.norm(predicted - gt_endpoints, axis=1)
    rel = relative_error(epe, gt_endpoints - start_points)
    static = np.isin(labels, [GROUND, STATIC])
    dynamic = labels == DYNAMIC

    results = {
        FlowSplit.STATIC_PART: _evaluate_split(FlowSplit.STATIC_PART, epe[static], rel[static], thresholds),
        FlowSplit.DYNAMIC_FOREGROUND: _evaluate_split(
            FlowSplit.DYNAMIC_FOREGROUND, epe[dynamic], rel[dynamic], thresholds
        ),
    }
    for split, result in results.items():
        if result is None:
            logger.warning("Split %s has no points, metrics omitted", split.value)
        else:
            logger.info("%s: EPE avg %.4f m over %d points", split.value, result.epe_avg, result.count)
    return results


def results_to_dict(results):
    return {split.value: (None if result is None else result.to_dict()) for split, result in results.items()}


def write_results_json(results, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(results_to_dict(results), f, indent=2, sort_keys=True)
    return path


def write_results_csv(results, path):
    """每个划分一行，空划分的指标留空"""
    rows = []
    for split, result in results.items():
        if result is None:
            rows.append({"split": split.value, "count": 0})
        else:
            rows.append(result.to_dict())
    pd.DataFrame(rows, columns=CSV_COLUMNS).to_csv(path, index=False)
    return path
