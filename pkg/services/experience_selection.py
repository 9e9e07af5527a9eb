"""
经验选择服务
新实例与各条经验之间的黑盒相关性特征、门控打分与 top-k 选择
"""
import warnings
from typing import List

import numpy as np
from scipy import stats

from models.experience_model import ExperienceRepository, GatingModel
from services.neural_network import mlp_predict, predict_scores
from utils.exceptions import ValidationError


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.shape[0] < 2:
        raise ValidationError(f"相关系数需要等长且长度 ≥ 2 的向量: {a.shape} vs {b.shape}", field="vectors")
    return a, b


def _degenerate(a: np.ndarray, b: np.ndarray) -> bool:
    return bool(np.all(a == a[0]) or np.all(b == b[0]))


def _finite(value: float) -> float:
    value = float(value)
    return value if np.isfinite(value) else 0.0


def pearson(a, b) -> float:
    a, b = _check_pair(a, b)
    if _degenerate(a, b):
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return _finite(stats.pearsonr(a, b)[0])


def spearman(a, b) -> float:
    """平均秩的 Pearson 相关"""
    a, b = _check_pair(a, b)
    if _degenerate(a, b):
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return _finite(stats.spearmanr(a, b)[0])


def kendall_tau(a, b) -> float:
    """tau-b（含并列修正）"""
    a, b = _check_pair(a, b)
    if _degenerate(a, b):
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return _finite(stats.kendalltau(a, b, variant="b")[0])


def adapt_dims(x: np.ndarray, d_target: int) -> np.ndarray:
    """截断或零填充到目标维度"""
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValidationError(f"adapt_dims 需要非空的二维解集，实际形状 {x.shape}", field="X")
    d = x.shape[1]
    if d == d_target:
        return x.copy()
    if d > d_target:
        return x[:, :d_target].copy()
    return np.concatenate([x, np.zeros((x.shape[0], d_target - d), dtype=x.dtype)], axis=1)


def compute_features(repository: ExperienceRepository, x_new: np.ndarray, y_new: np.ndarray) -> np.ndarray:
    """3n 维特征：Pearson ⊕ Spearman ⊕ Kendall，每段 n 个"""
    x_new = np.asarray(x_new)
    y_new = np.asarray(y_new, dtype=np.float64)
    if x_new.ndim != 2 or x_new.shape[0] < 2 or x_new.shape[0] != y_new.shape[0]:
        raise ValidationError(f"探测样本数必须 ≥ 2 且与目标值数量一致: {x_new.shape}", field="X_new")
    n = repository.n
    features = np.zeros(3 * n)
    for i, record in enumerate(repository.records):
        predicted = predict_scores(record.surrogate, adapt_dims(x_new, record.source_dim))
        features[i] = pearson(predicted, y_new)
        features[n + i] = spearman(predicted, y_new)
        features[2 * n + i] = kendall_tau(predicted, y_new)
    return features


def gating_scores(gating: GatingModel, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.shape != (3 * gating.n,):
        raise ValidationError(f"特征长度 {features.shape} 与 3n={3 * gating.n} 不一致", field="features")
    return mlp_predict(gating.net, features[None, :])[0]


def select_topk(scores, k: int) -> List[int]:
    """得分最高的 k 个下标，按得分降序，并列时下标小者优先"""
    scores = np.asarray(scores, dtype=np.float64)
    if k > scores.shape[0] or k < 0:
        raise ValidationError(f"k={k} 超出经验数量 {scores.shape[0]}", field="k")
    order = np.lexsort((np.arange(scores.shape[0]), -scores))
    return [int(i) for i in order[:k]]
