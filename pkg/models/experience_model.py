"""
经验数据模型
经验记录、经验库、门控网络与 PGPE 配置
"""
import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List

import numpy as np

from models.neural_model import MlpParams, VaeSurrogate
from models.problem_model import EvaluatedSample
from utils.exceptions import RepositoryError, ValidationError

GATING_VARIANTS = ("Max", "Mean", "MaxDiv", "MeanDiv")


@dataclass(eq=False)
class ExperienceRecord:
    """一条求解经验：采样数据集 D_i 与训练好的代理模型 M_i"""
    record_id: str
    source_dim: int
    class_tag: str      # 仅作元数据，在线流程不使用
    solutions: np.ndarray
    objectives: np.ndarray
    surrogate: VaeSurrogate
    y_min: float = 0.0
    y_max: float = 0.0

    def __post_init__(self):
        self.solutions = np.asarray(self.solutions, dtype=np.uint8)
        self.objectives = np.asarray(self.objectives, dtype=np.float64)
        if self.solutions.ndim != 2 or self.solutions.shape[1] != self.source_dim:
            raise RepositoryError(f"记录 {self.record_id} 的解维度与 source_dim={self.source_dim} 不一致",
                                  record=self.record_id)
        if self.solutions.shape[0] != self.objectives.shape[0]:
            raise RepositoryError(f"记录 {self.record_id} 的解与目标值数量不一致", record=self.record_id)
        if self.surrogate.input_dim != self.source_dim:
            raise RepositoryError(
                f"记录 {self.record_id} 的代理模型输入维度 {self.surrogate.input_dim} 与 source_dim 不一致",
                record=self.record_id
            )

    @property
    def size(self) -> int:
        return int(self.objectives.shape[0])

    @property
    def dataset(self) -> List[EvaluatedSample]:
        return [EvaluatedSample(s, y) for s, y in zip(self.solutions, self.objectives)]


@dataclass(eq=False)
class ExperienceRepository:
    """有序的经验库；记录顺序决定门控网络输出的下标"""
    records: List[ExperienceRecord]
    manifest: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.records:
            raise RepositoryError("经验库至少需要一条记录")

    @property
    def n(self) -> int:
        return len(self.records)

    @cached_property
    def fingerprint(self) -> str:
        """经验库内容的 sha256 指纹（权重与样本二进制块）"""
        from utils.weight_codec import encode_samples, encode_surrogate

        digest = hashlib.sha256()
        for record in self.records:
            digest.update(record.record_id.encode("utf-8"))
            digest.update(encode_surrogate(record.surrogate))
            digest.update(encode_samples(record.solutions, record.objectives))
        return digest.hexdigest()


@dataclass
class GatingModel:
    """门控网络：3n 维相关性特征 -> n 个经验得分"""
    net: MlpParams
    n: int
    repository_fingerprint: str = ""
    variant: str = "Max"
    best_value: float = float("nan")

    def __post_init__(self):
        if self.net.in_dim != 3 * self.n or self.net.out_dim != self.n:
            raise ValidationError(
                f"门控网络形状 {self.net.in_dim}->{self.net.out_dim} 与 n={self.n} 不匹配", field="gating"
            )
        if self.variant not in GATING_VARIANTS:
            raise ValidationError(f"未知的门控目标变体: {self.variant}", field="gating.variant")


@dataclass(frozen=True)
class PgpeConfig:
    sigma_init: float = 0.1
    alpha_mu: float = 0.01
    alpha_sigma: float = 0.2
    sigma_limit: float = 0.01
    half_population: int = 16
    max_iter: int = 50
    workers: int = 1

    def __post_init__(self):
        if min(self.sigma_init, self.alpha_mu, self.alpha_sigma, self.sigma_limit) <= 0:
            raise ValidationError("PGPE 超参数必须为正", field="pgpe")
        if self.sigma_limit > self.sigma_init:
            raise ValidationError("需要 sigma_limit ≤ sigma_init", field="pgpe.sigma_limit")
        if self.half_population < 1 or self.max_iter < 1:
            raise ValidationError("half_population 与 max_iter 必须为正", field="pgpe")
