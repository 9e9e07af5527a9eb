"""
问题实例数据模型
二进制解、六类问题实例及其参数、已评估样本
"""
import math
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Tuple, Union

import numpy as np

from utils.exceptions import ValidationError


class ProblemClass(str, Enum):
    """问题类别"""
    OM = "OM"
    KP = "KP"
    MC = "MC"
    CCP = "CCP"
    CIM = "CIM"
    EXTERNAL = "EXTERNAL"

    @property
    def code(self) -> int:
        return CLASS_CODES[self]

    @classmethod
    def from_code(cls, code: int) -> 'ProblemClass':
        for tag, value in CLASS_CODES.items():
            if value == code:
                return tag
        raise ValidationError(f"未知的问题类别编码: {code}", field="class_tag")

    @classmethod
    def parse(cls, name: Union[str, 'ProblemClass']) -> 'ProblemClass':
        """按名称解析问题类别（大小写不敏感）"""
        if isinstance(name, ProblemClass):
            return name
        try:
            return cls(str(name).upper())
        except ValueError:
            from utils.exceptions import UnsupportedProblemError
            raise UnsupportedProblemError(
                f"不支持的问题类别: {name}", class_tag=str(name),
                suggestions=[f"可选类别: {', '.join(c.value for c in cls)}"]
            )


CLASS_CODES = {
    ProblemClass.OM: 1,
    ProblemClass.KP: 2,
    ProblemClass.MC: 3,
    ProblemClass.CCP: 4,
    ProblemClass.CIM: 5,
    ProblemClass.EXTERNAL: 6,
}


def _frozen(array: np.ndarray, dtype) -> np.ndarray:
    result = np.array(array, dtype=dtype, copy=True)
    result.setflags(write=False)
    return result


@dataclass(frozen=True)
class OneMaxParams:
    """OM：参考向量"""
    reference: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "reference", _frozen(self.reference, np.uint8))


@dataclass(frozen=True)
class KnapsackParams:
    """KP：价值、重量（同序降序排列）与容量"""
    values: np.ndarray
    weights: np.ndarray
    capacity: float

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, np.float64))
        object.__setattr__(self, "weights", _frozen(self.weights, np.float64))
        object.__setattr__(self, "capacity", float(self.capacity))


@dataclass(frozen=True)
class MaxCutParams:
    """MC：对称邻接矩阵与划分上限 k"""
    adjacency: np.ndarray
    k: int

    def __post_init__(self):
        object.__setattr__(self, "adjacency", _frozen(self.adjacency, np.uint8))
        object.__setattr__(self, "k", int(self.k))


@dataclass(frozen=True)
class ContaminationParams:
    """CCP：成本、正则项、罚系数、阈值以及冻结的蒙特卡洛抽样"""
    costs: np.ndarray
    lam: float
    rho: float
    threshold: float
    alpha: np.ndarray   # (T, d)
    gamma: np.ndarray   # (T, d)
    z0: np.ndarray      # (T,)

    def __post_init__(self):
        object.__setattr__(self, "costs", _frozen(self.costs, np.float64))
        object.__setattr__(self, "alpha", _frozen(self.alpha, np.float64))
        object.__setattr__(self, "gamma", _frozen(self.gamma, np.float64))
        object.__setattr__(self, "z0", _frozen(self.z0, np.float64))
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "threshold", float(self.threshold))

    @property
    def simulations(self) -> int:
        return int(self.z0.shape[0])


@dataclass(frozen=True)
class InfluenceParams:
    """CIM：有向影响图、预置种子集、候选集、预算、交互四元组、冻结的模拟种子"""
    num_nodes: int
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_prob: np.ndarray
    seeds_a: np.ndarray
    candidates: np.ndarray
    k: int
    q: np.ndarray           # (q_A|∅, q_A|B, q_B|∅, q_B|A)
    sim_seeds: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "num_nodes", int(self.num_nodes))
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "edge_src", _frozen(self.edge_src, np.int64))
        object.__setattr__(self, "edge_dst", _frozen(self.edge_dst, np.int64))
        object.__setattr__(self, "edge_prob", _frozen(self.edge_prob, np.float64))
        object.__setattr__(self, "seeds_a", _frozen(self.seeds_a, np.int64))
        object.__setattr__(self, "candidates", _frozen(self.candidates, np.int64))
        object.__setattr__(self, "q", _frozen(self.q, np.float64))
        object.__setattr__(self, "sim_seeds", _frozen(self.sim_seeds, np.uint64))


@dataclass(frozen=True)
class ExternalParams:
    """EXTERNAL：外部评估器子进程的命令行与环境变量"""
    name: str
    command: Tuple[str, ...]
    env: Tuple[Tuple[str, str], ...] = ()
    timeout: float = 30.0

    def __post_init__(self):
        object.__setattr__(self, "command", tuple(str(c) for c in self.command))
        object.__setattr__(self, "env", tuple((str(k), str(v)) for k, v in self.env))
        object.__setattr__(self, "timeout", float(self.timeout))
        if not self.command:
            raise ValidationError("外部评估器命令不能为空", field="command")


ProblemParams = Union[OneMaxParams, KnapsackParams, MaxCutParams,
                      ContaminationParams, InfluenceParams, ExternalParams]

PARAMS_TYPES = {
    ProblemClass.OM: OneMaxParams,
    ProblemClass.KP: KnapsackParams,
    ProblemClass.MC: MaxCutParams,
    ProblemClass.CCP: ContaminationParams,
    ProblemClass.CIM: InfluenceParams,
    ProblemClass.EXTERNAL: ExternalParams,
}


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """问题实例（生成后不可变）"""
    class_tag: ProblemClass
    dim: int
    seed: int
    params: ProblemParams
    # 纯派生数据的惰性缓存（例如 CIM 的模拟世界），不参与序列化
    _cache: Dict[str, Any] = field(default_factory=dict, repr=False, compare=False)
    _cache_lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "class_tag", ProblemClass.parse(self.class_tag))
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "seed", int(self.seed))
        if self.dim < 1:
            raise ValidationError(f"维度必须为正整数: {self.dim}", field="dim")
        expected = PARAMS_TYPES[self.class_tag]
        if not isinstance(self.params, expected):
            raise ValidationError(
                f"{self.class_tag.value} 实例需要 {expected.__name__} 参数，实际为 {type(self.params).__name__}",
                field="params"
            )

    @property
    def instance_id(self) -> str:
        if self.class_tag == ProblemClass.EXTERNAL:
            return f"EXTERNAL-{self.params.name}-{self.dim}"
        return f"{self.class_tag.value}-{self.dim}-{self.seed}"

    def cached(self, key: str, factory):
        """获取（必要时构建）派生缓存项"""
        with self._cache_lock:
            if key not in self._cache:
                self._cache[key] = factory()
            return self._cache[key]


@dataclass(frozen=True)
class EvaluatedSample:
    """已评估样本：修复后的解与目标值"""
    solution: np.ndarray
    objective: float

    def __post_init__(self):
        object.__setattr__(self, "solution", _frozen(self.solution, np.uint8))
        object.__setattr__(self, "objective", float(self.objective))
        if not math.isfinite(self.objective):
            raise ValidationError(f"目标值必须有限: {self.objective}", field="objective")


def as_solution(bits, dim: int = None) -> np.ndarray:
    """校验并转换为 uint8 二进制向量"""
    arr = np.asarray(bits)
    if arr.ndim != 1:
        raise ValidationError(f"二进制解必须是一维向量，实际形状 {arr.shape}", field="solution")
    if dim is not None and arr.shape[0] != dim:
        raise ValidationError(f"解长度 {arr.shape[0]} 与实例维度 {dim} 不一致", field="solution")
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ValidationError("二进制解的元素必须为 0 或 1", field="solution")
    return arr.astype(np.uint8)


def to_bitstring(bits) -> str:
    return "".join("1" if b else "0" for b in np.asarray(bits).tolist())


def from_bitstring(text: str) -> np.ndarray:
    text = text.strip()
    if any(ch not in "01" for ch in text):
        raise ValidationError(f"非法的比特串: {text!r}", field="solution")
    return np.frombuffer(text.encode("ascii"), dtype=np.uint8) - ord("0")


def complement(bits) -> np.ndarray:
    return (1 - np.asarray(bits, dtype=np.uint8)).astype(np.uint8)


def random_solutions(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    """均匀随机采样 count 个 d 维二进制解"""
    return rng.integers(0, 2, size=(count, dim), dtype=np.uint8)
