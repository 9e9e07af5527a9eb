"""
种群与预算数据模型
函数评估预算计数器、初始化配置与结果、遗传算法配置、单次运行结果
"""
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np

from models.problem_model import EvaluatedSample, ProblemInstance
from utils.exceptions import BudgetExhaustedError, ValidationError


class BudgetMeter:
    """真实函数评估 (FE) 的严格计数器；所有评估必须经过这里

    trace[i] 为第 i+1 次评估后的历史最优值。
    """

    def __init__(self, limit: int):
        if limit < 0:
            raise ValidationError(f"预算不能为负: {limit}", field="budget")
        self.limit = int(limit)
        self.used = 0
        self.trace: List[float] = []
        self._best = float("-inf")
        self._lock = threading.Lock()

    @property
    def remaining(self) -> int:
        return self.limit - self.used

    @property
    def best(self) -> float:
        return self._best

    def require(self, count: int, what: str = "") -> None:
        """检查剩余预算是否足够（不扣除）"""
        if count > self.remaining:
            raise BudgetExhaustedError(
                f"{what}需要 {count} 次评估，剩余预算仅 {self.remaining}", limit=self.limit, used=self.used
            )

    def _charge(self) -> None:
        with self._lock:
            if self.used >= self.limit:
                raise BudgetExhaustedError(f"评估预算已耗尽 ({self.used}/{self.limit})",
                                           limit=self.limit, used=self.used)
            self.used += 1

    def _record(self, objective: float) -> None:
        with self._lock:
            if objective > self._best:
                self._best = objective
            self.trace.append(self._best)

    def evaluate(self, instance: ProblemInstance, solution) -> EvaluatedSample:
        """修复、计费并评估一个解"""
        from services.problem_service import EVALUATORS, repair

        x = repair(instance, solution)
        self._charge()
        objective = EVALUATORS[instance.class_tag](instance, x)
        sample = EvaluatedSample(x, objective)
        self._record(sample.objective)
        return sample

    def best_at(self, budget: int) -> float:
        """前 budget 次评估内的历史最优值"""
        if budget < 1 or budget > len(self.trace):
            raise ValidationError(f"预算点 {budget} 超出已记录的评估次数 {len(self.trace)}", field="budget")
        return self.trace[budget - 1]


class Provenance(str, Enum):
    PROBE = "probe"
    GENERATED = "generated"
    INTERPOLATED = "interpolated"
    RANDOM = "random"


@dataclass(frozen=True)
class MpiConfig:
    """MPI 在线初始化配置"""
    e: int = 64
    k: int = 12
    q: int = 4
    q_m: int = 20
    p: int = 20
    candidate_sample_count: int = 100_000
    elite_fraction: float = 0.10
    source_sample_factor: int = 4
    workers: int = 1

    def __post_init__(self):
        for name in ("e", "k", "q", "p", "candidate_sample_count", "source_sample_factor", "workers"):
            if getattr(self, name) < 1:
                raise ValidationError(f"mpi.{name} 必须为正", field=f"mpi.{name}")
        if self.q_m < 0:
            raise ValidationError("mpi.q_m 不能为负", field="mpi.q_m")
        if self.e + self.k * self.q + self.q_m < self.p:
            raise ValidationError("需要满足 e + k·q + q_m ≥ p", field="mpi")
        if not 0 < self.elite_fraction < 1:
            raise ValidationError("mpi.elite_fraction 必须位于 (0, 1)", field="mpi.elite_fraction")
        if self.candidate_sample_count < self.q:
            raise ValidationError("candidate_sample_count 不能小于 q", field="mpi.candidate_sample_count")

    @property
    def planned_fes(self) -> int:
        return self.e + self.k * self.q + self.q_m


@dataclass
class PopulationMember:
    solution: np.ndarray
    objective: float
    provenance: Provenance


@dataclass
class InitResult:
    """初始种群（按目标值降序）及消耗的评估次数"""
    population: List[PopulationMember]
    fes_consumed: int
    selected: List[int] = field(default_factory=list)
    # 迁移生成与插值得到的全部已评估解（截取前 p 个之前）
    transferred: List[PopulationMember] = field(default_factory=list)

    @property
    def solutions(self) -> np.ndarray:
        return np.array([m.solution for m in self.population], dtype=np.uint8)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([m.objective for m in self.population], dtype=np.float64)

    @property
    def provenance(self) -> List[Provenance]:
        return [m.provenance for m in self.population]


@dataclass(frozen=True)
class GaEliteConfig:
    pop_size: int = 20
    elites: int = 1
    offspring: int = 20
    mutation_rate: float = 0.001

    def __post_init__(self):
        if not 0 <= self.elites < self.pop_size:
            raise ValidationError("ga_elite.elites 必须小于 pop_size", field="ga_elite.elites")
        if self.offspring < 1:
            raise ValidationError("ga_elite.offspring 必须为正", field="ga_elite.offspring")
        if not 0 <= self.mutation_rate <= 1:
            raise ValidationError("ga_elite.mutation_rate 必须位于 [0, 1]", field="ga_elite.mutation_rate")


@dataclass(frozen=True)
class BrkgaConfig:
    pop_size: int = 20
    elites: int = 4
    crossover_offspring: int = 14
    mutants: int = 2
    elite_bias: float = 0.7

    def __post_init__(self):
        if self.elites + self.crossover_offspring + self.mutants != self.pop_size:
            raise ValidationError("brkga 需要 elites + crossover_offspring + mutants = pop_size", field="brkga")
        if self.elites < 1 or self.elites >= self.pop_size:
            raise ValidationError("brkga.elites 必须位于 [1, pop_size)", field="brkga.elites")
        if not 0 <= self.elite_bias <= 1:
            raise ValidationError("brkga.elite_bias 必须位于 [0, 1]", field="brkga.elite_bias")


@dataclass(frozen=True)
class SvmSsConfig:
    initial: int = 20
    pool_size: int = 200
    budget: int = 132
    regularization: float = 1e-3

    def __post_init__(self):
        if self.initial < 2 or self.pool_size < 1:
            raise ValidationError("svmss.initial ≥ 2 且 pool_size ≥ 1", field="svmss")


@dataclass
class RunOutcome:
    """优化器运行结果"""
    best_solution: np.ndarray
    best_objective: float
    history: List[float]
    evaluations: int
