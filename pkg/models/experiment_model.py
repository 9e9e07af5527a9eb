"""
实验数据模型
实验计划、单次运行记录、统计比较单元与 W-D-L 汇总行
"""
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

from models.problem_model import ProblemClass
from utils.exceptions import ValidationError

INITIALIZERS = ("mpi", "rand", "obl", "svmss", "no-gating", "no-transfer", "no-interp")
OPTIMIZERS = ("ga-elite", "brkga")
ACCEPTANCE_METRICS = ("avg_up_fraction", "avg_ge_fraction", "goal_diff", "wdl_wins_gt_losses")


@dataclass(frozen=True)
class InstanceSpec:
    class_tag: str
    dim: int
    seed: int = 0
    name: str = ""     # 仅 EXTERNAL：config.json 中 external_instances 的键

    @property
    def instance_id(self) -> str:
        if self.class_tag == ProblemClass.EXTERNAL.value:
            return f"EXTERNAL-{self.name}-{self.dim}"
        return f"{self.class_tag}-{self.dim}-{self.seed}"


@dataclass(frozen=True)
class MethodSpec:
    """初始化方法 × 优化器；mpi 系列可用 mpi@<门控名> 指定门控模型"""
    initializer: str
    optimizer: str = "ga-elite"

    def __post_init__(self):
        base = self.initializer.split("@", 1)[0]
        if base not in INITIALIZERS:
            raise ValidationError(f"未知的初始化方法: {self.initializer}", field="methods.initializer")
        if self.optimizer not in OPTIMIZERS:
            raise ValidationError(f"未知的优化器: {self.optimizer}", field="methods.optimizer")

    @property
    def method_id(self) -> str:
        return f"{self.initializer}+{self.optimizer}"


@dataclass(frozen=True)
class AcceptanceSpec:
    """计划文件中的验收门限"""
    name: str
    challenger: str
    baseline: str
    optimizer: str = "ga-elite"
    metric: str = "wdl_wins_gt_losses"
    threshold: float = 0.0
    classes: tuple = ()
    dims: tuple = ()

    def __post_init__(self):
        if self.metric not in ACCEPTANCE_METRICS:
            raise ValidationError(f"未知的验收指标: {self.metric}", field="acceptance.metric")


@dataclass
class ExperimentPlan:
    instances: List[InstanceSpec]
    methods: List[MethodSpec]
    budget: int = 800
    sweep: List[int] = field(default_factory=list)
    repetitions: int = 30
    base_seed: int = 0
    alpha: float = 0.05
    repository: Optional[str] = None
    gating: Dict[str, str] = field(default_factory=dict)
    acceptance: List[AcceptanceSpec] = field(default_factory=list)
    results: str = "results/results.jsonl"

    def __post_init__(self):
        if not self.instances or not self.methods:
            raise ValidationError("实验计划至少需要一个实例和一个方法", field="plan")
        if self.repetitions < 2:
            raise ValidationError("统计检验需要 repetitions ≥ 2", field="bench.repetitions")
        if any(b < 1 for b in self.sweep):
            raise ValidationError("预算扫描点必须为正", field="bench.sweep")
        if not 0 < self.alpha < 1:
            raise ValidationError("显著性水平必须位于 (0, 1)", field="bench.alpha")

    @property
    def run_budget(self) -> int:
        return max([self.budget, *self.sweep])

    @property
    def budget_points(self) -> List[int]:
        return sorted(set(self.sweep) | {self.budget})


@dataclass
class RunRecord:
    """一次 (实例, 方法, 重复) 运行的结果"""
    cell_id: str
    instance_id: str
    class_tag: str
    dim: int
    instance_seed: int
    initializer: str
    optimizer: str
    budget: int
    repetition: int
    run_seed: int
    best_objective: float
    fes_init: int
    fes_total: int
    best_solution: str
    trace: List[float] = field(default_factory=list)
    config: Dict[str, Any] = field(default_factory=dict)

    @property
    def method_id(self) -> str:
        return f"{self.initializer}+{self.optimizer}"

    def best_at(self, budget: int) -> float:
        if budget < 1 or budget > len(self.trace):
            raise ValidationError(f"预算点 {budget} 超出运行轨迹长度 {len(self.trace)}", field="budget")
        return self.trace[budget - 1]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunRecord':
        return cls(**data)


@dataclass
class ComparisonCell:
    """单个实例上挑战者相对基线的比较"""
    instance_id: str
    mean_a: float
    std_a: float
    mean_b: float
    std_b: float
    p_value: float
    verdict: str    # win / draw / loss（挑战者视角）

    @property
    def marker(self) -> str:
        return {"win": "↑", "loss": "↓"}.get(self.verdict, "→")


@dataclass
class WdlRow:
    group: str
    wins: int = 0
    draws: int = 0
    losses: int = 0
    avg_up: int = 0
    avg_ge: int = 0
    cells: List[ComparisonCell] = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.wins + self.draws + self.losses

    @property
    def goal_diff(self) -> int:
        return self.wins - self.losses
