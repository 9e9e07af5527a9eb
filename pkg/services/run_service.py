"""
单次运行服务
初始化方法注册表、下游优化器注册表，以及 "初始化 + 搜索" 的单次预算运行
"""
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from models.experience_model import ExperienceRepository, GatingModel
from models.experiment_model import MethodSpec, RunRecord
from models.neural_model import FinetuneConfig
from models.population_model import (BrkgaConfig, BudgetMeter, GaEliteConfig, InitResult, MpiConfig,
                                     RunOutcome, SvmSsConfig)
from models.problem_model import ProblemInstance, to_bitstring
from services.baseline_initializers import init_obl, init_rand, init_svmss
from services.genetic_algorithms import brkga_run, ga_elite_run
from services.transfer_service import mpi_initialize
from utils.exceptions import ConfigurationError, ValidationError
from utils.logger import log_debug
from utils.seeding import derive_rng

ABLATION_OF = {
    "no-gating": "NoGating",
    "no-transfer": "NoTransfer",
    "no-interp": "NoInterpolation",
}


@dataclass
class RunContext:
    """一次实验共享的离线产物与超参数"""
    repository: Optional[ExperienceRepository] = None
    gating: Dict[str, GatingModel] = field(default_factory=dict)   # "" 为默认门控
    mpi: MpiConfig = field(default_factory=MpiConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    ga_elite: GaEliteConfig = field(default_factory=GaEliteConfig)
    brkga: BrkgaConfig = field(default_factory=BrkgaConfig)
    svmss: SvmSsConfig = field(default_factory=SvmSsConfig)

    def gating_for(self, initializer: str) -> Optional[GatingModel]:
        name = initializer.split("@", 1)[1] if "@" in initializer else ""
        if name not in self.gating:
            if name:
                raise ConfigurationError(f"计划中未注册名为 {name} 的门控模型", field="artifacts.gating")
            return None
        return self.gating[name]

    def pop_size(self, optimizer: str) -> int:
        return self.ga_elite.pop_size if optimizer == "ga-elite" else self.brkga.pop_size

    def echo(self) -> Dict:
        return {"mpi": asdict(self.mpi), "ga_elite": asdict(self.ga_elite), "brkga": asdict(self.brkga),
                "svmss": asdict(self.svmss)}


def _needs_repository(initializer: str) -> bool:
    return initializer.split("@", 1)[0] in ("mpi", *ABLATION_OF)


def initialize(initializer: str, instance: ProblemInstance, p: int, meter: BudgetMeter,
               rng: np.random.Generator, context: RunContext) -> InitResult:
    """按初始化方法 id 生成 p 个个体的初始种群"""
    base = initializer.split("@", 1)[0]
    if _needs_repository(initializer) and context.repository is None:
        raise ConfigurationError(f"初始化方法 {initializer} 需要经验库", field="artifacts.repository")
    if base in ("mpi", *ABLATION_OF):
        if context.mpi.p != p:
            raise ValidationError(f"mpi.p={context.mpi.p} 与优化器种群规模 {p} 不一致", field="mpi.p")
        return mpi_initialize(instance, context.repository, context.gating_for(initializer), context.mpi,
                              meter, rng, context.finetune, ABLATION_OF.get(base))
    if base == "rand":
        return init_rand(instance, p, meter, rng)
    if base == "obl":
        return init_obl(instance, p, meter, rng)
    if base == "svmss":
        return init_svmss(instance, p, context.svmss.budget, meter, rng, context.svmss)
    raise ValidationError(f"未知的初始化方法: {initializer}", field="initializer")


OPTIMIZERS: Dict[str, Callable[..., RunOutcome]] = {
    "ga-elite": lambda instance, x, y, meter, context, rng: ga_elite_run(instance, x, y, meter,
                                                                        context.ga_elite, rng),
    "brkga": lambda instance, x, y, meter, context, rng: brkga_run(instance, x, y, meter, context.brkga, rng),
}


def run_single(instance: ProblemInstance, method: MethodSpec, budget: int, run_seed: int,
               context: RunContext, cell_id: str = "", repetition: int = 0) -> RunRecord:
    """在总预算 budget 内完成 初始化 + 搜索，返回运行记录"""
    meter = BudgetMeter(budget)
    p = context.pop_size(method.optimizer)
    init = initialize(method.initializer, instance, p, meter, derive_rng("init", run_seed), context)
    if len(init.population) != p:
        raise ValidationError(f"初始化方法 {method.initializer} 返回 {len(init.population)} 个个体，需要 {p}",
                              field="initializer")
    fes_init = meter.used
    if fes_init >= budget:
        raise ValidationError(f"预算 {budget} 不足以在初始化 ({fes_init} FEs) 后继续搜索", field="bench.budget")

    outcome = OPTIMIZERS[method.optimizer](instance, init.solutions, init.objectives, meter, context,
                                         derive_rng("search", run_seed))
    log_debug(f"[{instance.instance_id}] {method.method_id} seed={run_seed}: 初始化 {fes_init} FEs, "
              f"搜索 {meter.used - fes_init} FEs, 最优 {meter.best:.6g}")
    return RunRecord(
        cell_id=cell_id or f"{instance.instance_id}|{method.method_id}|{repetition}",
        instance_id=instance.instance_id,
        class_tag=instance.class_tag.value,
        dim=instance.dim,
        instance_seed=instance.seed,
        initializer=method.initializer,
        optimizer=method.optimizer,
        budget=budget,
        repetition=repetition,
        run_seed=run_seed,
        best_objective=float(outcome.best_objective),
        fes_init=fes_init,
        fes_total=meter.used,
        best_solution=to_bitstring(outcome.best_solution),
        trace=[float(v) for v in meter.trace],
        config=context.echo(),
    )
