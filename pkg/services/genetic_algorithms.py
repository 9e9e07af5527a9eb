"""
受预算约束的二进制遗传算法
GA-Elite（单点交叉 + 位翻转变异 + 精英保留）与 BRKGA（随机键 + 偏置交叉）
"""
from typing import List, Tuple

import numpy as np

from models.population_model import BrkgaConfig, BudgetMeter, GaEliteConfig, RunOutcome
from models.problem_model import ProblemInstance
from utils.exceptions import BudgetExhaustedError, ValidationError
from utils.logger import log_debug

BRKGA_KEY_ONE = 0.75
BRKGA_KEY_ZERO = 0.25


class _Incumbent:
    """本次运行内的历史最优与逐次评估的最优值轨迹"""

    def __init__(self, solutions: np.ndarray, objectives: np.ndarray):
        best = int(np.argmax(objectives))
        self.solution = solutions[best].copy()
        self.objective = float(objectives[best])
        self.history: List[float] = []
        self.evaluations = 0

    def update(self, solution: np.ndarray, objective: float) -> None:
        if objective > self.objective:
            self.solution, self.objective = solution.copy(), objective
        self.history.append(self.objective)
        self.evaluations += 1

    def outcome(self) -> RunOutcome:
        return RunOutcome(self.solution, self.objective, self.history, self.evaluations)


def _check_population(solutions: np.ndarray, objectives: np.ndarray, pop_size: int,
                      instance: ProblemInstance) -> Tuple[np.ndarray, np.ndarray]:
    solutions = np.asarray(solutions, dtype=np.uint8)
    objectives = np.asarray(objectives, dtype=np.float64)
    if solutions.shape != (pop_size, instance.dim) or objectives.shape != (pop_size,):
        raise ValidationError(
            f"初始种群形状 {solutions.shape} 与 pop_size={pop_size}, d={instance.dim} 不匹配", field="init_population"
        )
    order = np.argsort(-objectives, kind="stable")
    return solutions[order].copy(), objectives[order].copy()


def single_point_crossover(a: np.ndarray, b: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cut = int(rng.integers(1, a.shape[0])) if a.shape[0] > 1 else 0
    return np.concatenate([a[:cut], b[cut:]])


def flip_mutation(x: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    flips = rng.random(x.shape[0]) < rate
    return np.where(flips, 1 - x, x).astype(np.uint8)


def ga_elite_run(instance: ProblemInstance, init_solutions: np.ndarray, init_objectives: np.ndarray,
                 meter: BudgetMeter, config: GaEliteConfig = None, rng: np.random.Generator = None) -> RunOutcome:
    """GA-Elite：循环直到预算耗尽"""
    config = config or GaEliteConfig()
    rng = rng or np.random.default_rng(0)
    pop_x, pop_y = _check_population(init_solutions, init_objectives, config.pop_size, instance)
    incumbent = _Incumbent(pop_x, pop_y)
    generation = 0

    while meter.remaining > 0:
        generation += 1
        child_x, child_y = [], []
        for _ in range(config.offspring):
            if meter.remaining == 0:
                break
            i, j = rng.choice(config.pop_size, size=2, replace=False)
            child = single_point_crossover(pop_x[i], pop_x[j], rng)
            child = flip_mutation(child, config.mutation_rate, rng)
            try:
                sample = meter.evaluate(instance, child)
            except BudgetExhaustedError:
                break
            incumbent.update(sample.solution, sample.objective)
            child_x.append(sample.solution)
            child_y.append(sample.objective)
        if not child_x:
            break

        # 精英 + 最优子代；并列时先插入者优先
        cand_x = np.concatenate([pop_x[:config.elites], np.array(child_x, dtype=np.uint8), pop_x[config.elites:]])
        cand_y = np.concatenate([pop_y[:config.elites], np.array(child_y), pop_y[config.elites:]])
        elite_part = np.arange(config.elites)
        offspring_order = config.elites + np.argsort(-np.array(child_y), kind="stable")
        rest = np.arange(config.elites + len(child_x), len(cand_y))
        keep = np.concatenate([elite_part, offspring_order, rest])[:config.pop_size]
        order = keep[np.argsort(-cand_y[keep], kind="stable")]
        pop_x, pop_y = cand_x[order], cand_y[order]

    log_debug(f"GA-Elite 结束: {generation} 代, {incumbent.evaluations} 次评估, 最优 {incumbent.objective:.6g}")
    return incumbent.outcome()


def lift_to_keys(solutions: np.ndarray) -> np.ndarray:
    """二进制解提升为随机键：1 -> 0.75, 0 -> 0.25"""
    return np.where(np.asarray(solutions) == 1, BRKGA_KEY_ONE, BRKGA_KEY_ZERO)


def decode_keys(keys: np.ndarray) -> np.ndarray:
    return (np.asarray(keys) > 0.5).astype(np.uint8)


def brkga_run(instance: ProblemInstance, init_solutions: np.ndarray, init_objectives: np.ndarray,
              meter: BudgetMeter, config: BrkgaConfig = None, rng: np.random.Generator = None) -> RunOutcome:
    """BRKGA：精英直接复制（不重复评估），偏置交叉子代与随机突变体需要评估"""
    config = config or BrkgaConfig()
    rng = rng or np.random.default_rng(0)
    pop_x, pop_y = _check_population(init_solutions, init_objectives, config.pop_size, instance)
    keys = lift_to_keys(pop_x)
    incumbent = _Incumbent(pop_x, pop_y)
    dim = instance.dim
    generation = 0

    while meter.remaining > 0:
        generation += 1
        elite_keys, elite_y = keys[:config.elites], pop_y[:config.elites]
        non_elite = keys[config.elites:]
        new_keys = []
        for _ in range(config.crossover_offspring):
            e_parent = elite_keys[int(rng.integers(0, config.elites))]
            n_parent = non_elite[int(rng.integers(0, len(non_elite)))]
            inherit = rng.random(dim) < config.elite_bias
            new_keys.append(np.where(inherit, e_parent, n_parent))
        for _ in range(config.mutants):
            new_keys.append(rng.random(dim))

        evaluated_keys, evaluated_y = [], []
        for key in new_keys:
            if meter.remaining == 0:
                break
            sample = meter.evaluate(instance, decode_keys(key))
            incumbent.update(sample.solution, sample.objective)
            evaluated_keys.append(key)
            evaluated_y.append(sample.objective)
        if not evaluated_keys:
            break

        # 新一代 = 精英 + 新个体；预算中途耗尽时用旧的非精英个体补足
        keys_all = np.concatenate([elite_keys, np.array(evaluated_keys), non_elite])[:config.pop_size]
        y_all = np.concatenate([elite_y, np.array(evaluated_y), pop_y[config.elites:]])[:config.pop_size]
        order = np.argsort(-y_all, kind="stable")
        keys, pop_y = keys_all[order], y_all[order]

    log_debug(f"BRKGA 结束: {generation} 代, {incumbent.evaluations} 次评估, 最优 {incumbent.objective:.6g}")
    return incumbent.outcome()
