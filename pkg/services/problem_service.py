"""
问题服务
六类二进制问题的实例生成、修复与目标函数评估
"""
import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import networkx as nx
import numpy as np

from models.problem_model import (ContaminationParams, InfluenceParams, KnapsackParams, MaxCutParams,
                                  OneMaxParams, ProblemClass, ProblemInstance, as_solution)
from utils.exceptions import UnsupportedProblemError, ValidationError
from utils.logger import log_debug

CCP_SIMULATIONS = 100
CCP_THRESHOLD = 0.1
CIM_SETTINGS = (
    (0.5, 0.75, 0.5, 0.75),
    (0.5, 0.25, 0.5, 0.25),
)


@dataclass(frozen=True)
class GenerationOptions:
    """生成选项（不在实例 id 中体现，默认值即可保证确定性）"""
    cim_simulations: int = 100
    cim_node_factor: int = 5
    cim_seed_fraction: float = 0.05


def _rng_for(class_tag: ProblemClass, dim: int, seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), class_tag.code, int(dim)]))


def _generate_om(dim: int, rng: np.random.Generator, options: GenerationOptions) -> OneMaxParams:
    return OneMaxParams(rng.integers(0, 2, size=dim, dtype=np.uint8))


def _generate_kp(dim: int, rng: np.random.Generator, options: GenerationOptions) -> KnapsackParams:
    values = np.sort(rng.random(dim))[::-1]
    weights = np.sort(rng.random(dim))[::-1]
    lam = rng.uniform(0.2, 0.8)
    return KnapsackParams(values, weights, lam * float(weights.sum()))


def _generate_mc(dim: int, rng: np.random.Generator, options: GenerationOptions) -> MaxCutParams:
    if dim < 3:
        raise ValidationError(f"MC 需要 d ≥ 3 才能保证 k ≥ 1，当前 d={dim}", field="dim")
    lam = rng.uniform(0.2, 0.4)
    edges = int(math.floor(lam * dim * dim))
    edges = min(max(edges, dim - 1), dim * (dim - 1) // 2)
    attempts = 0
    while True:
        attempts += 1
        graph = nx.gnm_random_graph(dim, edges, seed=int(rng.integers(0, 2 ** 32)))
        if nx.is_connected(graph):
            break
    if attempts > 1:
        log_debug(f"MC 图重新生成 {attempts - 1} 次后连通 (d={dim}, |E|={edges})")
    adjacency = nx.to_numpy_array(graph, nodelist=range(dim), dtype=np.uint8)
    k = max(1, int(rng.uniform(0.2, 0.4) * dim))
    return MaxCutParams(adjacency, k)


def _generate_ccp(dim: int, rng: np.random.Generator, options: GenerationOptions) -> ContaminationParams:
    lam = float(rng.choice([0.0, 0.01]))
    alpha = rng.beta(1.0, 17.0 / 3.0, size=(CCP_SIMULATIONS, dim))
    gamma = rng.beta(1.0, 7.0 / 3.0, size=(CCP_SIMULATIONS, dim))
    z0 = rng.beta(1.0, 30.0, size=CCP_SIMULATIONS)
    return ContaminationParams(np.ones(dim), lam, 1.0, CCP_THRESHOLD, alpha, gamma, z0)


def _generate_cim(dim: int, rng: np.random.Generator, options: GenerationOptions) -> InfluenceParams:
    num_nodes = options.cim_node_factor * dim
    seed_count = math.ceil(options.cim_seed_fraction * num_nodes)
    if seed_count + dim > num_nodes:
        raise ValidationError(f"CIM 图规模 {num_nodes} 不足以容纳 {seed_count} 个预置种子和 {dim} 个候选",
                              field="dim")
    p_edge = rng.uniform(0.05, 0.15)
    graph = nx.gnp_random_graph(num_nodes, p_edge, seed=int(rng.integers(0, 2 ** 32)))
    undirected = np.array(sorted(graph.edges()), dtype=np.int64).reshape(-1, 2)
    src = np.concatenate([undirected[:, 0], undirected[:, 1]])
    dst = np.concatenate([undirected[:, 1], undirected[:, 0]])
    prob = rng.uniform(0.0, 0.2, size=src.shape[0])

    nodes = rng.permutation(num_nodes)
    seeds_a = np.sort(nodes[:seed_count])
    candidates = nodes[seed_count:seed_count + dim]
    k = int(rng.integers(math.ceil(0.2 * dim), math.floor(0.6 * dim) + 1))
    q = np.array(CIM_SETTINGS[int(rng.integers(0, len(CIM_SETTINGS)))])
    sim_seeds = rng.integers(0, 2 ** 63, size=options.cim_simulations, dtype=np.uint64)
    return InfluenceParams(num_nodes, src, dst, prob, seeds_a, candidates, k, q, sim_seeds)


GENERATORS: Dict[ProblemClass, Callable] = {
    ProblemClass.OM: _generate_om,
    ProblemClass.KP: _generate_kp,
    ProblemClass.MC: _generate_mc,
    ProblemClass.CCP: _generate_ccp,
    ProblemClass.CIM: _generate_cim,
}


def generate_instance(class_tag, dim: int, seed: int, options: Optional[GenerationOptions] = None) -> ProblemInstance:
    """生成问题实例；对 (class_tag, dim, seed) 确定"""
    tag = ProblemClass.parse(class_tag)
    if tag not in GENERATORS:
        raise UnsupportedProblemError(f"{tag.value} 实例没有生成器，需在配置中声明", class_tag=tag.value,
                                      suggestions=["在 config.json 的 external_instances 中声明外部评估器"])
    if dim < 2:
        raise ValidationError(f"维度必须 ≥ 2，当前 {dim}", field="dim")
    options = options or GenerationOptions()
    params = GENERATORS[tag](int(dim), _rng_for(tag, dim, seed), options)
    instance = ProblemInstance(tag, dim, seed, params)
    log_debug(f"生成实例 {instance.instance_id}")
    return instance


def _repair_kp(params: KnapsackParams, x: np.ndarray) -> np.ndarray:
    load = np.cumsum(params.weights * x)
    over = np.nonzero(load > params.capacity)[0]
    if over.size:
        x = x.copy()
        x[over[0]:] = 0
    return x


def _repair_first_k(x: np.ndarray, k: int) -> np.ndarray:
    ones = np.flatnonzero(x)
    if ones.size <= k:
        return x
    x = x.copy()
    x[ones[k:]] = 0
    return x


def repair(instance: ProblemInstance, solution) -> np.ndarray:
    """把解投影到可行域；OM/CCP/EXTERNAL 为恒等映射"""
    x = as_solution(solution, instance.dim)
    params = instance.params
    if instance.class_tag == ProblemClass.KP:
        return _repair_kp(params, x)
    if instance.class_tag in (ProblemClass.MC, ProblemClass.CIM):
        return _repair_first_k(x, params.k)
    return x


def _evaluate_om(instance: ProblemInstance, x: np.ndarray) -> float:
    return float(instance.dim - np.count_nonzero(x != instance.params.reference))


def _evaluate_kp(instance: ProblemInstance, x: np.ndarray) -> float:
    return float(np.dot(instance.params.values, x))


def _evaluate_mc(instance: ProblemInstance, x: np.ndarray) -> float:
    xf = x.astype(np.float64)
    return float(xf @ instance.params.adjacency.astype(np.float64) @ (1.0 - xf))


def contamination_paths(params: ContaminationParams, x: np.ndarray) -> np.ndarray:
    """各模拟路径上每个阶段的污染水平，形状 (T, d)"""
    xf = x.astype(np.float64)
    dim = xf.shape[0]
    z = np.empty((params.simulations, dim))
    prev = params.z0
    for i in range(dim):
        prev = params.alpha[:, i] * (1.0 - xf[i]) * (1.0 - prev) + (1.0 - params.gamma[:, i] * xf[i]) * prev
        z[:, i] = prev
    return z


def _evaluate_ccp(instance: ProblemInstance, x: np.ndarray) -> float:
    params = instance.params
    z = contamination_paths(params, x)
    penalty = np.mean(z > params.threshold, axis=0)
    cost = float(np.dot(params.costs, x))
    return -(cost + params.rho * float(penalty.sum()) + params.lam * float(x.sum()))


def _evaluate_cim(instance: ProblemInstance, x: np.ndarray) -> float:
    from services.influence_simulator import expected_b_adoption
    return expected_b_adoption(instance, x)


def _evaluate_external(instance: ProblemInstance, x: np.ndarray) -> float:
    from services.external_evaluator import external_evaluate
    return external_evaluate(instance, x)


EVALUATORS: Dict[ProblemClass, Callable[[ProblemInstance, np.ndarray], float]] = {
    ProblemClass.OM: _evaluate_om,
    ProblemClass.KP: _evaluate_kp,
    ProblemClass.MC: _evaluate_mc,
    ProblemClass.CCP: _evaluate_ccp,
    ProblemClass.CIM: _evaluate_cim,
    ProblemClass.EXTERNAL: _evaluate_external,
}


def evaluate(instance: ProblemInstance, solution) -> float:
    """评估（内部先修复）并返回最大化目标值"""
    x = repair(instance, solution)
    return EVALUATORS[instance.class_tag](instance, x)
