"""
比较独立级联 (Com-IC) 模拟器
两种观点 A / B 在有向影响图上传播；各模拟世界由实例中冻结的种子惰性物化
"""
from dataclasses import dataclass
from typing import List

import numpy as np

from models.problem_model import InfluenceParams, ProblemInstance


@dataclass(frozen=True)
class SimulationWorld:
    """一次蒙特卡洛模拟的全部随机性：存活边、节点阈值与决策顺序"""
    indptr: np.ndarray
    indices: np.ndarray
    alpha_a: np.ndarray
    alpha_b: np.ndarray
    a_first: np.ndarray


def build_world(params: InfluenceParams, sim_seed: int) -> SimulationWorld:
    rng = np.random.default_rng(int(sim_seed))
    live = rng.random(params.edge_prob.shape[0]) < params.edge_prob
    alpha_a = rng.random(params.num_nodes)
    alpha_b = rng.random(params.num_nodes)
    a_first = rng.random(params.num_nodes) < 0.5

    src = params.edge_src[live]
    dst = params.edge_dst[live]
    order = np.argsort(src, kind="stable")
    src, dst = src[order], dst[order]
    indptr = np.zeros(params.num_nodes + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    indptr = np.cumsum(indptr)
    return SimulationWorld(indptr, dst, alpha_a, alpha_b, a_first)


def _worlds(instance: ProblemInstance) -> List[SimulationWorld]:
    params = instance.params
    return instance.cached("cim_worlds", lambda: [build_world(params, s) for s in params.sim_seeds])


def _neighbors(world: SimulationWorld, frontier: List[int]) -> np.ndarray:
    if not frontier:
        return np.zeros(0, dtype=np.int64)
    parts = [world.indices[world.indptr[u]:world.indptr[u + 1]] for u in frontier]
    return np.unique(np.concatenate(parts))


def simulate_world(params: InfluenceParams, world: SimulationWorld, seeds_b: np.ndarray) -> int:
    """在单个模拟世界中传播，返回采纳 B 的节点数"""
    q_a0, q_ab, q_b0, q_ba = (float(v) for v in params.q)
    n = params.num_nodes
    adopted_a = np.zeros(n, dtype=bool)
    adopted_b = np.zeros(n, dtype=bool)
    informed_a = np.zeros(n, dtype=bool)
    informed_b = np.zeros(n, dtype=bool)

    frontier_a = [int(v) for v in params.seeds_a]
    frontier_b = [int(v) for v in seeds_b]
    adopted_a[frontier_a] = informed_a[frontier_a] = True
    adopted_b[frontier_b] = informed_b[frontier_b] = True

    def try_a(v: int, next_a: list) -> bool:
        threshold = q_ab if adopted_b[v] else q_a0
        if not adopted_a[v] and world.alpha_a[v] <= threshold:
            adopted_a[v] = True
            next_a.append(v)
            return True
        return False

    def try_b(v: int, next_b: list) -> bool:
        threshold = q_ba if adopted_a[v] else q_b0
        if not adopted_b[v] and world.alpha_b[v] <= threshold:
            adopted_b[v] = True
            next_b.append(v)
            return True
        return False

    while frontier_a or frontier_b:
        reach_a = _neighbors(world, frontier_a)
        reach_b = _neighbors(world, frontier_b)
        new_a = set(int(v) for v in reach_a[~informed_a[reach_a]])
        new_b = set(int(v) for v in reach_b[~informed_b[reach_b]])
        informed_a[list(new_a)] = True
        informed_b[list(new_b)] = True
        next_a: List[int] = []
        next_b: List[int] = []
        for v in sorted(new_a | new_b):
            steps = ("A", "B") if world.a_first[v] else ("B", "A")
            for item in steps:
                if item == "A" and v in new_a:
                    # 采纳 A 后重新考虑此前已知但未采纳的 B
                    if try_a(v, next_a) and informed_b[v] and v not in new_b:
                        try_b(v, next_b)
                elif item == "B" and v in new_b:
                    if try_b(v, next_b) and informed_a[v] and v not in new_a:
                        try_a(v, next_a)
            # 同一轮同时获知两种观点时，后决策的采纳也会触发对先决策者的重新考虑
            if v in new_a and v in new_b:
                if adopted_b[v] and not adopted_a[v]:
                    try_a(v, next_a)
                if adopted_a[v] and not adopted_b[v]:
                    try_b(v, next_b)
        frontier_a, frontier_b = next_a, next_b
    return int(adopted_b.sum())


def expected_b_adoption(instance: ProblemInstance, x: np.ndarray) -> float:
    """候选集中 x 选中的节点作为 B 的种子，返回所有冻结模拟世界上 B 采纳数的均值"""
    params = instance.params
    seeds_b = params.candidates[np.flatnonzero(x)]
    worlds = _worlds(instance)
    total = sum(simulate_world(params, world, seeds_b) for world in worlds)
    return float(total) / len(worlds)
