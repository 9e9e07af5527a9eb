"""
经验迁移服务（在线阶段）
探测新实例 -> 选择经验 -> 按秩对齐样本对微调解码器 -> 生成候选 -> 插值 -> 组装初始种群
"""
import dataclasses
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from models.experience_model import ExperienceRecord, ExperienceRepository, GatingModel
from models.neural_model import FinetuneConfig, VaeSurrogate
from models.population_model import BudgetMeter, InitResult, MpiConfig, PopulationMember, Provenance
from models.problem_model import ProblemInstance, random_solutions, to_bitstring
from services.experience_selection import compute_features, gating_scores, select_topk
from services.neural_network import decode, predict_scores
from services.vae_trainer import finetune_decoder
from utils.exceptions import FingerprintMismatchError, ValidationError
from utils.logger import log_debug, log_info

ABLATION_VARIANTS = ("NoGating", "NoTransfer", "NoInterpolation")


def probe(instance: ProblemInstance, e: int, meter: BudgetMeter,
          rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """随机采样 e 个解并评估（每个计 1 次 FE）"""
    meter.require(e, "探测")
    if e == 0:
        return np.zeros((0, instance.dim), dtype=np.uint8), np.zeros(0)
    samples = [meter.evaluate(instance, x) for x in random_solutions(rng, e, instance.dim)]
    return (np.array([s.solution for s in samples], dtype=np.uint8),
            np.array([s.objective for s in samples], dtype=np.float64))


def partition_indices(y: np.ndarray, e_l: int) -> List[np.ndarray]:
    """按目标值把下标划分为 e_l 个子集（降序；同值同组）"""
    y = np.asarray(y, dtype=np.float64)
    keys, inverse = np.unique(y, return_inverse=True)
    keys_desc = keys[::-1]
    groups = [np.flatnonzero(inverse == len(keys) - 1 - j) for j in range(len(keys))]
    total_groups = len(keys_desc)
    if e_l < 1 or e_l > total_groups:
        raise ValidationError(f"子集数 e_l={e_l} 必须位于 [1, {total_groups}] (不同目标值个数)", field="e_l")

    subsets: List[List[int]] = [[] for _ in range(e_l)]
    i, m = 1, 0
    for j, group in enumerate(groups, start=1):
        size = len(group)
        c1 = (e_l - j < total_groups - i) and (i < total_groups)
        c2 = (total_groups * i / e_l - m <= 2 * size / 3) and (i < e_l)
        if subsets[i - 1] and (c1 or c2):
            # 前进到下一个子集（不超过 e_l），当前组放入新子集
            i = min(i + 1, e_l)
        subsets[i - 1].extend(group.tolist())
        m += size
    return [np.array(s, dtype=np.int64) for s in subsets]


def partition_by_fitness(x: np.ndarray, y: np.ndarray, e_l: int) -> List[np.ndarray]:
    """按目标值划分解集，返回 e_l 个解子集（降序）"""
    x = np.asarray(x)
    return [x[idx] for idx in partition_indices(y, e_l)]


def build_finetune_pairs(record: ExperienceRecord, x_new: np.ndarray, y_new: np.ndarray,
                         rng: np.random.Generator, source_factor: int = 4) -> Tuple[np.ndarray, np.ndarray]:
    """构造秩对齐的笛卡尔积样本对 (x_in 来自源经验, x_out 来自新实例)"""
    x_new = np.asarray(x_new, dtype=np.uint8)
    y_new = np.asarray(y_new, dtype=np.float64)
    wanted = source_factor * x_new.shape[0]
    if record.size > wanted:
        chosen = np.sort(rng.choice(record.size, size=wanted, replace=False))
    else:
        chosen = np.arange(record.size)
    x_src, y_src = record.solutions[chosen], record.objectives[chosen]

    unique_new, unique_src = np.unique(y_new).size, np.unique(y_src).size
    e_l = min(unique_new, unique_src)
    if e_l < 1:
        raise ValidationError(f"记录 {record.record_id} 或新实例没有可用的目标值", field="pairs")
    src_parts = partition_indices(y_src, e_l)
    tgt_parts = partition_indices(y_new, e_l)

    x_in, x_out = [], []
    for s_idx, t_idx in zip(src_parts, tgt_parts):
        x_in.append(np.repeat(x_src[s_idx], len(t_idx), axis=0))
        x_out.append(np.tile(x_new[t_idx], (len(s_idx), 1)))
    return np.concatenate(x_in, axis=0), np.concatenate(x_out, axis=0)


def generate_candidates(surrogate: VaeSurrogate, q: int, sample_count: int, rng: np.random.Generator,
                        chunk_size: int = 8192) -> np.ndarray:
    """随机输入经解码器生成解，二值化后按预测得分取前 q 个互不相同的解；不足时随机补齐"""
    if sample_count < q:
        raise ValidationError(f"sample_count={sample_count} 不能小于 q={q}", field="candidate_sample_count")
    inputs = random_solutions(rng, sample_count, surrogate.input_dim)
    scores = predict_scores(surrogate, inputs, chunk_size)
    order = np.argsort(-scores, kind="stable")

    chosen: List[np.ndarray] = []
    seen = set()
    # 按得分顺序分块解码，凑够 q 个互不相同的解即停止
    for start in range(0, order.shape[0], chunk_size):
        block = order[start:start + chunk_size]
        binary = (decode(surrogate, inputs[block], chunk_size) >= 0.5).astype(np.uint8)
        for row in binary:
            key = row.tobytes()
            if key not in seen:
                seen.add(key)
                chosen.append(row)
                if len(chosen) == q:
                    return np.array(chosen, dtype=np.uint8)

    while len(chosen) < q:
        row = random_solutions(rng, 1, surrogate.output_dim)[0]
        key = row.tobytes()
        if key not in seen or len(seen) >= 2 ** surrogate.output_dim:
            seen.add(key)
            chosen.append(row)
    return np.array(chosen, dtype=np.uint8)


def _split_pools(y: np.ndarray, elite_fraction: float) -> Tuple[np.ndarray, np.ndarray]:
    order = np.argsort(-np.asarray(y), kind="stable")
    elite_count = max(1, int(np.floor(elite_fraction * len(order))))
    return order[:elite_count], order[elite_count:]


def interpolation_child(parents: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """一致维度直接继承，其余维度以父代均值为概率取 1"""
    parents = np.asarray(parents, dtype=np.uint8)
    mean = parents.mean(axis=0)
    unanimous = np.all(parents == parents[0], axis=0)
    r = rng.random(parents.shape[1])
    child = (r < mean).astype(np.uint8)
    child[unanimous] = parents[0, unanimous]
    return child


def interpolation_children(x: np.ndarray, y: np.ndarray, q_m: int, instance: ProblemInstance,
                           meter: BudgetMeter, rng: np.random.Generator,
                           elite_fraction: float = 0.10) -> Tuple[np.ndarray, np.ndarray]:
    """生成并评估 q_m 个插值子代"""
    x = np.asarray(x, dtype=np.uint8)
    elite, mediocre = _split_pools(y, elite_fraction)
    if len(mediocre) < 2:
        raise ValidationError(f"插值需要至少 2 个普通解，当前解集大小 {len(x)}", field="X")
    meter.require(q_m, "插值")
    children, values = [], []
    for _ in range(q_m):
        if len(elite) >= 2:
            p_e = rng.choice(elite, size=2, replace=False)
        else:
            p_e = np.repeat(elite, 2)
        p_m = rng.choice(mediocre, size=2, replace=False)
        child = interpolation_child(x[np.concatenate([p_e, p_m])], rng)
        sample = meter.evaluate(instance, child)
        children.append(sample.solution)
        values.append(sample.objective)
    return (np.array(children, dtype=np.uint8).reshape(q_m, instance.dim),
            np.array(values, dtype=np.float64))


def interpolate(x: np.ndarray, y: np.ndarray, q_m: int, instance: ProblemInstance, meter: BudgetMeter,
                rng: np.random.Generator, elite_fraction: float = 0.10) -> Tuple[np.ndarray, np.ndarray]:
    """插值算子：追加 q_m 个子代后按目标值降序返回全部解"""
    children, values = interpolation_children(x, y, q_m, instance, meter, rng, elite_fraction)
    x_all = np.concatenate([np.asarray(x, dtype=np.uint8), children], axis=0)
    y_all = np.concatenate([np.asarray(y, dtype=np.float64), values])
    order = np.argsort(-y_all, kind="stable")
    return x_all[order], y_all[order]


def check_gating(repository: ExperienceRepository, gating: Optional[GatingModel]) -> None:
    if gating is None:
        return
    if gating.n != repository.n:
        raise FingerprintMismatchError(f"门控网络输出 n={gating.n} 与经验库 n={repository.n} 不一致")
    if gating.repository_fingerprint and gating.repository_fingerprint != repository.fingerprint:
        raise FingerprintMismatchError(
            "门控网络并非基于当前经验库训练",
            expected=gating.repository_fingerprint, found=repository.fingerprint
        )


def select_experiences(repository: ExperienceRepository, gating: Optional[GatingModel], x_new: np.ndarray,
                       y_new: np.ndarray, k: int, rng: np.random.Generator, random_selection: bool = False,
                       gating_net=None) -> List[int]:
    """由门控网络（或随机）选出 k 条经验"""
    if k > repository.n:
        raise ValidationError(f"k={k} 超过经验库大小 n={repository.n}", field="mpi.k")
    if random_selection:
        return [int(i) for i in rng.choice(repository.n, size=k, replace=False)]
    features = compute_features(repository, x_new, y_new)
    if gating_net is not None:
        from services.neural_network import mlp_predict
        scores = mlp_predict(gating_net, features[None, :])[0]
    elif gating is not None:
        scores = gating_scores(gating, features)
    else:
        raise ValidationError("未提供门控网络，无法选择经验", field="gating")
    return select_topk(scores, k)


def transfer_experience(record: ExperienceRecord, x_new: np.ndarray, y_new: np.ndarray, target_dim: int,
                        config: MpiConfig, finetune_config: FinetuneConfig,
                        rng: np.random.Generator) -> np.ndarray:
    """单条经验的迁移：构造样本对、微调解码器、生成 q 个候选"""
    x_in, x_out = build_finetune_pairs(record, x_new, y_new, rng, config.source_sample_factor)
    tuned_config = dataclasses.replace(finetune_config, seed=int(rng.integers(0, 2 ** 63)))
    tuned, history = finetune_decoder(record.surrogate, x_in, x_out, target_dim, tuned_config)
    log_debug(f"经验 {record.record_id} 微调: {len(x_in)} 个样本对, 损失 {history[0]:.4f} -> {history[-1]:.4f}")
    return generate_candidates(tuned, config.q, config.candidate_sample_count, rng)


def generate_transferred(repository: ExperienceRepository, selected: Sequence[int], x_new: np.ndarray,
                         y_new: np.ndarray, target_dim: int, config: MpiConfig, finetune_config: FinetuneConfig,
                         stream_seed: int) -> List[np.ndarray]:
    """对选中的每条经验独立生成候选；每条经验使用派生的随机流，结果按选择顺序返回"""
    def job(position: int) -> np.ndarray:
        index = selected[position]
        stream = np.random.default_rng([stream_seed, position, index])
        return transfer_experience(repository.records[index], x_new, y_new, target_dim, config,
                                   finetune_config, stream)

    if config.workers > 1 and len(selected) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as executor:
            return list(executor.map(job, range(len(selected))))
    return [job(position) for position in range(len(selected))]


def _assemble(members: List[PopulationMember], p: int, instance: ProblemInstance, meter: BudgetMeter,
              rng: np.random.Generator) -> List[PopulationMember]:
    """去重、必要时用随机解补齐，并取目标值最高的 p 个"""
    unique: Dict[bytes, PopulationMember] = {}
    for member in members:
        key = member.solution.tobytes()
        if key not in unique:
            unique[key] = member
    attempts = 0
    while len(unique) < p:
        sample = meter.evaluate(instance, random_solutions(rng, 1, instance.dim)[0])
        attempts += 1
        key = sample.solution.tobytes()
        # 可行域过小时允许重复，避免无限循环
        if key not in unique:
            unique[key] = PopulationMember(sample.solution, sample.objective, Provenance.RANDOM)
        elif attempts > 10 * p:
            unique[key + attempts.to_bytes(4, "little")] = PopulationMember(
                sample.solution, sample.objective, Provenance.RANDOM)
    ordered = sorted(unique.values(), key=lambda m: -m.objective)
    return ordered[:p]


def mpi_initialize(instance: ProblemInstance, repository: ExperienceRepository, gating: Optional[GatingModel],
                   config: MpiConfig, meter: BudgetMeter, rng: np.random.Generator,
                   finetune_config: FinetuneConfig = None, variant: Optional[str] = None,
                   gating_net=None) -> InitResult:
    """完整的在线初始种群生成流程（variant 为消融变体名或 None）"""
    finetune_config = finetune_config or FinetuneConfig()
    if variant is not None and variant not in ABLATION_VARIANTS:
        raise ValidationError(f"未知的消融变体: {variant}", field="variant")
    q_m = 0 if variant == "NoInterpolation" else config.q_m
    meter.require(config.e + config.k * config.q + q_m, "MPI 初始化")
    if gating_net is None and variant != "NoGating":
        check_gating(repository, gating)
    start = meter.used

    x_new, y_new = probe(instance, config.e, meter, rng)
    members = [PopulationMember(x, y, Provenance.PROBE) for x, y in zip(x_new, y_new)]
    log_debug(f"[{instance.instance_id}] 探测完成: {config.e} FEs")

    selected: List[int] = []
    if variant == "NoTransfer":
        rx, ry = probe(instance, config.k * config.q, meter, rng)
        members.extend(PopulationMember(x, y, Provenance.RANDOM) for x, y in zip(rx, ry))
    else:
        selected = select_experiences(repository, gating, x_new, y_new, config.k, rng,
                                      random_selection=(variant == "NoGating"), gating_net=gating_net)
        stream_seed = int(rng.integers(0, 2 ** 63))
        candidates = generate_transferred(repository, selected, x_new, y_new, instance.dim, config,
                                          finetune_config, stream_seed)
        # 候选按经验顺序串行评估，预算不足时确定性截断
        for block in candidates:
            for x in block:
                sample = meter.evaluate(instance, x)
                members.append(PopulationMember(sample.solution, sample.objective, Provenance.GENERATED))
    log_debug(f"[{instance.instance_id}] 候选生成完成: 选中经验 {selected}, 累计 {meter.used - start} FEs")

    if q_m > 0:
        pool_x = np.array([m.solution for m in members], dtype=np.uint8)
        pool_y = np.array([m.objective for m in members], dtype=np.float64)
        children, values = interpolation_children(pool_x, pool_y, q_m, instance, meter, rng, config.elite_fraction)
        members.extend(PopulationMember(x, y, Provenance.INTERPOLATED) for x, y in zip(children, values))

    transferred = [m for m in members if m.provenance in (Provenance.GENERATED, Provenance.INTERPOLATED)]
    population = _assemble(members, config.p, instance, meter, rng)
    result = InitResult(population, meter.used - start, selected, transferred)
    log_info(f"[{instance.instance_id}] 初始种群生成完成 ({variant or 'MPI'}): {result.fes_consumed} FEs, "
             f"最优 {population[0].objective:.6g}")
    return result


def ablation_initialize(variant: str, instance: ProblemInstance, repository: ExperienceRepository,
                        gating: Optional[GatingModel], config: MpiConfig, meter: BudgetMeter,
                        rng: np.random.Generator, finetune_config: FinetuneConfig = None) -> InitResult:
    """消融变体：NoGating / NoTransfer / NoInterpolation"""
    if variant not in ABLATION_VARIANTS:
        raise ValidationError(f"未知的消融变体: {variant}", field="variant")
    return mpi_initialize(instance, repository, gating, config, meter, rng, finetune_config, variant)


def population_lines(result: InitResult) -> Tuple[List[str], List[str]]:
    """种群文本行（比特串 + 目标值）与来源标签行"""
    lines = [f"{to_bitstring(m.solution)} {m.objective!r}" for m in result.population]
    tags = [m.provenance.value for m in result.population]
    return lines, tags
