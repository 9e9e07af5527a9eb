"""
门控网络训练服务
训练实例的目标值归一化、多样性度量、门控目标函数 (Max / Mean / MaxDiv / MeanDiv) 以及 PGPE 训练与持久化
"""
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from models.experience_model import GATING_VARIANTS, ExperienceRepository, GatingModel, PgpeConfig
from models.neural_model import FinetuneConfig, MlpParams
from models.population_model import BudgetMeter, InitResult, MpiConfig
from models.problem_model import ProblemInstance, random_solutions
from services.neural_network import init_mlp
from services.pgpe_optimizer import pgpe_optimize
from services.problem_service import evaluate
from services.transfer_service import mpi_initialize
from utils.exceptions import FingerprintMismatchError, PayloadError, ValidationError
from utils.logger import log_info
from utils.seeding import derive_rng
from utils.weight_codec import decode_mlps, encode_mlps

GATING_MANIFEST_SUFFIX = ".json"


@dataclass(frozen=True)
class GatingTrainingInstance:
    """门控训练实例及其随机采样估计的目标值范围"""
    instance: ProblemInstance
    f_min: float
    f_max: float


def estimate_range(instance: ProblemInstance, samples: int, rng: np.random.Generator) -> GatingTrainingInstance:
    """随机采样估计 f_min / f_max（离线，不计入预算）"""
    if samples < 1:
        raise ValidationError(f"归一化采样数必须 ≥ 1，当前 {samples}", field="gating.normalization_samples")
    values = np.array([evaluate(instance, x) for x in random_solutions(rng, samples, instance.dim)])
    return GatingTrainingInstance(instance, float(values.min()), float(values.max()))


def prepare_training_instances(instances: Sequence[ProblemInstance], samples: int,
                               seed: int = 0) -> List[GatingTrainingInstance]:
    prepared = []
    for instance in instances:
        item = estimate_range(instance, samples, derive_rng("gating-range", instance.instance_id, seed))
        log_info(f"门控训练实例 {instance.instance_id}: f_min={item.f_min:.6g}, f_max={item.f_max:.6g}")
        prepared.append(item)
    return prepared


def normalize_objective(value, f_min: float, f_max: float):
    """(f − f_min) / (f_max − f_min)；范围退化时分母取 1"""
    span = f_max - f_min
    if span == 0:
        span = 1.0
    return (np.asarray(value, dtype=np.float64) - f_min) / span


def diversity(x: np.ndarray) -> float:
    """(1 / (|X|²·d)) ΣΣ ‖x1 − x2‖₁"""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        return 0.0
    count, dim = x.shape
    ones = x.sum(axis=0)
    # 每一维上不同比特的有序对数为 2·ones·zeros
    pair_diffs = 2.0 * ones * (count - ones)
    return float(pair_diffs.sum() / (count * count * dim))


def build_gating_net(n: int, rng: np.random.Generator, hidden_factor: int = 2) -> MlpParams:
    """门控网络结构：3n -> 2n (relu) -> n"""
    return init_mlp([3 * n, hidden_factor * n, n], ["relu", "identity"], rng)


def generated_set(result: InitResult) -> Tuple[np.ndarray, np.ndarray]:
    """门控目标的评分集合：迁移生成与插值的解；两者皆无时退回整个初始种群"""
    members = result.transferred or result.population
    solutions = np.array([m.solution for m in members], dtype=np.uint8)
    return solutions, np.array([m.objective for m in members], dtype=np.float64)


def _aggregate(values: np.ndarray, solutions: np.ndarray, variant: str) -> float:
    base = float(values.max()) if variant.startswith("Max") else float(values.mean())
    if variant.endswith("Div"):
        base += diversity(solutions)
    return base


def gating_objective(weights: np.ndarray, repository: ExperienceRepository,
                     training: Sequence[GatingTrainingInstance], variant: str = "Max",
                     mpi_config: MpiConfig = None, finetune_config: FinetuneConfig = None,
                     seed: int = 0, template: Optional[MlpParams] = None, workers: int = 1) -> float:
    """用给定门控权重在每个训练实例上运行在线流程，按变体聚合归一化目标值后求和"""
    if variant not in GATING_VARIANTS:
        raise ValidationError(f"未知的门控目标变体: {variant}", field="gating.variant")
    if not training:
        raise ValidationError("门控训练实例集合不能为空", field="S_G")
    mpi_config = mpi_config or MpiConfig()
    template = template or build_gating_net(repository.n, np.random.default_rng(0))
    net = template.with_flat(weights)

    def run(item: GatingTrainingInstance) -> float:
        # 每次调用使用相同的种子（公共随机数），候选权重之间可比
        rng = derive_rng("gating-objective", item.instance.instance_id, seed)
        meter = BudgetMeter(mpi_config.planned_fes + 10 * mpi_config.p + mpi_config.p)
        result = mpi_initialize(item.instance, repository, None, mpi_config, meter, rng,
                                finetune_config, gating_net=net)
        solutions, objectives = generated_set(result)
        return _aggregate(normalize_objective(objectives, item.f_min, item.f_max), solutions, variant)

    if workers > 1 and len(training) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            parts = list(executor.map(run, training))
    else:
        parts = [run(item) for item in training]
    return float(sum(parts))


def train_gating(repository: ExperienceRepository, training: Sequence[GatingTrainingInstance],
                 variant: str = "Max", pgpe_config: PgpeConfig = None, mpi_config: MpiConfig = None,
                 finetune_config: FinetuneConfig = None, seed: int = 0, hidden_factor: int = 2) -> GatingModel:
    """用 PGPE 在扁平化的门控网络参数上最大化门控目标"""
    if not training:
        raise ValidationError("门控训练实例集合不能为空", field="S_G")
    pgpe_config = pgpe_config or PgpeConfig()
    template = build_gating_net(repository.n, derive_rng("gating-template", seed), hidden_factor)
    log_info(f"开始训练门控网络: n={repository.n}, |S_G|={len(training)}, 变体 {variant}, "
             f"参数量 {template.num_params}")

    def objective(weights: np.ndarray) -> float:
        return gating_objective(weights, repository, training, variant, mpi_config, finetune_config,
                                seed, template)

    result = pgpe_optimize(objective, template.num_params, pgpe_config, derive_rng("pgpe", seed),
                           label="门控 PGPE")
    return GatingModel(template.with_flat(result.best_weights), repository.n, repository.fingerprint,
                       variant, result.best_value)


def save_gating(model: GatingModel, path: str) -> str:
    """写入 XFW1 权重以及记录 n 与经验库指纹的清单"""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        f.write(encode_mlps([model.net]))
    manifest = {
        "n": model.n,
        "repository_fingerprint": model.repository_fingerprint,
        "variant": model.variant,
        "best_value": model.best_value,
    }
    with open(path + GATING_MANIFEST_SUFFIX, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=4, ensure_ascii=False)
    log_info(f"门控网络已保存: {path}")
    return path


def load_gating(path: str, repository: Optional[ExperienceRepository] = None) -> GatingModel:
    """读取门控网络；提供经验库时校验指纹"""
    manifest_path = path + GATING_MANIFEST_SUFFIX
    if not os.path.exists(path) or not os.path.exists(manifest_path):
        raise PayloadError(f"门控网络文件或清单不存在: {path}", path=path)
    with open(path, "rb") as f:
        mlps = decode_mlps(f.read(), "门控网络权重")
    if len(mlps) != 1:
        raise PayloadError(f"门控网络文件应只包含 1 个网络，实际 {len(mlps)}", path=path)
    with open(manifest_path, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    model = GatingModel(mlps[0], int(manifest["n"]), manifest.get("repository_fingerprint", ""),
                        manifest.get("variant", "Max"), float(manifest.get("best_value", float("nan"))))
    if repository is not None:
        if model.n != repository.n or model.repository_fingerprint != repository.fingerprint:
            raise FingerprintMismatchError(
                f"门控网络 {path} 与当前经验库不匹配",
                expected=model.repository_fingerprint, found=repository.fingerprint
            )
    return model
