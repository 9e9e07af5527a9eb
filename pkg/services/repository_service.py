"""
经验库服务（离线阶段）
在已求解实例上采样经验、逐实例训练代理模型，并持久化经验库
"""
import dataclasses
import json
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence

import numpy as np

from models.experience_model import ExperienceRecord, ExperienceRepository
from models.neural_model import TrainConfig
from models.population_model import BudgetMeter
from models.problem_model import EvaluatedSample, ProblemInstance, random_solutions
from services.vae_trainer import normalize_objectives, train_vae
from utils.exceptions import FormatVersionError, PayloadError, RepositoryError, ValidationError
from utils.logger import log_info
from utils.seeding import derive_rng, derive_seed
from utils.weight_codec import decode_samples, decode_surrogate, encode_samples, encode_surrogate

MANIFEST_NAME = "manifest.toml"
MANIFEST_VERSION = 1


def collect_experience(instance: ProblemInstance, m_samples: int, rng: np.random.Generator,
                       meter: Optional[BudgetMeter] = None) -> List[EvaluatedSample]:
    """均匀采样 m 个解，修复后评估；存储修复后的解与目标值"""
    if m_samples < 1:
        raise ValidationError(f"采样数量必须 ≥ 1，当前 {m_samples}", field="m_samples")
    meter = meter or BudgetMeter(m_samples)
    raw = random_solutions(rng, m_samples, instance.dim)
    return [meter.evaluate(instance, x) for x in raw]


def build_record(instance: ProblemInstance, m_samples: int, train_config: TrainConfig,
                 seed: int = 0) -> ExperienceRecord:
    """为单个实例采样并训练一条经验记录"""
    meter = BudgetMeter(m_samples)
    samples = collect_experience(instance, m_samples, derive_rng("collect", instance.instance_id, seed), meter)
    solutions = np.array([s.solution for s in samples], dtype=np.uint8)
    objectives = np.array([s.objective for s in samples], dtype=np.float64)
    y_norm, y_min, y_max = normalize_objectives(objectives)
    config = dataclasses.replace(train_config, seed=derive_seed("train", instance.instance_id, train_config.seed, seed))
    result = train_vae(solutions, y_norm, config, instance_id=instance.instance_id)
    return ExperienceRecord(instance.instance_id, instance.dim, instance.class_tag.value,
                            solutions, objectives, result.surrogate, y_min, y_max)


def build_repository(instances: Sequence[ProblemInstance], m_per_instance: int,
                     train_config: TrainConfig = None, seed: int = 0, workers: int = 1) -> ExperienceRepository:
    """离线构建经验库：每个实例一条记录，顺序与输入一致"""
    if not instances:
        raise ValidationError("构建经验库至少需要一个实例", field="instances")
    train_config = train_config or TrainConfig()
    log_info(f"开始构建经验库: {len(instances)} 个实例, 每实例 {m_per_instance} 个样本")

    def job(instance: ProblemInstance) -> ExperienceRecord:
        return build_record(instance, m_per_instance, train_config, seed)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            records = list(executor.map(job, instances))
    else:
        records = [job(instance) for instance in instances]

    manifest = {
        "version": MANIFEST_VERSION,
        "m_per_instance": int(m_per_instance),
        "seed": int(seed),
    }
    repository = ExperienceRepository(records, manifest)
    log_info(f"经验库构建完成: n={repository.n}, 指纹 {repository.fingerprint[:12]}")
    return repository


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return json.dumps(str(value), ensure_ascii=False)


def _manifest_text(repository: ExperienceRepository) -> str:
    lines = [f"version = {MANIFEST_VERSION}", f"n = {repository.n}",
             f"fingerprint = {_toml_value(repository.fingerprint)}"]
    for key in sorted(repository.manifest):
        if key not in ("version", "n", "fingerprint"):
            lines.append(f"{key} = {_toml_value(repository.manifest[key])}")
    for index, record in enumerate(repository.records):
        lines.extend([
            "",
            "[[records]]",
            f"index = {index}",
            f"id = {_toml_value(record.record_id)}",
            f"dim = {record.source_dim}",
            f"class = {_toml_value(record.class_tag)}",
            f"count = {record.size}",
            f"weights = {_toml_value(f'rec_{index}.weights')}",
            f"samples = {_toml_value(f'rec_{index}.samples')}",
            f"y_min = {_toml_value(record.y_min)}",
            f"y_max = {_toml_value(record.y_max)}",
        ])
    return "\n".join(lines) + "\n"


def save_repository(repository: ExperienceRepository, path: str) -> str:
    """写入清单与逐记录的权重/样本二进制文件"""
    os.makedirs(path, exist_ok=True)
    for index, record in enumerate(repository.records):
        with open(os.path.join(path, f"rec_{index}.weights"), "wb") as f:
            f.write(encode_surrogate(record.surrogate))
        with open(os.path.join(path, f"rec_{index}.samples"), "wb") as f:
            f.write(encode_samples(record.solutions, record.objectives))
    with open(os.path.join(path, MANIFEST_NAME), "w", encoding="utf-8", newline="\n") as f:
        f.write(_manifest_text(repository))
    log_info(f"经验库已保存到 {path} (n={repository.n})")
    return path


def _read_blob(path: str, record_id: str) -> bytes:
    if not os.path.exists(path):
        raise RepositoryError(f"记录 {record_id} 的文件缺失: {path}", record=record_id,
                              suggestions=["重新运行 build-repo 生成完整的经验库"])
    with open(path, "rb") as f:
        return f.read()


def load_repository(path: str) -> ExperienceRepository:
    """读取经验库目录；记录顺序与保存时一致"""
    manifest_path = os.path.join(path, MANIFEST_NAME)
    if not os.path.exists(manifest_path):
        raise RepositoryError(f"经验库清单不存在: {manifest_path}")
    try:
        with open(manifest_path, "rb") as f:
            manifest = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise RepositoryError(f"经验库清单格式错误: {e}")

    version = manifest.get("version")
    if version != MANIFEST_VERSION:
        raise FormatVersionError(f"经验库版本不匹配: {version}，期望 {MANIFEST_VERSION}",
                                 expected=MANIFEST_VERSION, found=version)
    entries = manifest.get("records", [])
    n = manifest.get("n")
    if n != len(entries):
        raise RepositoryError(f"清单声明 n={n}，实际记录条目 {len(entries)}")
    records = []
    for entry in sorted(entries, key=lambda e: e["index"]):
        record_id = entry["id"]
        try:
            surrogate = decode_surrogate(_read_blob(os.path.join(path, entry["weights"]), record_id),
                                         f"记录 {record_id} 权重")
            solutions, objectives = decode_samples(_read_blob(os.path.join(path, entry["samples"]), record_id),
                                                   f"记录 {record_id} 样本")
        except PayloadError as e:
            raise RepositoryError(f"记录 {record_id} 损坏: {e}", record=record_id)
        records.append(ExperienceRecord(record_id, int(entry["dim"]), entry["class"], solutions, objectives,
                                        surrogate, float(entry["y_min"]), float(entry["y_max"])))

    extra: Dict[str, object] = {k: v for k, v in manifest.items() if k not in ("records",)}
    repository = ExperienceRepository(records, extra)
    expected = manifest.get("fingerprint")
    if expected and expected != repository.fingerprint:
        raise RepositoryError(f"经验库指纹不一致: 清单 {expected[:12]}，实际 {repository.fingerprint[:12]}",
                              suggestions=["经验库文件可能被修改，请重新生成"])
    log_info(f"经验库已加载: {path} (n={repository.n})")
    return repository
