"""
应用程序配置管理模块
"""
import copy
import json
import os
from dataclasses import fields
from typing import Any, Dict

from models.experience_model import GATING_VARIANTS, PgpeConfig
from models.neural_model import FinetuneConfig, TrainConfig
from models.population_model import BrkgaConfig, GaEliteConfig, MpiConfig, SvmSsConfig
from models.problem_model import ExternalParams, ProblemClass, ProblemInstance
from utils.exceptions import ConfigurationError, ValidationError


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_merge(base[key], value)
        else:
            base[key] = copy.deepcopy(value)
    return base


class AppConfig:
    """应用程序配置管理类"""

    # 应用程序基本信息
    APP_NAME = "XferInit"
    APP_VERSION = "1.0.0"

    # 默认配置
    DEFAULT_CONFIG = {
        "log_level": "INFO",
        "workers": 1,
        "problems": {
            "cim_simulations": 100,    # CIM 蒙特卡洛模拟次数
            "cim_node_factor": 5,      # |V| = factor × d
            "cim_seed_fraction": 0.05,
            "external_timeout": 30.0,  # 外部评估器单次应答超时（秒）
        },
        "external_instances": {},      # 名称 -> {dim, command, env, timeout}
        "train": {
            "learning_rate": 1e-2,
            "epochs": 300,
            "batch_size": 32,
            "score_weight": 1.0,
            "kl_weight": 1e-3,
            "momentum": 0.9,
            "clip_norm": 1.0,
            "hidden_activation": "relu",
        },
        "finetune": {
            "learning_rate": 1e-2,
            "epochs": 200,
            "batch_size": 32,
            "momentum": 0.9,
            "clip_norm": 1.0,
            "init_std": 0.01,
        },
        "repository": {
            "m_per_instance": 2000,
        },
        "mpi": {
            "e": 64,
            "k": 12,
            "q": 4,
            "q_m": 20,
            "p": 20,
            "candidate_sample_count": 100000,
            "elite_fraction": 0.10,
            "source_sample_factor": 4,
        },
        "pgpe": {
            "sigma_init": 0.1,
            "alpha_mu": 0.01,
            "alpha_sigma": 0.2,
            "sigma_limit": 0.01,
            "half_population": 16,
            "max_iter": 50,
        },
        "gating": {
            "hidden_factor": 2,
            "normalization_samples": 1000,
            "variant": "Max",
            "profile": "gating-training",   # 训练门控时叠加的配置方案
        },
        "ga_elite": {
            "pop_size": 20,
            "elites": 1,
            "offspring": 20,
            "mutation_rate": 0.001,
        },
        "brkga": {
            "pop_size": 20,
            "elites": 4,
            "crossover_offspring": 14,
            "mutants": 2,
            "elite_bias": 0.7,
        },
        "svmss": {
            "initial": 20,
            "pool_size": 200,
            "budget": 132,
            "regularization": 1e-3,
        },
        "bench": {
            "budget": 800,
            "sweep": [],
            "repetitions": 30,
            "alpha": 0.05,
        },
    }

    def __init__(self, config_file: str = "config.json"):
        self.config_file = config_file
        self.config = copy.deepcopy(self.DEFAULT_CONFIG)
        self.load_config()

    def load_config(self) -> None:
        """加载配置文件（与默认配置深度合并）"""
        if not self.config_file or not os.path.exists(self.config_file):
            return
        try:
            with open(self.config_file, 'r', encoding='utf-8') as f:
                loaded_config = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"加载配置文件失败: {self.config_file}: {e}", field="config_file",
                                     suggestions=["检查 config.json 是否为合法的 UTF-8 JSON"])
        if not isinstance(loaded_config, dict):
            raise ConfigurationError("配置文件顶层必须是 JSON 对象", field="config_file")
        _deep_merge(self.config, loaded_config)

    def save_config(self) -> None:
        """保存配置文件"""
        with open(self.config_file, 'w', encoding='utf-8') as f:
            json.dump(self.config, f, indent=4, ensure_ascii=False)

    def get(self, key: str, default: Any = None) -> Any:
        """获取配置项，支持 "mpi.e" 形式的点分键"""
        node: Any = self.config
        for part in key.split("."):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node

    def set(self, key: str, value: Any) -> None:
        """设置配置项"""
        parts = key.split(".")
        node = self.config
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"配置项 {part} 不是分组，无法设置 {key}", field=key)
        node[parts[-1]] = value

    def update(self, config_dict: Dict[str, Any]) -> None:
        """批量更新配置（嵌套字典深度合并）"""
        _deep_merge(self.config, config_dict)

    def apply_profile(self, name: str) -> None:
        """叠加命名的配置方案"""
        from config.experiment_profiles import ExperimentProfiles
        profiles = ExperimentProfiles.get_all_profiles()
        if name not in profiles:
            raise ConfigurationError(f"未知的配置方案: {name}", field="profile",
                                     suggestions=[f"可用方案: {', '.join(sorted(profiles))}"])
        self.update(profiles[name]["overrides"])

    # 类型化访问
    def _section(self, name: str, config_type, **extra):
        section = dict(self.get(name, {}) or {})
        section.update(extra)
        known = {f.name for f in fields(config_type)}
        unknown = sorted(set(section) - known)
        if unknown:
            raise ConfigurationError(f"配置分组 {name} 含未知字段: {', '.join(unknown)}", field=f"{name}.{unknown[0]}")
        try:
            return config_type(**section)
        except (TypeError, ValidationError) as e:
            field_name = getattr(e, "field", None) or name
            raise ConfigurationError(f"配置分组 {name} 无效: {e}", field=field_name)

    def workers(self) -> int:
        value = self.get("workers", 1)
        if not isinstance(value, int) or value < 1:
            raise ConfigurationError(f"workers 必须为正整数，当前 {value!r}", field="workers")
        return value

    def train_config(self, seed: int = 0) -> TrainConfig:
        return self._section("train", TrainConfig, seed=seed)

    def finetune_config(self, seed: int = 0) -> FinetuneConfig:
        return self._section("finetune", FinetuneConfig, seed=seed)

    def mpi_config(self) -> MpiConfig:
        return self._section("mpi", MpiConfig, workers=self.workers())

    def pgpe_config(self) -> PgpeConfig:
        return self._section("pgpe", PgpeConfig, workers=self.workers())

    def ga_elite_config(self) -> GaEliteConfig:
        return self._section("ga_elite", GaEliteConfig)

    def brkga_config(self) -> BrkgaConfig:
        return self._section("brkga", BrkgaConfig)

    def svmss_config(self) -> SvmSsConfig:
        return self._section("svmss", SvmSsConfig)

    def m_per_instance(self) -> int:
        value = self.get("repository.m_per_instance")
        if not isinstance(value, int) or value < 1:
            raise ConfigurationError(f"repository.m_per_instance 必须为正整数，当前 {value!r}",
                                     field="repository.m_per_instance")
        return value

    def gating_variant(self) -> str:
        variant = self.get("gating.variant", "Max")
        if variant not in GATING_VARIANTS:
            raise ConfigurationError(f"未知的门控目标变体: {variant}", field="gating.variant",
                                     suggestions=[f"可选: {', '.join(GATING_VARIANTS)}"])
        return variant

    def generation_options(self):
        from services.problem_service import GenerationOptions
        problems = self.get("problems", {})
        try:
            return GenerationOptions(int(problems["cim_simulations"]), int(problems["cim_node_factor"]),
                                     float(problems["cim_seed_fraction"]))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"problems 配置无效: {e}", field="problems")

    def external_instance(self, name: str) -> ProblemInstance:
        """按名称构造 config.json 中声明的外部评估实例"""
        declared = self.get("external_instances", {}) or {}
        if name not in declared:
            raise ConfigurationError(f"未声明的外部实例: {name}", field=f"external_instances.{name}",
                                     suggestions=["在 config.json 的 external_instances 中添加 dim 与 command"])
        entry = declared[name]
        try:
            dim = int(entry["dim"])
            command = entry["command"]
            if isinstance(command, str):
                command = command.split()
            params = ExternalParams(name, tuple(command), tuple(sorted((entry.get("env") or {}).items())),
                                    float(entry.get("timeout", self.get("problems.external_timeout", 30.0))))
            return ProblemInstance(ProblemClass.EXTERNAL, dim, 0, params)
        except (KeyError, TypeError, ValueError, ValidationError) as e:
            raise ConfigurationError(f"外部实例 {name} 配置无效: {e}", field=f"external_instances.{name}")
