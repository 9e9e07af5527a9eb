#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
配置管理与配置方案测试
"""
import json
import os
import sys
import tempfile
import unittest

# 添加项目根目录到路径
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config.app_config import AppConfig
from config.experiment_profiles import ExperimentProfiles
from models.neural_model import FinetuneConfig, TrainConfig
from models.problem_model import ProblemClass
from utils.exceptions import ConfigurationError


class TestAppConfig(unittest.TestCase):
    """AppConfig 测试"""

    def setUp(self):
        self.temp_dir = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.temp_dir.name, "config.json")

    def tearDown(self):
        self.temp_dir.cleanup()

    def write(self, payload):
        with open(self.path, "w", encoding="utf-8") as f:
            f.write(payload if isinstance(payload, str) else json.dumps(payload))

    def test_defaults_without_file(self):
        config = AppConfig(self.path)
        self.assertEqual(config.get("mpi.e"), 64)
        self.assertEqual(config.mpi_config().planned_fes, 132)
        self.assertEqual(config.train_config(seed=5).seed, 5)
        self.assertEqual(config.train_config(), TrainConfig())
        self.assertEqual(config.finetune_config(), FinetuneConfig())
        self.assertEqual(config.svmss_config().budget, 132)
        self.assertEqual(config.gating_variant(), "Max")
        self.assertIsNone(config.get("mpi.missing"))
        self.assertEqual(config.get("missing.key", 3), 3)

    def test_file_is_deep_merged(self):
        self.write({"mpi": {"k": 10}, "workers": 2})
        config = AppConfig(self.path)
        mpi = config.mpi_config()
        self.assertEqual(mpi.k, 10)
        self.assertEqual(mpi.e, 64)
        self.assertEqual(mpi.workers, 2)
        self.assertEqual(config.pgpe_config().workers, 2)

    def test_defaults_not_shared_between_instances(self):
        a = AppConfig(self.path)
        a.set("mpi.e", 1)
        b = AppConfig(self.path)
        self.assertEqual(b.get("mpi.e"), 64)
        self.assertEqual(AppConfig.DEFAULT_CONFIG["mpi"]["e"], 64)

    def test_save_and_reload(self):
        config = AppConfig(self.path)
        config.set("bench.repetitions", 7)
        config.save_config()
        self.assertEqual(AppConfig(self.path).get("bench.repetitions"), 7)

    def test_invalid_json(self):
        self.write("{not json")
        with self.assertRaises(ConfigurationError):
            AppConfig(self.path)
        self.write("[1, 2]")
        with self.assertRaises(ConfigurationError):
            AppConfig(self.path)

    def test_unknown_field_rejected(self):
        self.write({"train": {"epoch": 3}})
        with self.assertRaises(ConfigurationError) as ctx:
            AppConfig(self.path).train_config()
        self.assertEqual(ctx.exception.field, "train.epoch")

    def test_invalid_values_become_configuration_errors(self):
        config = AppConfig(self.path)
        config.set("mpi.p", 500)
        with self.assertRaises(ConfigurationError):
            config.mpi_config()
        config.set("workers", 0)
        with self.assertRaises(ConfigurationError):
            config.workers()
        config.set("gating.variant", "Median")
        with self.assertRaises(ConfigurationError):
            config.gating_variant()
        config.set("repository.m_per_instance", -1)
        with self.assertRaises(ConfigurationError):
            config.m_per_instance()
        config.set("train.clip_norm", 0.0)
        with self.assertRaises(ConfigurationError) as ctx:
            config.train_config()
        self.assertEqual(ctx.exception.field, "train.clip_norm")

    def test_generation_options(self):
        config = AppConfig(self.path)
        config.set("problems.cim_simulations", 12)
        self.assertEqual(config.generation_options().cim_simulations, 12)

    def test_external_instance(self):
        self.write({"external_instances": {
            "pop": {"dim": 16, "command": "python scripts/popcount_evaluator.py", "env": {"B": "2", "A": "1"}},
        }})
        config = AppConfig(self.path)
        instance = config.external_instance("pop")
        self.assertEqual(instance.class_tag, ProblemClass.EXTERNAL)
        self.assertEqual(instance.dim, 16)
        self.assertEqual(instance.params.command, ("python", "scripts/popcount_evaluator.py"))
        self.assertEqual(instance.params.env, (("A", "1"), ("B", "2")))
        self.assertEqual(instance.params.timeout, 30.0)
        self.assertEqual(instance.instance_id, "EXTERNAL-pop-16")
        with self.assertRaises(ConfigurationError):
            config.external_instance("missing")

    def test_external_instance_without_dim(self):
        self.write({"external_instances": {"bad": {"command": ["python", "x.py"]}}})
        with self.assertRaises(ConfigurationError):
            AppConfig(self.path).external_instance("bad")


class TestExperimentProfiles(unittest.TestCase):
    """配置方案测试"""

    def test_all_profiles_apply_cleanly(self):
        for name in ExperimentProfiles.get_all_profiles():
            config = AppConfig("")
            config.apply_profile(name)
            config.mpi_config()
            config.pgpe_config()
            config.train_config()
            config.finetune_config()

    def test_smoke_profile_overrides(self):
        config = AppConfig("")
        config.apply_profile("smoke")
        self.assertEqual(config.m_per_instance(), 64)
        self.assertEqual(config.get("bench.repetitions"), 3)
        self.assertEqual(config.get("mpi.e"), 64)

    def test_unknown_profile(self):
        with self.assertRaises(ConfigurationError):
            AppConfig("").apply_profile("huge")


if __name__ == '__main__':
    unittest.main()
