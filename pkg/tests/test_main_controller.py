#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
命令行子命令测试：在临时目录中以极小规模跑通整条流水线
"""
import contextlib
import io
import json
import os
import sys
import tempfile
import unittest
from unittest import mock

# 添加项目根目录到路径
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import run
from controllers.main_controller import EXIT_ACCEPTANCE_FAILED, EXIT_ERROR, EXIT_OK, build_parser, dispatch
from utils.exceptions import ConfigurationError

TINY_CONFIG = {
    "train": {"epochs": 2, "batch_size": 8},
    "finetune": {"epochs": 2},
    "repository": {"m_per_instance": 16},
    "mpi": {"e": 8, "k": 2, "q": 2, "q_m": 4, "p": 6, "candidate_sample_count": 200},
    "pgpe": {"half_population": 2, "max_iter": 2},
    "gating": {"normalization_samples": 20},
    "problems": {"cim_simulations": 5},
}

PLAN_TEMPLATE = """
[bench]
budget = 40
sweep = [20]
repetitions = 3
base_seed = 1
results = "results.jsonl"

[[instances]]
class = "OM"
dims = [10]
seeds = [0, 1]

[[methods]]
initializer = "rand"

[[methods]]
initializer = "obl"

[[acceptance]]
name = "gate"
challenger = "obl"
baseline = "rand"
metric = "goal_diff"
threshold = {threshold}
"""


class TestMainController(unittest.TestCase):
    """子命令测试"""

    def setUp(self):
        self.temp_dir = tempfile.TemporaryDirectory()
        self.tmp = self.temp_dir.name
        self.config_path = os.path.join(self.tmp, "config.json")
        with open(self.config_path, "w", encoding="utf-8") as f:
            json.dump(TINY_CONFIG, f)

    def tearDown(self):
        self.temp_dir.cleanup()

    def path(self, *parts):
        return os.path.join(self.tmp, *parts)

    def cli(self, *argv):
        with contextlib.redirect_stdout(io.StringIO()):
            return dispatch(["--config", self.config_path, "--log-level", "WARNING", *argv])

    def write_plan(self, name, threshold):
        path = self.path(name)
        with open(path, "w", encoding="utf-8") as f:
            f.write(PLAN_TEMPLATE.replace("{threshold}", str(threshold)))
        return path

    def test_gen_writes_instance_files(self):
        code = self.cli("gen", "--classes", "OM", "KP", "--dims", "8", "--seeds", "0", "1", "--out", self.path("inst"))
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(sorted(os.listdir(self.path("inst"))),
                         ["KP-8-0.xfi", "KP-8-1.xfi", "OM-8-0.xfi", "OM-8-1.xfi"])

    def test_run_single_from_instance_file(self):
        self.cli("gen", "--classes", "OM", "--dims", "20", "--seeds", "1", "--out", self.path("inst"))
        out = self.path("run.json")
        code = self.cli("run", "--instance", self.path("inst", "OM-20-1.xfi"), "--initializer", "rand",
                        "--budget", "60", "--out", out)
        self.assertEqual(code, EXIT_OK)
        with open(out, encoding="utf-8") as f:
            record = json.load(f)
        self.assertEqual(record["instance_id"], "OM-20-1")
        self.assertEqual(record["fes_init"], 20)
        self.assertEqual(len(record["trace"]), 60)
        self.assertEqual(record["best_objective"], record["trace"][-1])

    def test_repository_gating_and_init_pipeline(self):
        repo = self.path("repo")
        gating = self.path("gating.xfw")
        self.assertEqual(self.cli("build-repo", "--instances", "OM:12:0", "KP:12:0", "MC:12:0",
                                  "--seed", "1", "--out", repo), EXIT_OK)
        self.assertEqual(self.cli("train-gating", "--repository", repo, "--instances", "OM:12:5",
                                  "--profile", "", "--out", gating), EXIT_OK)
        self.assertTrue(os.path.exists(gating))

        out = self.path("population.txt")
        code = self.cli("init", "--instance", "OM:14:3", "--repository", repo, "--gating", gating, "--out", out)
        self.assertEqual(code, EXIT_OK)
        with open(out, encoding="utf-8") as f:
            lines = f.read().splitlines()
        with open(out + ".provenance", encoding="utf-8") as f:
            tags = f.read().splitlines()
        self.assertEqual(len(lines), 6)
        self.assertEqual(len(tags), 6)
        objectives = [float(line.split()[1]) for line in lines]
        self.assertEqual(objectives, sorted(objectives, reverse=True))
        self.assertTrue(all(len(line.split()[0]) == 14 for line in lines))

        ablation = self.path("no-gating.txt")
        self.assertEqual(self.cli("init", "--instance", "KP:14:3", "--repository", repo, "--variant", "NoGating",
                                  "--out", ablation), EXIT_OK)

    def test_bench_and_report(self):
        passing = self.write_plan("pass.toml", -100)
        failing = self.write_plan("fail.toml", 100)
        reports = self.path("reports")
        self.assertEqual(self.cli("bench", passing, "--report-dir", reports), EXIT_OK)
        self.assertEqual(sorted(os.listdir(reports)), ["comparison.txt", "curves.csv", "results.csv"])
        with open(self.path("results.jsonl"), encoding="utf-8") as f:
            self.assertEqual(len(f.read().splitlines()), 12)

        # 重新运行时全部单元已存在
        self.assertEqual(self.cli("bench", passing), EXIT_OK)
        self.assertEqual(self.cli("report", failing, "--out", self.path("r2")), EXIT_OK)
        self.assertEqual(self.cli("report", failing, "--out", self.path("r3"), "--check"), EXIT_ACCEPTANCE_FAILED)
        self.assertEqual(self.cli("report", passing, "--out", self.path("r4"), "--format", "csv"), EXIT_OK)
        self.assertEqual(os.listdir(self.path("r4")), ["results.csv"])

    def test_unrecognized_instance(self):
        with self.assertRaises(ConfigurationError):
            self.cli("run", "--instance", "bogus", "--initializer", "rand")

    def test_parser_rejects_unknown_optimizer(self):
        with contextlib.redirect_stderr(io.StringIO()), self.assertRaises(SystemExit):
            build_parser().parse_args(["run", "--instance", "OM:10:0", "--optimizer", "sa"])

    def test_entry_point_reports_errors(self):
        with mock.patch.dict(os.environ, {"XFERINIT_LOG_DIR": self.tmp}), \
                mock.patch("utils.logger._error_reporter", None), \
                contextlib.redirect_stderr(io.StringIO()):
            code = run.main(["--config", self.config_path, "run", "--instance", "bogus", "--initializer", "rand"])
        self.assertEqual(code, EXIT_ERROR)
        self.assertTrue(os.listdir(self.path("error_reports")))


if __name__ == '__main__':
    unittest.main()
