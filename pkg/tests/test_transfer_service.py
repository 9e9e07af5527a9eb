#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
经验迁移与初始种群生成测试
"""
import os
import sys
import unittest

import numpy as np
from numpy.testing import assert_array_equal

# 添加项目根目录到路径
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.experience_model import ExperienceRecord, GatingModel
from models.neural_model import FinetuneConfig, TrainConfig
from models.population_model import BudgetMeter, MpiConfig, Provenance
from models.problem_model import random_solutions
from services.gating_trainer import build_gating_net
from services.neural_network import build_surrogate
from services.problem_service import evaluate, generate_instance
from services.repository_service import build_repository
from services.transfer_service import (ablation_initialize, build_finetune_pairs, generate_candidates,
                                       interpolate, interpolation_child, mpi_initialize, partition_by_fitness,
                                       partition_indices, population_lines, probe)
from utils.exceptions import BudgetExhaustedError, FingerprintMismatchError, ValidationError

FAST_FINETUNE = FinetuneConfig(epochs=3)
FAST_MPI = MpiConfig(candidate_sample_count=1000)


def small_record(objectives, dim=4, seed=0):
    rng = np.random.default_rng(seed)
    solutions = np.array([[int(b) for b in format(i, f"0{dim}b")] for i in range(len(objectives))],
                         dtype=np.uint8)
    return ExperienceRecord("R", dim, "OM", solutions, np.asarray(objectives, dtype=float),
                            build_surrogate(dim, rng))


class TestProbe(unittest.TestCase):
    """探测采样测试"""

    def test_probe_charges_budget(self):
        instance = generate_instance("OM", 12, 0)
        meter = BudgetMeter(10)
        x, y = probe(instance, 6, meter, np.random.default_rng(0))
        self.assertEqual(x.shape, (6, 12))
        self.assertEqual(y.shape, (6,))
        self.assertEqual(meter.used, 6)

    def test_empty_probe(self):
        meter = BudgetMeter(5)
        x, y = probe(generate_instance("OM", 12, 0), 0, meter, np.random.default_rng(0))
        self.assertEqual(x.shape, (0, 12))
        self.assertEqual(meter.used, 0)

    def test_probe_beyond_budget(self):
        with self.assertRaises(BudgetExhaustedError):
            probe(generate_instance("OM", 12, 0), 6, BudgetMeter(5), np.random.default_rng(0))


class TestPartition(unittest.TestCase):
    """按目标值划分测试"""

    def test_worked_example(self):
        subsets = partition_indices(np.array([9.0, 9.0, 7.0, 5.0]), 2)
        self.assertEqual([sorted(s.tolist()) for s in subsets], [[0, 1], [2, 3]])

    def test_distinct_values_give_singletons(self):
        y = np.array([3.0, 8.0, 1.0, 5.0])
        subsets = partition_indices(y, 4)
        self.assertEqual([s.tolist() for s in subsets], [[1], [3], [0], [2]])

    def test_single_subset(self):
        subsets = partition_indices(np.array([1.0, 2.0, 2.0, 0.0]), 1)
        self.assertEqual(len(subsets), 1)
        self.assertEqual(sorted(subsets[0].tolist()), [0, 1, 2, 3])

    def test_general_invariants(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            y = rng.integers(0, 8, size=int(rng.integers(2, 30))).astype(float)
            unique = np.unique(y).size
            e_l = int(rng.integers(1, unique + 1))
            subsets = partition_indices(y, e_l)
            self.assertEqual(len(subsets), e_l)
            self.assertTrue(all(len(s) > 0 for s in subsets))
            self.assertEqual(sorted(np.concatenate(subsets).tolist()), list(range(len(y))))
            for upper, lower in zip(subsets, subsets[1:]):
                self.assertGreater(y[upper].min(), y[lower].max())

    def test_too_many_subsets(self):
        with self.assertRaises(ValidationError):
            partition_indices(np.array([1.0, 1.0, 2.0]), 3)

    def test_partition_solutions(self):
        x = np.eye(3, dtype=np.uint8)
        parts = partition_by_fitness(x, np.array([1.0, 3.0, 2.0]), 3)
        assert_array_equal(parts[0], [[0, 1, 0]])
        assert_array_equal(parts[2], [[1, 0, 0]])


class TestFinetunePairs(unittest.TestCase):
    """秩对齐样本对测试"""

    def test_pairs_follow_rank_buckets(self):
        record = small_record([3.0, 3.0, 1.0, 1.0])
        x_new = np.array([[1, 1, 1, 1, 1], [0, 0, 0, 0, 0]], dtype=np.uint8)
        x_in, x_out = build_finetune_pairs(record, x_new, np.array([5.0, 2.0]), np.random.default_rng(0))
        self.assertEqual(x_in.shape, (4, 4))
        self.assertEqual(x_out.shape, (4, 5))
        good_sources = {record.solutions[0].tobytes(), record.solutions[1].tobytes()}
        for a, b in zip(x_in, x_out):
            self.assertEqual(a.tobytes() in good_sources, bool(b[0] == 1))

    def test_single_bucket_is_full_product(self):
        record = small_record([1.0, 2.0, 3.0])
        x_new = random_solutions(np.random.default_rng(1), 4, 6)
        x_in, x_out = build_finetune_pairs(record, x_new, np.full(4, 7.0), np.random.default_rng(0))
        self.assertEqual(len(x_in), 12)
        self.assertEqual(len(x_out), 12)

    def test_source_subsampled_to_factor(self):
        record = small_record(np.arange(16, dtype=float))
        x_new = random_solutions(np.random.default_rng(2), 2, 6)
        x_in, _ = build_finetune_pairs(record, x_new, np.array([1.0, 0.0]), np.random.default_rng(0),
                                       source_factor=2)
        self.assertEqual(len(x_in), 4)


class TestCandidates(unittest.TestCase):
    """候选解生成测试"""

    def test_distinct_candidates(self):
        surrogate = build_surrogate(10, np.random.default_rng(0), output_dim=12)
        candidates = generate_candidates(surrogate, 5, 200, np.random.default_rng(1))
        self.assertEqual(candidates.shape, (5, 12))
        self.assertEqual(len({row.tobytes() for row in candidates}), 5)
        self.assertTrue(set(np.unique(candidates)) <= {0, 1})

    def test_padding_when_decoder_collapses(self):
        surrogate = build_surrogate(6, np.random.default_rng(0), output_dim=2)
        candidates = generate_candidates(surrogate, 4, 50, np.random.default_rng(2))
        self.assertEqual(len({row.tobytes() for row in candidates}), 4)

    def test_sample_count_below_q(self):
        surrogate = build_surrogate(6, np.random.default_rng(0))
        with self.assertRaises(ValidationError):
            generate_candidates(surrogate, 5, 4, np.random.default_rng(0))


class TestInterpolation(unittest.TestCase):
    """插值算子测试"""

    def test_unanimous_dimensions_inherited(self):
        parents = np.array([[1, 0, 1, 0], [1, 0, 0, 1], [1, 0, 1, 1], [1, 0, 0, 0]], dtype=np.uint8)
        rng = np.random.default_rng(0)
        for _ in range(100):
            child = interpolation_child(parents, rng)
            self.assertEqual(child[0], 1)
            self.assertEqual(child[1], 0)

    def test_mixed_dimensions_follow_parent_frequency(self):
        parents = np.array([[1, 1], [1, 0], [0, 0], [1, 0]], dtype=np.uint8)
        rng = np.random.default_rng(1)
        children = np.array([interpolation_child(parents, rng) for _ in range(4000)])
        self.assertAlmostEqual(children[:, 0].mean(), 0.75, delta=0.03)
        self.assertAlmostEqual(children[:, 1].mean(), 0.25, delta=0.03)

    def test_interpolate_appends_and_sorts(self):
        instance = generate_instance("OM", 15, 3)
        rng = np.random.default_rng(2)
        meter = BudgetMeter(40)
        x = random_solutions(rng, 20, 15)
        y = np.array([meter.evaluate(instance, s).objective for s in x])
        x_all, y_all = interpolate(x, y, 10, instance, meter, rng)
        self.assertEqual(x_all.shape, (30, 15))
        self.assertEqual(meter.used, 30)
        self.assertTrue(np.all(np.diff(y_all) <= 0))

    def test_interpolate_needs_mediocre_pool(self):
        instance = generate_instance("OM", 5, 0)
        x = random_solutions(np.random.default_rng(0), 2, 5)
        with self.assertRaises(ValidationError):
            interpolate(x, np.array([1.0, 0.0]), 1, instance, BudgetMeter(5), np.random.default_rng(0))


class TestMpiInitialize(unittest.TestCase):
    """完整在线初始化流程测试"""

    @classmethod
    def setUpClass(cls):
        sources = [generate_instance(tag, dim, seed)
                   for seed, (tag, dim) in enumerate([("OM", 20), ("OM", 24), ("OM", 28), ("OM", 32),
                                                      ("KP", 20), ("KP", 24), ("KP", 28), ("KP", 32),
                                                      ("MC", 20), ("MC", 24), ("MC", 28), ("MC", 32),
                                                      ("OM", 36)])]
        cls.repository = build_repository(sources, 24, TrainConfig(epochs=2, batch_size=8), seed=1)
        net = build_gating_net(cls.repository.n, np.random.default_rng(0))
        cls.gating = GatingModel(net, cls.repository.n, cls.repository.fingerprint)
        cls.instance = generate_instance("OM", 30, 77)

    def run_mpi(self, variant=None, gating="default", seed=0, budget=800):
        meter = BudgetMeter(budget)
        result = mpi_initialize(self.instance, self.repository, self.gating if gating == "default" else gating,
                                FAST_MPI, meter, np.random.default_rng(seed), FAST_FINETUNE, variant)
        return result, meter

    def test_full_pipeline_uses_planned_budget(self):
        result, meter = self.run_mpi()
        self.assertEqual(result.fes_consumed, 132)
        self.assertEqual(meter.remaining, 668)
        self.assertEqual(len(result.population), 20)
        self.assertEqual(len(result.selected), 12)
        self.assertEqual(len(set(result.selected)), 12)
        self.assertTrue(np.all(np.diff(result.objectives) <= 0))
        self.assertEqual(len({x.tobytes() for x in result.solutions}), 20)
        self.assertEqual(len(result.transferred), 12 * 4 + 20)
        self.assertTrue(all(m.provenance in (Provenance.GENERATED, Provenance.INTERPOLATED)
                            for m in result.transferred))

    def test_population_is_best_of_evaluated(self):
        result, meter = self.run_mpi()
        self.assertEqual(result.objectives[0], meter.best)

    def test_deterministic(self):
        a, _ = self.run_mpi(seed=4)
        b, _ = self.run_mpi(seed=4)
        self.assertEqual(population_lines(a), population_lines(b))

    def test_no_interpolation_variant(self):
        result, _ = self.run_mpi("NoInterpolation")
        self.assertEqual(result.fes_consumed, 112)
        self.assertNotIn(Provenance.INTERPOLATED, result.provenance)

    def test_no_transfer_variant(self):
        result, _ = self.run_mpi("NoTransfer")
        self.assertEqual(result.fes_consumed, 132)
        self.assertEqual(result.selected, [])
        self.assertNotIn(Provenance.GENERATED, result.provenance)
        self.assertEqual([m.provenance for m in result.transferred], [Provenance.INTERPOLATED] * 20)

    def test_no_gating_variant_needs_no_gating_model(self):
        meter = BudgetMeter(200)
        result = ablation_initialize("NoGating", self.instance, self.repository, None, FAST_MPI, meter,
                                     np.random.default_rng(0), FAST_FINETUNE)
        self.assertEqual(result.fes_consumed, 132)
        self.assertEqual(len(result.selected), 12)

    def test_missing_gating_rejected(self):
        with self.assertRaises(ValidationError):
            self.run_mpi(gating=None)

    def test_foreign_gating_rejected(self):
        foreign = GatingModel(self.gating.net, self.repository.n, "0" * 64)
        with self.assertRaises(FingerprintMismatchError):
            self.run_mpi(gating=foreign)

    def test_insufficient_budget(self):
        with self.assertRaises(BudgetExhaustedError):
            self.run_mpi(budget=100)

    def test_unknown_variant(self):
        with self.assertRaises(ValidationError):
            self.run_mpi("NoSuchVariant")

    def test_population_lines(self):
        result, _ = self.run_mpi()
        lines, tags = population_lines(result)
        self.assertEqual(len(lines), 20)
        bits, value = lines[0].split()
        self.assertEqual(len(bits), 30)
        self.assertEqual(float(value), result.objectives[0])
        self.assertTrue(set(tags) <= {p.value for p in Provenance})

class TestSelfTransfer(unittest.TestCase):
    """经验库含有目标实例自身的记录时，MPI 应不差于同等预算的纯随机采样"""

    @classmethod
    def setUpClass(cls):
        cls.target = generate_instance("OM", 20, 5)
        sources = [cls.target] + [generate_instance("OM", 20, seed) for seed in (6, 7, 8)]
        cls.repository = build_repository(sources, 1000, TrainConfig(epochs=60), seed=0)
        net = build_gating_net(cls.repository.n, np.random.default_rng(0))
        cls.gating = GatingModel(net, cls.repository.n, cls.repository.fingerprint)
        cls.config = MpiConfig(e=32, k=4, q=4, q_m=10, p=20, candidate_sample_count=2000)

    def test_beats_matched_random_sampling(self):
        wins = 0
        for seed in range(50):
            meter = BudgetMeter(200)
            result = mpi_initialize(self.target, self.repository, self.gating, self.config, meter,
                                    np.random.default_rng(seed), FinetuneConfig(epochs=10))
            samples = random_solutions(np.random.default_rng(10_000 + seed), result.fes_consumed, self.target.dim)
            random_best = max(evaluate(self.target, x) for x in samples)
            wins += int(result.objectives[0] >= random_best)
        self.assertGreaterEqual(wins, 40)


if __name__ == '__main__':
    unittest.main()
