#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
基线初始化方法测试：Rand、OBL、SVM-SS
"""
import os
import sys
import unittest

import numpy as np
from numpy.testing import assert_array_equal

# 添加项目根目录到路径
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.population_model import BudgetMeter, SvmSsConfig
from models.problem_model import complement, random_solutions
from services.baseline_initializers import init_obl, init_rand, init_svmss
from services.problem_service import evaluate, generate_instance
from utils.exceptions import BudgetExhaustedError, ValidationError


class TestRand(unittest.TestCase):
    def test_uses_p_evaluations(self):
        instance = generate_instance("OM", 20, 0)
        meter = BudgetMeter(800)
        result = init_rand(instance, 20, meter, np.random.default_rng(0))
        self.assertEqual(result.fes_consumed, 20)
        self.assertEqual(meter.used, 20)
        self.assertEqual(len(result.population), 20)
        self.assertTrue(np.all(np.diff(result.objectives) <= 0))

    def test_budget_checked_first(self):
        meter = BudgetMeter(10)
        with self.assertRaises(BudgetExhaustedError):
            init_rand(generate_instance("OM", 20, 0), 20, meter, np.random.default_rng(0))
        self.assertEqual(meter.used, 0)


class TestObl(unittest.TestCase):
    def test_population_closed_under_complement(self):
        instance = generate_instance("OM", 16, 1)
        meter = BudgetMeter(100)
        result = init_obl(instance, 20, meter, np.random.default_rng(1))
        self.assertEqual(result.fes_consumed, 20)
        keys = {x.tobytes() for x in result.solutions}
        for x in result.solutions:
            self.assertIn(complement(x).tobytes(), keys)

    def test_complements_repaired_for_constrained_classes(self):
        instance = generate_instance("KP", 16, 1)
        result = init_obl(instance, 10, BudgetMeter(10), np.random.default_rng(2))
        weights = instance.params.weights
        for x in result.solutions:
            self.assertLessEqual(float(weights @ x), instance.params.capacity + 1e-12)

    def test_odd_population_rejected(self):
        with self.assertRaises(ValidationError):
            init_obl(generate_instance("OM", 8, 0), 7, BudgetMeter(10), np.random.default_rng(0))


class TestSvmSs(unittest.TestCase):
    def test_uses_whole_initialization_budget(self):
        instance = generate_instance("OM", 20, 2)
        meter = BudgetMeter(800)
        result = init_svmss(instance, 20, 132, meter, np.random.default_rng(3))
        self.assertEqual(result.fes_consumed, 132)
        self.assertEqual(meter.remaining, 668)
        self.assertEqual(len(result.population), 20)
        self.assertEqual(result.objectives[0], meter.best)

    def test_guided_sampling_beats_initial_sample(self):
        """OneMax 上线性分类器引导的选样应超过初始随机样本的最优值"""
        instance = generate_instance("OM", 30, 3)
        config = SvmSsConfig(initial=20)
        meter = BudgetMeter(132)
        result = init_svmss(instance, 20, 132, meter, np.random.default_rng(4), config)
        self.assertGreater(result.objectives[0], max(meter.trace[:20]))

    def test_matches_random_sampling_at_equal_budget(self):
        """OM d=20，30 个种子：SVM-SS 返回种群的平均最优不低于 132 个随机解的平均最优"""
        guided, random_best = [], []
        for seed in range(30):
            instance = generate_instance("OM", 20, seed)
            result = init_svmss(instance, 20, 132, BudgetMeter(132), np.random.default_rng(seed))
            guided.append(result.objectives[0])
            samples = random_solutions(np.random.default_rng(1000 + seed), 132, 20)
            random_best.append(max(evaluate(instance, x) for x in samples))
        self.assertGreaterEqual(np.mean(guided), np.mean(random_best))

    def test_deterministic(self):
        instance = generate_instance("MC", 15, 1)
        a = init_svmss(instance, 10, 40, BudgetMeter(40), np.random.default_rng(5))
        b = init_svmss(instance, 10, 40, BudgetMeter(40), np.random.default_rng(5))
        assert_array_equal(a.solutions, b.solutions)

    def test_budget_smaller_than_population(self):
        with self.assertRaises(ValidationError):
            init_svmss(generate_instance("OM", 10, 0), 20, 10, BudgetMeter(100), np.random.default_rng(0))


if __name__ == '__main__':
    unittest.main()
