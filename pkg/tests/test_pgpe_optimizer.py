#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
PGPE 优化器测试
"""
import os
import sys
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

# 添加项目根目录到路径
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.experience_model import PgpeConfig
from services.pgpe_optimizer import mirrored_samples, pgpe_optimize
from utils.exceptions import ValidationError

CENTER = np.full(5, 0.5)


def sphere(weights: np.ndarray) -> float:
    return -float(np.sum((weights - CENTER) ** 2))


class TestMirroredSamples(unittest.TestCase):
    """镜像采样测试"""

    def test_mirror_pairs(self):
        mu = np.array([1.0, -2.0, 0.5])
        samples = mirrored_samples(mu, np.full(3, 0.3), 4, np.random.default_rng(0))
        self.assertEqual(samples.shape, (8, 3))
        assert_allclose(samples[4:], 2 * mu - samples[:4])


class TestPgpe(unittest.TestCase):
    """在球函数上的收敛与记录测试"""

    def test_converges_on_sphere(self):
        config = PgpeConfig(alpha_mu=0.5, max_iter=100)
        result = pgpe_optimize(sphere, 5, config, np.random.default_rng(1))
        self.assertGreater(result.best_value, -0.2)
        self.assertGreater(result.best_value, sphere(np.zeros(5)))
        self.assertAlmostEqual(sphere(result.best_weights), result.best_value)

    def test_incumbent_never_decreases(self):
        result = pgpe_optimize(sphere, 5, PgpeConfig(max_iter=20), np.random.default_rng(2))
        self.assertEqual(len(result.history), 20)
        self.assertTrue(all(b >= a for a, b in zip(result.history, result.history[1:])))
        self.assertEqual(result.history[-1], result.best_value)

    def test_sigma_respects_limit(self):
        config = PgpeConfig(sigma_init=0.05, sigma_limit=0.04, max_iter=15)
        result = pgpe_optimize(sphere, 5, config, np.random.default_rng(3))
        self.assertTrue(all(s >= 0.04 for s in result.sigma_min))

    def test_evaluation_count(self):
        config = PgpeConfig(half_population=3, max_iter=4)
        result = pgpe_optimize(sphere, 5, config, np.random.default_rng(4))
        self.assertEqual(result.evaluations, 1 + 4 * (2 * 3 + 1))

    def test_deterministic_for_fixed_seed(self):
        config = PgpeConfig(max_iter=5)
        a = pgpe_optimize(sphere, 5, config, np.random.default_rng(5))
        b = pgpe_optimize(sphere, 5, config, np.random.default_rng(5))
        assert_array_equal(a.best_weights, b.best_weights)
        self.assertEqual(a.history, b.history)

    def test_parallel_scoring_matches_serial(self):
        serial = pgpe_optimize(sphere, 5, PgpeConfig(max_iter=5), np.random.default_rng(6))
        parallel = pgpe_optimize(sphere, 5, PgpeConfig(max_iter=5, workers=3), np.random.default_rng(6))
        assert_array_equal(serial.best_weights, parallel.best_weights)

    def test_start_point_is_scored(self):
        """μ0 已是最优时，现任最优始终为 μ0"""
        result = pgpe_optimize(sphere, 5, PgpeConfig(max_iter=3), np.random.default_rng(7), mu0=CENTER)
        assert_array_equal(result.best_weights, CENTER)
        self.assertEqual(result.best_value, 0.0)

    def test_invalid_inputs(self):
        with self.assertRaises(ValidationError):
            pgpe_optimize(sphere, 0)
        with self.assertRaises(ValidationError):
            pgpe_optimize(sphere, 5, mu0=np.zeros(4))
        with self.assertRaises(ValidationError):
            pgpe_optimize(lambda w: float("nan"), 3)
        with self.assertRaises(ValidationError):
            PgpeConfig(sigma_init=0.01, sigma_limit=0.1)


if __name__ == '__main__':
    unittest.main()
