#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
神经网络与代理模型训练测试
"""
import os
import sys
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
from scipy.stats import spearmanr

# 添加项目根目录到路径
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.neural_model import FinetuneConfig, TrainConfig
from models.problem_model import random_solutions
from services.neural_network import (build_surrogate, decode, decoder_loss_and_gradient, default_latent_dim,
                                     encode, gradient, init_mlp, mlp_predict, predict_scores, vae_forward,
                                     vae_loss)
from services.problem_service import evaluate, generate_instance
from services.repository_service import build_record
from services.vae_trainer import (MomentumSGD, finetune_decoder, normalize_objectives, resize_output_layer,
                                  train_vae)
from utils.exceptions import ValidationError


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


def central_difference(func, vector: np.ndarray, step: float = 1e-6) -> np.ndarray:
    grad = np.empty_like(vector)
    for i in range(vector.size):
        plus = vector.copy()
        minus = vector.copy()
        plus[i] += step
        minus[i] -= step
        grad[i] = (func(plus) - func(minus)) / (2 * step)
    return grad


class TestGradients(unittest.TestCase):
    """解析梯度与中心差分一致"""

    def test_vae_loss_gradient_matches_finite_differences(self):
        """d=6, d_z=3，全部参数，5 个种子"""
        for seed in range(5):
            rng = np.random.default_rng(seed)
            surrogate = build_surrogate(6, rng, latent_dim=3, hidden_activation="tanh")
            x = random_solutions(rng, 8, 6).astype(np.float64)
            y = rng.random(8)
            eps = rng.standard_normal((8, 3))

            analytic = gradient(surrogate, x, y, 1.0, 0.1, eps)
            numeric = central_difference(
                lambda w: vae_loss(surrogate.with_flat(w), x, y, 1.0, 0.1, eps=eps), surrogate.flatten()
            )
            self.assertEqual(analytic.shape, surrogate.flatten().shape)
            self.assertLess(relative_error(analytic, numeric), 1e-4, f"seed={seed}")

    def test_decoder_loss_gradient_matches_finite_differences(self):
        for seed in range(5):
            rng = np.random.default_rng(100 + seed)
            decoder = init_mlp([3, 8, 5], ["tanh", "sigmoid"], rng)
            z = rng.standard_normal((7, 3))
            targets = random_solutions(rng, 7, 5).astype(np.float64)

            _, grads = decoder_loss_and_gradient(decoder, z, targets)
            analytic = np.concatenate([g.ravel() for g in grads])
            numeric = central_difference(
                lambda w: decoder_loss_and_gradient(decoder.with_flat(w), z, targets, need_grad=False)[0],
                decoder.flatten()
            )
            self.assertLess(relative_error(analytic, numeric), 1e-4, f"seed={seed}")


class TestSurrogate(unittest.TestCase):
    """代理模型结构与前向测试"""

    def test_default_latent_dim(self):
        self.assertEqual(default_latent_dim(10), 4)
        self.assertEqual(default_latent_dim(40), 5)
        self.assertEqual(default_latent_dim(41), 6)

    def test_shapes(self):
        surrogate = build_surrogate(12, np.random.default_rng(0))
        self.assertEqual(surrogate.input_dim, 12)
        self.assertEqual(surrogate.output_dim, 12)
        self.assertEqual(surrogate.latent_dim, 4)
        x = random_solutions(np.random.default_rng(1), 5, 12)
        out = vae_forward(surrogate, x)
        self.assertEqual(out.x_recon.shape, (5, 12))
        self.assertEqual(out.y_pred.shape, (5,))
        self.assertTrue(np.all((out.x_recon > 0) & (out.x_recon < 1)))
        self.assertTrue(np.all(out.sigma > 0))

    def test_deterministic_mode_is_repeatable(self):
        surrogate = build_surrogate(8, np.random.default_rng(2))
        x = random_solutions(np.random.default_rng(3), 4, 8)
        assert_array_equal(decode(surrogate, x), decode(surrogate, x))
        mu, _ = encode(surrogate, x)
        assert_allclose(vae_forward(surrogate, x).mu, mu)

    def test_sample_mode_requires_rng(self):
        surrogate = build_surrogate(8, np.random.default_rng(2))
        with self.assertRaises(ValidationError):
            vae_forward(surrogate, np.zeros(8), mode="sample")

    def test_wrong_input_dimension(self):
        surrogate = build_surrogate(8, np.random.default_rng(2))
        with self.assertRaises(ValidationError):
            decode(surrogate, np.zeros((2, 7)))

    def test_chunked_prediction_matches_single_pass(self):
        surrogate = build_surrogate(9, np.random.default_rng(4))
        x = random_solutions(np.random.default_rng(5), 23, 9)
        assert_allclose(predict_scores(surrogate, x, batch_size=5), predict_scores(surrogate, x))
        assert_allclose(decode(surrogate, x, batch_size=4), decode(surrogate, x))

    def test_flatten_round_trip(self):
        surrogate = build_surrogate(5, np.random.default_rng(6), latent_dim=2)
        vector = surrogate.flatten()
        rebuilt = surrogate.with_flat(vector * 2.0)
        assert_allclose(rebuilt.flatten(), vector * 2.0)
        with self.assertRaises(ValidationError):
            surrogate.with_flat(vector[:-1])

    def test_gating_sized_mlp(self):
        net = init_mlp([9, 6, 3], ["relu", "identity"], np.random.default_rng(0))
        self.assertEqual(mlp_predict(net, np.ones((2, 9))).shape, (2, 3))


class TestTraining(unittest.TestCase):
    """训练与微调测试"""

    def setUp(self):
        rng = np.random.default_rng(0)
        self.instance = generate_instance("OM", 10, 0)
        self.x = random_solutions(rng, 64, 10)
        raw = np.array([evaluate(self.instance, s) for s in self.x])
        self.y, self.y_min, self.y_max = normalize_objectives(raw)

    def test_normalize_objectives(self):
        self.assertAlmostEqual(float(self.y.min()), 0.0)
        self.assertAlmostEqual(float(self.y.max()), 1.0)
        flat, low, high = normalize_objectives(np.full(4, 3.0))
        assert_array_equal(flat, np.zeros(4))
        self.assertEqual((low, high), (3.0, 3.0))

    def test_training_reduces_loss(self):
        config = TrainConfig(epochs=30, batch_size=16, seed=1)
        result = train_vae(self.x, self.y, config, instance_id="OM-10-0")
        self.assertLess(result.final_loss, result.initial_loss)
        self.assertEqual(len(result.epoch_losses), 30)
        self.assertTrue(all(part.is_finite() for part in result.surrogate.parts()))

    def test_training_is_deterministic(self):
        config = TrainConfig(epochs=5, batch_size=16, seed=2)
        a = train_vae(self.x, self.y, config)
        b = train_vae(self.x, self.y, config)
        assert_array_equal(a.surrogate.flatten(), b.surrogate.flatten())

    def test_dataset_smaller_than_batch(self):
        with self.assertRaises(ValidationError):
            train_vae(self.x[:8], self.y[:8], TrainConfig(batch_size=16))

    def test_resize_output_layer(self):
        decoder = build_surrogate(6, np.random.default_rng(0)).decoder
        rng = np.random.default_rng(1)
        wider = resize_output_layer(decoder, 9, rng)
        narrower = resize_output_layer(decoder, 4, rng)
        self.assertEqual(wider.out_dim, 9)
        self.assertEqual(narrower.out_dim, 4)
        assert_array_equal(wider.layers[-1].weight[:, :6], decoder.layers[-1].weight)
        assert_array_equal(narrower.layers[-1].weight, decoder.layers[-1].weight[:, :4])
        self.assertEqual(decoder.out_dim, 6)

    def test_finetune_history_non_increasing(self):
        surrogate = train_vae(self.x, self.y, TrainConfig(epochs=3, batch_size=16)).surrogate
        target = random_solutions(np.random.default_rng(9), 64, 14)
        tuned, history = finetune_decoder(surrogate, self.x, target, 14, FinetuneConfig(epochs=10, seed=3))
        self.assertEqual(tuned.output_dim, 14)
        self.assertEqual(len(history), 11)
        self.assertTrue(all(b <= a for a, b in zip(history, history[1:])))
        assert_array_equal(tuned.encoder.flatten(), surrogate.encoder.flatten())
        assert_array_equal(tuned.scorer.flatten(), surrogate.scorer.flatten())

    def test_finetune_rejects_mismatched_pairs(self):
        surrogate = build_surrogate(10, np.random.default_rng(0))
        with self.assertRaises(ValidationError):
            finetune_decoder(surrogate, self.x, np.zeros((3, 12)), 12)

class TestMomentumSGD(unittest.TestCase):
    """带梯度裁剪的动量 SGD 测试"""

    def test_step_clips_global_norm(self):
        params = [np.zeros(3), np.zeros(4)]
        optimizer = MomentumSGD(params, learning_rate=0.1, momentum=0.0, clip_norm=1.0)
        norm = optimizer.step([np.full(3, 30.0), np.full(4, 40.0)], scale=0.5)
        self.assertAlmostEqual(norm, 0.5 * np.sqrt(3 * 900 + 4 * 1600))
        moved = np.sqrt(sum(float(np.sum(p ** 2)) for p in params))
        self.assertAlmostEqual(moved, 0.1)

    def test_small_gradients_are_not_clipped(self):
        params = [np.zeros(2)]
        optimizer = MomentumSGD(params, learning_rate=0.1, momentum=0.5, clip_norm=1.0)
        optimizer.step([np.array([0.3, 0.4])])
        optimizer.step([np.array([0.3, 0.4])])
        # 第二步速度 = 0.5·v1 − lr·g
        assert_allclose(params[0], [-0.03 - 0.045, -0.04 - 0.06])

    def test_non_finite_gradient_leaves_parameters(self):
        params = [np.ones(2)]
        optimizer = MomentumSGD(params, learning_rate=0.1, momentum=0.9, clip_norm=1.0)
        norm = optimizer.step([np.array([np.inf, 1.0])])
        self.assertFalse(np.isfinite(norm))
        assert_array_equal(params[0], [1.0, 1.0])


class TestTrainingQuality(unittest.TestCase):
    """训练效果：KL 非负、单点过拟合、微调坍缩、评分排序与数值稳定"""

    def test_kl_term_is_non_negative(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            surrogate = build_surrogate(8, rng)
            x = random_solutions(rng, 16, 8).astype(np.float64)
            y = rng.random(16)
            eps = rng.standard_normal((16, surrogate.latent_dim))
            kl = vae_loss(surrogate, x, y, 0.0, 1.0, eps=eps) - vae_loss(surrogate, x, y, 0.0, 0.0, eps=eps)
            self.assertGreaterEqual(kl, -1e-9, f"seed={seed}")

    def test_overfits_single_repeated_point(self):
        point = random_solutions(np.random.default_rng(5), 1, 10)[0]
        x = np.tile(point, (64, 1))
        result = train_vae(x, np.zeros(64), TrainConfig(epochs=500, seed=0))
        recon = decode(result.surrogate, point)
        self.assertLess(float(np.mean((recon - point) ** 2)), 1e-2)

    def test_finetune_collapses_to_single_target(self):
        rng = np.random.default_rng(6)
        x = random_solutions(rng, 64, 10)
        y, _, _ = normalize_objectives(np.array([evaluate(generate_instance("OM", 10, 0), s) for s in x]))
        surrogate = train_vae(x, y, TrainConfig(epochs=3, batch_size=16)).surrogate
        x_star = random_solutions(rng, 1, 10)[0]
        tuned, _ = finetune_decoder(surrogate, x, np.tile(x_star, (64, 1)), 10, FinetuneConfig(epochs=500, seed=1))
        out = decode(tuned, x)
        self.assertLess(float(np.max(np.abs(out - x_star))), 0.1)

    def test_predicted_scores_rank_true_objective(self):
        """OM d=8：100 个随机解上预测得分与真实目标值的 Spearman > 0.5"""
        for seed in range(3):
            instance = generate_instance("OM", 8, seed)
            rng = np.random.default_rng(seed)
            x = random_solutions(rng, 400, 8)
            y, _, _ = normalize_objectives(np.array([evaluate(instance, s) for s in x]))
            surrogate = train_vae(x, y, TrainConfig(epochs=100, seed=seed)).surrogate
            held_out = random_solutions(rng, 100, 8)
            truth = np.array([evaluate(instance, s) for s in held_out])
            rho = spearmanr(predict_scores(surrogate, held_out), truth)[0]
            self.assertGreater(rho, 0.5, f"seed={seed}")

    def test_training_grid_stays_finite(self):
        """多个类别与种子上短训练均不发散"""
        cases = [(tag, 26, seed, 500) for tag in ("OM", "KP", "MC") for seed in (11, 12, 13)]
        cases.append(("OM", 26, 13, 2000))
        for tag, dim, seed, samples in cases:
            record = build_record(generate_instance(tag, dim, seed), samples, TrainConfig(epochs=5), seed=1)
            self.assertTrue(all(part.is_finite() for part in record.surrogate.parts()), record.record_id)
            self.assertTrue(np.all(np.isfinite(predict_scores(record.surrogate, record.solutions))))


if __name__ == '__main__':
    unittest.main()
