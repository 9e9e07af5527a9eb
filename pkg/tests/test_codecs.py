#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
二进制格式测试：实例文件 (XFI1)、网络权重 (XFW1)、样本集 (XFS1)
"""
import os
import struct
import sys
import tempfile
import unittest

import numpy as np
from numpy.testing import assert_array_equal

# 添加项目根目录到路径
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.problem_model import ExternalParams, ProblemClass, ProblemInstance, random_solutions
from services.instance_codec import load_instance, read_instance_file, save_instance, write_instance_file
from services.neural_network import build_surrogate
from services.problem_service import GenerationOptions, evaluate, generate_instance
from utils.exceptions import FormatVersionError, PayloadError
from utils.weight_codec import (decode_mlps, decode_samples, decode_surrogate, encode_mlps, encode_samples,
                                encode_surrogate)


def with_version(data: bytes, version: int) -> bytes:
    return data[:4] + struct.pack("<H", version) + data[6:]


def flip_byte(data: bytes, position: int) -> bytes:
    mutable = bytearray(data)
    mutable[position] ^= 0xFF
    return bytes(mutable)


class TestInstanceCodec(unittest.TestCase):
    """实例文件测试"""

    def test_saved_instance_evaluates_identically(self):
        """保存再读取后，同一解的目标值完全一致（含 CCP/CIM 的冻结抽样）"""
        options = GenerationOptions(cim_simulations=4)
        rng = np.random.default_rng(0)
        for tag in ("OM", "KP", "MC", "CCP", "CIM"):
            original = generate_instance(tag, 10, 11, options)
            restored = load_instance(save_instance(original))
            self.assertEqual(restored.instance_id, original.instance_id)
            for x in random_solutions(rng, 4, 10):
                self.assertEqual(evaluate(restored, x), evaluate(original, x))

    def test_encoding_is_byte_deterministic(self):
        a = save_instance(generate_instance("MC", 12, 1))
        b = save_instance(generate_instance("MC", 12, 1))
        self.assertEqual(a, b)

    def test_external_params_survive(self):
        params = ExternalParams("popcount", ("python", "eval.py"), (("A", "1"),), 5.0)
        instance = ProblemInstance(ProblemClass.EXTERNAL, 8, 0, params)
        restored = load_instance(save_instance(instance))
        self.assertEqual(restored.params, params)
        self.assertEqual(restored.instance_id, "EXTERNAL-popcount-8")

    def test_corruption_detected(self):
        data = save_instance(generate_instance("KP", 10, 0))
        with self.assertRaises(PayloadError):
            load_instance(flip_byte(data, len(data) - 10))
        with self.assertRaises(PayloadError):
            load_instance(data[:-3])
        with self.assertRaises(PayloadError):
            load_instance(b"NOPE" + data[4:])
        with self.assertRaises(PayloadError):
            load_instance(data[:10])

    def test_version_mismatch(self):
        data = save_instance(generate_instance("OM", 6, 0))
        with self.assertRaises(FormatVersionError):
            load_instance(with_version(data, 99))

    def test_file_helpers(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_instance_file(generate_instance("OM", 6, 2), os.path.join(tmp, "sub", "om.xfi"))
            self.assertEqual(read_instance_file(path).instance_id, "OM-6-2")
            with self.assertRaises(PayloadError):
                read_instance_file(os.path.join(tmp, "missing.xfi"))


class TestWeightCodec(unittest.TestCase):
    """网络权重与样本集格式测试"""

    def setUp(self):
        self.surrogate = build_surrogate(7, np.random.default_rng(3), latent_dim=3)

    def test_surrogate_weights_preserved(self):
        data = encode_surrogate(self.surrogate)
        restored = decode_surrogate(data)
        assert_array_equal(restored.flatten(), self.surrogate.flatten())
        self.assertEqual([layer.activation for layer in restored.decoder.layers],
                         [layer.activation for layer in self.surrogate.decoder.layers])
        self.assertEqual(encode_surrogate(restored), data)

    def test_surrogate_requires_three_networks(self):
        data = encode_mlps([self.surrogate.encoder])
        self.assertEqual(len(decode_mlps(data)), 1)
        with self.assertRaises(PayloadError):
            decode_surrogate(data)

    def test_weight_corruption_detected(self):
        data = encode_surrogate(self.surrogate)
        with self.assertRaises(PayloadError):
            decode_surrogate(flip_byte(data, 40))
        with self.assertRaises(PayloadError):
            decode_surrogate(data[:-1])
        with self.assertRaises(FormatVersionError):
            decode_surrogate(with_version(data, 2))

    def test_samples_preserved(self):
        rng = np.random.default_rng(4)
        x = random_solutions(rng, 13, 11)
        y = rng.normal(size=13)
        restored_x, restored_y = decode_samples(encode_samples(x, y))
        assert_array_equal(restored_x, x)
        assert_array_equal(restored_y, y)

    def test_empty_sample_set(self):
        x, y = decode_samples(encode_samples(np.zeros((0, 5), dtype=np.uint8), np.zeros(0)))
        self.assertEqual(x.shape, (0, 5))
        self.assertEqual(y.shape, (0,))

    def test_sample_corruption_detected(self):
        rng = np.random.default_rng(5)
        data = encode_samples(random_solutions(rng, 4, 9), rng.normal(size=4))
        with self.assertRaises(PayloadError):
            decode_samples(flip_byte(data, 25))
        with self.assertRaises(PayloadError):
            decode_samples(b"XFW1" + data[4:])


if __name__ == '__main__':
    unittest.main()
