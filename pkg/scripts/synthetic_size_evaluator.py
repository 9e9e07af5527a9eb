#!/usr/bin/env python3
"""
参考外部评估器：确定性的 "编译产物大小" 模型
每个编译开关有独立的体积收益，部分开关两两之间存在冲突或协同；目标值为 −size（越大越好）
"""
import argparse
import sys

import numpy as np

BASE_SIZE = 100_000.0


class SizeModel:
    """由 seed 与维度完全确定的体积模型"""

    def __init__(self, dim: int, seed: int, interaction_density: float = 0.15):
        rng = np.random.default_rng([seed, dim])
        self.gain = rng.uniform(0.0, 2_000.0, dim)
        pairs = rng.random((dim, dim)) < interaction_density
        pairs = np.triu(pairs, 1)
        self.interaction = np.where(pairs, rng.normal(0.0, 800.0, (dim, dim)), 0.0)

    def size(self, x: np.ndarray) -> float:
        return float(BASE_SIZE - self.gain @ x + x @ self.interaction @ x)


def reply(text: str) -> None:
    sys.stdout.write(text + "\n")
    sys.stdout.flush()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="合成的编译开关体积评估器")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    model = None
    for raw in sys.stdin:
        line = raw.strip()
        if not line:
            continue
        verb, _, arg = line.partition(" ")
        if verb == "HELLO":
            model = SizeModel(int(arg), args.seed)
            reply("READY")
        elif verb == "EVAL":
            if model is None:
                reply("ERR 未握手")
                continue
            if len(arg) != model.gain.shape[0] or set(arg) - {"0", "1"}:
                reply(f"ERR 非法解: 需要 {model.gain.shape[0]} 位比特串")
                continue
            x = np.frombuffer(arg.encode("ascii"), dtype=np.uint8) - ord("0")
            reply(f"OK {-model.size(x.astype(np.float64))!r}")
        elif verb == "BYE":
            return 0
        else:
            reply(f"ERR 未知命令 {verb}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
