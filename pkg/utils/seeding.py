"""
随机种子派生
"""
import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    """由任意组成部分派生稳定的 63 位种子（与进程和 PYTHONHASHSEED 无关）"""
    digest = hashlib.blake2b(digest_size=8)
    for part in parts:
        digest.update(str(part).encode("utf-8"))
        digest.update(b"\x1f")
    return int.from_bytes(digest.digest(), "little") >> 1


def derive_rng(*parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))
