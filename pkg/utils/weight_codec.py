"""
二进制权重与样本编解码
XFW1：MLP / VAE 权重；XFS1：经验样本（位压缩解 + 64 位浮点目标值）
"""
import struct
import zlib
from typing import List, Tuple

import numpy as np

from models.neural_model import ACTIVATION_CODES, ACTIVATIONS, DenseLayer, MlpParams, VaeSurrogate
from utils.exceptions import FormatVersionError, PayloadError

WEIGHTS_MAGIC = b"XFW1"
SAMPLES_MAGIC = b"XFS1"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sHB")
_LAYER = struct.Struct("<IIB")
_SAMPLES_HEADER = struct.Struct("<4sHQI")
_CRC = struct.Struct("<I")


class _Reader:
    """带越界检查的顺序读取器"""

    def __init__(self, data: bytes, what: str):
        self.data = data
        self.offset = 0
        self.what = what

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise PayloadError(f"{self.what} 数据被截断 (需要 {size} 字节, 剩余 {len(self.data) - self.offset})")
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: struct.Struct) -> Tuple:
        return fmt.unpack(self.take(fmt.size))


def _check_crc(data: bytes, what: str) -> bytes:
    if len(data) < _CRC.size:
        raise PayloadError(f"{what} 数据被截断")
    body, (crc,) = data[:-_CRC.size], _CRC.unpack(data[-_CRC.size:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise PayloadError(f"{what} 校验和不匹配，文件已损坏")
    return body


def _check_header(reader: _Reader, magic: bytes, found_magic: bytes, version: int) -> None:
    if found_magic != magic:
        raise PayloadError(f"{reader.what} 魔数错误: {found_magic!r}，期望 {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatVersionError(f"{reader.what} 版本不匹配: {version}，期望 {FORMAT_VERSION}",
                                 expected=FORMAT_VERSION, found=version)


def _encode_mlp(mlp: MlpParams) -> bytes:
    parts = [struct.pack("<H", len(mlp.layers))]
    for layer in mlp.layers:
        parts.append(_LAYER.pack(layer.in_dim, layer.out_dim, ACTIVATION_CODES[layer.activation]))
        parts.append(np.ascontiguousarray(layer.weight, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    return b"".join(parts)


def _decode_mlp(reader: _Reader) -> MlpParams:
    (count,) = reader.unpack(struct.Struct("<H"))
    layers = []
    for _ in range(count):
        rows, cols, act = reader.unpack(_LAYER)
        if act >= len(ACTIVATIONS):
            raise PayloadError(f"{reader.what} 含未知的激活函数编码 {act}")
        weight = np.frombuffer(reader.take(rows * cols * 8), dtype="<f8").reshape(rows, cols)
        bias = np.frombuffer(reader.take(cols * 8), dtype="<f8")
        layers.append(DenseLayer(weight.astype(np.float64), bias.astype(np.float64), ACTIVATIONS[act]))
    return MlpParams(layers)


def encode_mlps(mlps: List[MlpParams]) -> bytes:
    """把若干个 MLP 编码为 XFW1 数据块"""
    body = _HEADER.pack(WEIGHTS_MAGIC, FORMAT_VERSION, len(mlps)) + b"".join(_encode_mlp(m) for m in mlps)
    return body + _CRC.pack(zlib.crc32(body) & 0xFFFFFFFF)


def decode_mlps(data: bytes, what: str = "权重文件") -> List[MlpParams]:
    """解码 XFW1 数据块"""
    if len(data) < _HEADER.size + _CRC.size:
        raise PayloadError(f"{what} 数据被截断")
    reader = _Reader(data, what)
    magic, version, count = reader.unpack(_HEADER)
    _check_header(reader, WEIGHTS_MAGIC, magic, version)
    reader = _Reader(_check_crc(data, what), what)
    reader.take(_HEADER.size)
    mlps = [_decode_mlp(reader) for _ in range(count)]
    if reader.offset != len(reader.data):
        raise PayloadError(f"{what} 末尾存在多余数据")
    return mlps


def encode_surrogate(surrogate: VaeSurrogate) -> bytes:
    return encode_mlps(list(surrogate.parts()))


def decode_surrogate(data: bytes, what: str = "代理模型权重") -> VaeSurrogate:
    mlps = decode_mlps(data, what)
    if len(mlps) != 3:
        raise PayloadError(f"{what} 应包含 3 个网络 (encoder/decoder/scorer)，实际 {len(mlps)}")
    return VaeSurrogate(*mlps)


def encode_samples(solutions: np.ndarray, objectives: np.ndarray) -> bytes:
    """编码样本集：数量、维度，然后逐样本写入位压缩解与 f64 目标值"""
    solutions = np.asarray(solutions, dtype=np.uint8)
    objectives = np.asarray(objectives, dtype="<f8")
    count, dim = solutions.shape
    packed = np.packbits(solutions, axis=1, bitorder="little")
    rows = [packed[i].tobytes() + objectives[i:i + 1].tobytes() for i in range(count)]
    body = _SAMPLES_HEADER.pack(SAMPLES_MAGIC, FORMAT_VERSION, count, dim) + b"".join(rows)
    return body + _CRC.pack(zlib.crc32(body) & 0xFFFFFFFF)


def decode_samples(data: bytes, what: str = "样本文件") -> Tuple[np.ndarray, np.ndarray]:
    """解码样本集，返回 (solutions uint8 (m, d), objectives f64 (m,))"""
    if len(data) < _SAMPLES_HEADER.size + _CRC.size:
        raise PayloadError(f"{what} 数据被截断")
    reader = _Reader(data, what)
    magic, version, count, dim = reader.unpack(_SAMPLES_HEADER)
    _check_header(reader, SAMPLES_MAGIC, magic, version)
    body = _check_crc(data, what)
    row_bytes = (dim + 7) // 8
    expected = _SAMPLES_HEADER.size + count * (row_bytes + 8)
    if len(body) != expected:
        raise PayloadError(f"{what} 长度 {len(body)} 与记录数 {count} 不符 (期望 {expected})")
    if count == 0:
        return np.zeros((0, dim), dtype=np.uint8), np.zeros(0)
    raw = np.frombuffer(body, dtype=np.uint8, offset=_SAMPLES_HEADER.size).reshape(count, row_bytes + 8)
    solutions = np.unpackbits(raw[:, :row_bytes], axis=1, count=dim, bitorder="little")
    objectives = raw[:, row_bytes:].copy().view("<f8").reshape(count).astype(np.float64)
    return solutions.astype(np.uint8), objectives
