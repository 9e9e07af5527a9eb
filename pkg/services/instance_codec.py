"""
实例文件编解码 (XFI1)
头部: magic | version u16 | class u8 | dim u32 | seed u64 | payload_len u64
负载: 命名数组列表（小端）；尾部 crc32(payload)
"""
import dataclasses
import json
import os
import struct
import zlib
from typing import Dict, Union

import numpy as np

from models.problem_model import PARAMS_TYPES, ExternalParams, ProblemClass, ProblemInstance
from utils.exceptions import FormatVersionError, PayloadError
from utils.logger import log_debug

INSTANCE_MAGIC = b"XFI1"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sHBIQQ")
_CRC = struct.Struct("<I")

# 字段类型编码
_KIND_F64, _KIND_I64, _KIND_U8, _KIND_U64, _KIND_TEXT = range(5)
_DTYPES = {_KIND_F64: "<f8", _KIND_I64: "<i8", _KIND_U8: "u1", _KIND_U64: "<u8"}


def _kind_of(array: np.ndarray) -> int:
    if array.dtype == np.uint8:
        return _KIND_U8
    if array.dtype == np.uint64:
        return _KIND_U64
    if np.issubdtype(array.dtype, np.integer):
        return _KIND_I64
    return _KIND_F64


def _encode_field(name: str, value) -> bytes:
    key = name.encode("utf-8")
    head = struct.pack("<B", len(key)) + key
    if isinstance(value, (str, tuple)):
        text = json.dumps(value, ensure_ascii=False).encode("utf-8")
        return head + struct.pack("<BQ", _KIND_TEXT, len(text)) + text
    array = np.asarray(value)
    kind = _kind_of(array)
    data = np.ascontiguousarray(array, dtype=_DTYPES[kind])
    shape = struct.pack(f"<B{array.ndim}Q", array.ndim, *array.shape)
    return head + struct.pack("<B", kind) + shape + data.tobytes()


def _encode_params(params) -> bytes:
    fields = dataclasses.fields(params)
    parts = [struct.pack("<H", len(fields))]
    for f in fields:
        parts.append(_encode_field(f.name, getattr(params, f.name)))
    return b"".join(parts)


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise PayloadError("实例负载被截断")
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _decode_field(cursor: _Cursor):
    (length,) = cursor.unpack("<B")
    name = cursor.take(length).decode("utf-8")
    (kind,) = cursor.unpack("<B")
    if kind == _KIND_TEXT:
        (size,) = cursor.unpack("<Q")
        value = json.loads(cursor.take(size).decode("utf-8"))
        return name, value
    if kind not in _DTYPES:
        raise PayloadError(f"字段 {name} 的类型编码未知: {kind}")
    (ndim,) = cursor.unpack("<B")
    shape = cursor.unpack(f"<{ndim}Q") if ndim else ()
    dtype = np.dtype(_DTYPES[kind])
    count = int(np.prod(shape)) if ndim else 1
    array = np.frombuffer(cursor.take(count * dtype.itemsize), dtype=dtype).reshape(shape)
    if ndim == 0:
        return name, array.item()
    return name, array.astype(dtype.newbyteorder("="))


def _decode_params(class_tag: ProblemClass, payload: bytes):
    cursor = _Cursor(payload)
    (count,) = cursor.unpack("<H")
    values: Dict[str, object] = dict(_decode_field(cursor) for _ in range(count))
    if cursor.offset != len(payload):
        raise PayloadError("实例负载末尾存在多余数据")
    params_type = PARAMS_TYPES[class_tag]
    if params_type is ExternalParams:
        values["command"] = tuple(values.get("command", ()))
        values["env"] = tuple(tuple(pair) for pair in values.get("env", ()))
    try:
        return params_type(**values)
    except TypeError as e:
        raise PayloadError(f"实例字段与 {class_tag.value} 参数不匹配: {e}")


def save_instance(instance: ProblemInstance) -> bytes:
    """序列化实例（包含全部冻结的蒙特卡洛抽样）"""
    payload = _encode_params(instance.params)
    header = _HEADER.pack(INSTANCE_MAGIC, FORMAT_VERSION, instance.class_tag.code, instance.dim,
                          instance.seed & 0xFFFFFFFFFFFFFFFF, len(payload))
    return header + payload + _CRC.pack(zlib.crc32(payload) & 0xFFFFFFFF)


def load_instance(data: Union[bytes, bytearray]) -> ProblemInstance:
    """反序列化实例"""
    data = bytes(data)
    if len(data) < _HEADER.size:
        raise PayloadError(f"实例数据被截断: 仅 {len(data)} 字节")
    magic, version, code, dim, seed, length = _HEADER.unpack_from(data)
    if magic != INSTANCE_MAGIC:
        raise PayloadError(f"实例魔数错误: {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatVersionError(f"实例格式版本不匹配: {version}，期望 {FORMAT_VERSION}",
                                 expected=FORMAT_VERSION, found=version)
    end = _HEADER.size + length
    if len(data) != end + _CRC.size:
        raise PayloadError(f"实例数据长度不符: {len(data)}，期望 {end + _CRC.size}")
    payload = data[_HEADER.size:end]
    (crc,) = _CRC.unpack_from(data, end)
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise PayloadError("实例数据校验和不匹配，文件已损坏")
    class_tag = ProblemClass.from_code(code)
    return ProblemInstance(class_tag, dim, seed, _decode_params(class_tag, payload))


def write_instance_file(instance: ProblemInstance, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        f.write(save_instance(instance))
    log_debug(f"实例已写入 {path}")
    return path


def read_instance_file(path: str) -> ProblemInstance:
    if not os.path.exists(path):
        raise PayloadError(f"实例文件不存在: {path}", path=path)
    with open(path, "rb") as f:
        data = f.read()
    try:
        return load_instance(data)
    except PayloadError as e:
        e.path = path
        raise
