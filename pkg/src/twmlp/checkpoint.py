"""Binary checkpoint container for ModelParams.

Layout (little-endian)::

    6s   magic b"TWMLP\\0"
    u32  format version (1)
    u32  config length N, then N bytes of UTF-8 JSON ModelConfig
    u32  tensor count
    per tensor, in declaration order:
        u32 ndim, ndim x u32 dims, prod(dims) x f32 values
"""

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .model import ModelConfig, ModelParams, param_shapes

MAGIC = b"TWMLP\0"
VERSION = 1
_U32 = struct.Struct("<I")


def params_to_bytes(params):
    cfg = json.dumps(params.config.to_dict(), sort_keys=True).encode()
    out = [MAGIC, _U32.pack(VERSION), _U32.pack(len(cfg)), cfg, _U32.pack(len(params.tensors))]
    for name in param_shapes(params.config):
        arr = params.tensors[name]
        out.append(_U32.pack(arr.ndim))
        out.extend(_U32.pack(d) for d in arr.shape)
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated {what}", len(self.data))
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what):
        return _U32.unpack(self.take(4, what))[0]


def params_from_bytes(data, dtype=np.float32):
    r = _Reader(data)
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise FormatError("bad checkpoint magic", 0)
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", len(MAGIC))
    cfg_at = r.pos
    try:
        config = ModelConfig.from_dict(json.loads(r.take(r.u32("config length"), "config").decode()))
    except (ValueError, TypeError) as exc:
        raise FormatError(f"invalid model config: {exc}", cfg_at) from exc
    shapes = param_shapes(config)
    count_at = r.pos
    if r.u32("tensor count") != len(shapes):
        raise FormatError("tensor count does not match config", count_at)
    tensors = {}
    for name, shape in shapes.items():
        at = r.pos
        ndim = r.u32("tensor header")
        dims = tuple(r.u32("tensor header") for _ in range(ndim))
        if dims != tuple(shape):
            raise FormatError(f"tensor {name} has shape {dims}, expected {shape}", at)
        n = int(np.prod(dims, dtype=np.int64))
        raw = np.frombuffer(r.take(4 * n, f"tensor {name}"), dtype="<f4").reshape(dims)
        tensors[name] = raw.astype(dtype)
    if r.pos != len(data):
        raise FormatError("trailing bytes after last tensor", r.pos)
    return ModelParams(config, tensors)


def save_checkpoint(params, path):
    Path(path).write_bytes(params_to_bytes(params))


def load_checkpoint(path, dtype=np.float32):
    return params_from_bytes(Path(path).read_bytes(), dtype=dtype)
