"""Binary checkpoint format.

Layout (all integers little-endian u32)::

    b"IARN" | version | config_len | config (UTF-8 key = value lines)
    | n_params | { name_len | name | rank | dims[rank] | float32 data }*
    | crc32 of every preceding byte
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from . import config as config_mod
from .config import TrainConfig

MAGIC = b"IARN"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(cfg: TrainConfig, params: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    cfg_bytes = config_mod.format_text(cfg).encode("utf-8")
    parts += [struct.pack("<I", len(cfg_bytes)), cfg_bytes, struct.pack("<I", len(params))]
    for name, arr in params.items():
        name_b = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        parts += [
            struct.pack("<I", len(name_b)),
            name_b,
            struct.pack("<I", arr.ndim),
            struct.pack(f"<{arr.ndim}I", *arr.shape),
            arr.tobytes(),
        ]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError("checkpoint truncated")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def loads(buf: bytes) -> tuple[TrainConfig, dict[str, np.ndarray]]:
    if len(buf) < 12 or buf[:4] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("checkpoint CRC mismatch")
    r = _Reader(body)
    r.take(4)
    version = r.u32()
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    cfg_text = r.take(r.u32()).decode("utf-8")
    cfg = config_mod.from_flat(config_mod.parse_text(cfg_text))
    params: dict[str, np.ndarray] = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank))
        count = int(np.prod(dims, dtype=np.int64))
        data = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(dims)
        params[name] = data.astype(np.float32)
    if r.pos != len(body):
        raise CheckpointError("trailing bytes after parameter table")
    return cfg, params


def save(path, cfg: TrainConfig, params: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(cfg, params))


def load(path) -> tuple[TrainConfig, dict[str, np.ndarray]]:
    return loads(Path(path).read_bytes())
