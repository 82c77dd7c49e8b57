"""Binary parameter checkpoints.

Layout (all little-endian)::

    b"CDSC"  version:u16
    repeated until EOF:
        name_len:u16  name:utf-8  rank:u8  dims:u32 * rank  payload:f32 * prod(dims)
"""
from __future__ import annotations

import struct
from collections.abc import Mapping
from pathlib import Path

import numpy as np

MAGIC = b"CDSC"
VERSION = 1


def save_checkpoint(path, arrays: Mapping[str, np.ndarray]) -> None:
    chunks = [MAGIC, struct.pack("<H", VERSION)]
    for name, value in arrays.items():
        value = np.asarray(value.data if hasattr(value, "data") and not isinstance(value, np.ndarray) else value)
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"parameter name too long: {name[:40]}...")
        if value.ndim > 0xFF:
            raise ValueError(f"rank {value.ndim} too large for {name}")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<B", value.ndim))
        chunks.append(struct.pack(f"<{value.ndim}I", *value.shape))
        chunks.append(np.ascontiguousarray(value, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    (version,) = struct.unpack_from("<H", buf, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 6
    out: dict[str, np.ndarray] = {}
    while pos < len(buf):
        (n,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos:pos + n].decode("utf-8")
        pos += n
        (rank,) = struct.unpack_from("<B", buf, pos)
        pos += 1
        dims = struct.unpack_from(f"<{rank}I", buf, pos)
        pos += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(buf, dtype="<f4", count=count, offset=pos)
        pos += 4 * count
        out[name] = data.reshape(dims).astype(np.float32)
    return out
