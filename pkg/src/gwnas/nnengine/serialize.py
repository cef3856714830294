"""GWNN flat binary container for trained tensors.

Little-endian layout::

    b"GWNN"  u32 version  u32 tensor_count
    per tensor:  u16 name_len  name (utf-8)  u8 ndim  u32 dims[ndim]  f32 payload
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"GWNN"
VERSION = 1


class ParamFormatError(ValueError):
    pass


def dumps_params(tensors: dict) -> bytes:
    out = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def loads_params(blob: bytes) -> dict:
    if blob[:4] != MAGIC:
        raise ParamFormatError("bad magic, not a GWNN file")
    try:
        version, count = struct.unpack_from("<II", blob, 4)
        if version != VERSION:
            raise ParamFormatError(f"unsupported GWNN version {version}")
        pos, tensors = 12, {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            name = blob[pos:pos + n].decode("utf-8")
            pos += n
            (ndim,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            dims = struct.unpack_from(f"<{ndim}I", blob, pos)
            pos += 4 * ndim
            size = 4 * int(np.prod(dims, dtype=np.int64))
            if pos + size > len(blob):
                raise ParamFormatError(f"truncated payload for {name!r}")
            tensors[name] = np.frombuffer(blob, dtype="<f4", count=size // 4, offset=pos).reshape(dims).astype(np.float32)
            pos += size
    except struct.error as exc:
        raise ParamFormatError(f"truncated GWNN file: {exc}") from None
    if pos != len(blob):
        raise ParamFormatError(f"{len(blob) - pos} trailing bytes")
    return tensors


def save_params(path, tensors: dict) -> None:
    Path(path).write_bytes(dumps_params(tensors))


def load_params(path) -> dict:
    return loads_params(Path(path).read_bytes())
