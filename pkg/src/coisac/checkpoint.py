"""Self-describing binary container for model (and optimizer) tensors.

Layout, little-endian throughout:

    magic 'BFCK' | version u16 | header_len u32 | header JSON (utf-8)
    | n_tensors u32
    | per tensor: name_len u16, name utf-8, ndim u8, dims u32*, data f32

The JSON header carries the model kind and the constructor arguments
needed to rebuild it (layer schedule, system sizes, relation list), plus
free-form metadata.  Values round-trip exactly at 32-bit precision, which
is also the models' native parameter precision.
"""

from __future__ import annotations

import json
import struct
from typing import Dict, Tuple

import numpy as np

from .errors import FormatError

__all__ = ["save_checkpoint", "load_checkpoint"]

_MAGIC = b"BFCK"
_VERSION = 1


def save_checkpoint(path, header: dict, tensors: Dict[str, np.ndarray]) -> None:
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HI", _VERSION, len(header_bytes)))
        fh.write(header_bytes)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype="<f4")
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path) -> Tuple[dict, Dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 10 or data[:4] != _MAGIC:
        raise FormatError(f"{path}: not a checkpoint container")
    version, header_len = struct.unpack_from("<HI", data, 4)
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    off = 10
    try:
        header = json.loads(data[off:off + header_len].decode("utf-8"))
        off += header_len
        (n_tensors,) = struct.unpack_from("<I", data, off)
        off += 4
        tensors = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off:off + name_len].decode("utf-8")
            off += name_len
            (ndim,) = struct.unpack_from("<B", data, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}I", data, off)
            off += 4 * ndim
            count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            arr = np.frombuffer(data, dtype="<f4", count=count, offset=off)
            off += 4 * count
            tensors[name] = arr.reshape(shape).copy()
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: truncated or corrupt checkpoint ({exc})") from exc
    if off != len(data):
        raise FormatError(f"{path}: {len(data) - off} trailing bytes")
    return header, tensors
