"""Binary container for named float32 tensors (``CIDRW001``).

Layout, all integers little-endian u32::

    b"CIDRW001"
    layer_count
    repeated layer_count times:
        name_length, name (UTF-8), rank, dims[rank], float32 data (LE)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"CIDRW001"


def dumps(tensors: dict[str, np.ndarray]) -> bytes:
    out = [MAGIC, struct.pack("<I", len(tensors))]
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)))
        out.append(raw)
        out.append(struct.pack("<I", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def loads(data: bytes) -> dict[str, np.ndarray]:
    if data[:8] != MAGIC:
        raise FormatError(f"bad magic {data[:8]!r}; expected {MAGIC!r}")
    pos = 8

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise FormatError(f"weights file truncated at byte {pos} (wanted {n} more)")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        try:
            name = take(nlen).decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("layer name is not valid UTF-8") from None
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        n = int(np.prod(dims, dtype=np.int64))
        arr = np.frombuffer(take(4 * n), dtype="<f4").astype(np.float32).reshape(dims)
        if not np.all(np.isfinite(arr)):
            raise FormatError(f"layer {name!r} contains non-finite values")
        tensors[name] = arr
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes after the last layer")
    return tensors


def load(path) -> dict[str, np.ndarray]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read weights file {path}: {exc}") from exc
    return loads(data)


def save(path, tensors: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(tensors))
