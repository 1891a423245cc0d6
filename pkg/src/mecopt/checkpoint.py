"""Versioned binary container for named float64 tensors.

Byte layout (all integers little-endian, no padding):

    offset  size  field
    0       8     magic, the ASCII bytes "MECOPT01"
    8       4     format version, uint32 (currently 1)
    12      4     tensor count N, uint32
    then N records, each:
        2             name length L, uint16
        L             tensor name, UTF-8
        1             ndim D, uint8
        4 * D         dims, uint32 each
        8 * prod(dim) data, float64 little-endian, row-major (C order)

Scalars are stored as 1-element 1-D tensors. Names are sorted on write so
equal contents produce identical bytes.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"MECOPT01"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(tensors)))
        for name in sorted(tensors):
            arr = np.ascontiguousarray(tensors[name], dtype="<f8")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.tobytes(order="C"))


def load_tensors(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise CheckpointError("bad magic; not a checkpoint file")
    version, count = struct.unpack_from("<II", blob, 8)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    offset = 16
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", blob, offset)
        offset += 1
        dims = struct.unpack_from(f"<{ndim}I", blob, offset) if ndim else ()
        offset += 4 * ndim
        size = int(np.prod(dims)) if ndim else 1
        data = np.frombuffer(blob, dtype="<f8", count=size, offset=offset)
        offset += 8 * size
        tensors[name] = data.reshape(dims).astype(float)
    if offset != len(blob):
        raise CheckpointError("trailing bytes after last tensor")
    return tensors
