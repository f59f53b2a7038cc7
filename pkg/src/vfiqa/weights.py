"""Binary weights file: magic "VFIQA\\0", u16 format version, u32 tensor
count, then per tensor: u16 name length + utf-8 name, u8 dtype tag,
u8 rank, u32 dims, raw little-endian data. Round-trips bit-exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"VFIQA\0"
FORMAT_VERSION = 1

_DTYPE_TAGS = {np.dtype("float32"): 0, np.dtype("float64"): 1}
_TAG_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


class WeightsFormatError(ValueError):
    """The weights file is malformed or has an unsupported version."""


def save_tensors(path: str | Path, tensors: dict[str, np.ndarray],
                 version: int = FORMAT_VERSION) -> None:
    path = Path(path)
    chunks = [MAGIC, struct.pack("<H", version), struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        if arr.dtype not in _DTYPE_TAGS:
            raise WeightsFormatError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<BB", _DTYPE_TAGS[arr.dtype], arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        chunks.append(np.ascontiguousarray(le).tobytes())
    path.write_bytes(b"".join(chunks))


def load_tensors(path: str | Path) -> tuple[dict[str, np.ndarray], int]:
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise WeightsFormatError(f"{path}: bad magic bytes")
    off = len(MAGIC)

    def take(fmt: str):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(raw):
            raise WeightsFormatError(f"{path}: truncated file")
        vals = struct.unpack_from(fmt, raw, off)
        off += size
        return vals

    (version,) = take("<H")
    if version > FORMAT_VERSION:
        raise WeightsFormatError(f"{path}: unsupported format version {version}")
    (count,) = take("<I")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = take("<H")
        name = raw[off:off + name_len].decode("utf-8")
        off += name_len
        tag, rank = take("<BB")
        if tag not in _TAG_DTYPES:
            raise WeightsFormatError(f"{path}: unknown dtype tag {tag} for {name!r}")
        dims = take(f"<{rank}I") if rank else ()
        dtype = _TAG_DTYPES[tag]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize if rank else dtype.itemsize
        if rank == 0:
            nbytes = dtype.itemsize
        if off + nbytes > len(raw):
            raise WeightsFormatError(f"{path}: truncated data for {name!r}")
        arr = np.frombuffer(raw, dtype=dtype, count=nbytes // dtype.itemsize, offset=off)
        off += nbytes
        tensors[name] = arr.reshape(dims).astype(dtype.newbyteorder("="))
    if off != len(raw):
        raise WeightsFormatError(f"{path}: {len(raw) - off} trailing bytes")
    return tensors, version
