"""Raw tensor container.

Layout: magic b"SPTN", version u16, rank u16, then one u32 per dimension,
then the payload in row-major order, everything little-endian.  Version 1
carries float32 payloads (rasters on disk), version 2 carries float64
(weight checkpoints, where bit-exact round trips matter).
"""

import struct

import numpy as np

from .errors import IoFailure, MalformedHeader

MAGIC = b"SPTN"

_VERSION_DTYPE = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_DTYPE_VERSION = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}


def write_tensor_to(fh, array):
    array = np.ascontiguousarray(array)
    if array.dtype not in _DTYPE_VERSION:
        raise ValueError(f"unsupported tensor dtype {array.dtype}")
    version = _DTYPE_VERSION[array.dtype]
    fh.write(MAGIC)
    fh.write(struct.pack("<HH", version, array.ndim))
    fh.write(struct.pack(f"<{array.ndim}I", *array.shape))
    fh.write(array.astype(_VERSION_DTYPE[version], copy=False).tobytes())


def read_tensor_from(fh, name="<stream>"):
    head = fh.read(8)
    if len(head) < 8 or head[:4] != MAGIC:
        raise MalformedHeader(f"{name}: bad magic, expected {MAGIC!r}")
    version, rank = struct.unpack("<HH", head[4:8])
    if version not in _VERSION_DTYPE:
        raise MalformedHeader(f"{name}: unsupported version {version}")
    dim_bytes = fh.read(4 * rank)
    if len(dim_bytes) < 4 * rank:
        raise MalformedHeader(f"{name}: truncated dimension header")
    dims = struct.unpack(f"<{rank}I", dim_bytes)
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    dtype = _VERSION_DTYPE[version]
    payload = fh.read(count * dtype.itemsize)
    if len(payload) < count * dtype.itemsize:
        raise MalformedHeader(f"{name}: truncated payload")
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()


def write_tensor(path, array):
    try:
        with open(path, "wb") as fh:
            write_tensor_to(fh, array)
    except OSError as exc:
        raise IoFailure(f"cannot write tensor file {path}: {exc}") from exc


def read_tensor(path):
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise IoFailure(f"cannot read tensor file {path}: {exc}") from exc
    with fh:
        return read_tensor_from(fh, name=str(path))
