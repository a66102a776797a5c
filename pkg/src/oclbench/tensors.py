"""Feature maps, vectors and the OCLT binary tensor record.

Record layout (all integers little-endian)::

    offset  size        field
    0       4           magic b"OCLT"
    4       1           version (1)
    5       1           rank (1 or 3)
    6       4 * rank    dims, uint32
    ...     4 * prod    payload, IEEE-754 float32, row-major, channel innermost
    ...     8           XXH64 (seed 0) of every preceding byte, uint64

A rank-1 record decodes to a 1-D float32 ``numpy`` array, a rank-3 record to
a :class:`FeatureMap`.
"""

import io
import struct
from dataclasses import dataclass

import numpy as np
import xxhash

from .errors import ChecksumError, ContractError, DataError, FormatError, TruncationError

MAGIC = b"OCLT"
VERSION = 1
CHECKSUM_SIZE = 8


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """An ``h x w x d`` activation tensor stored as float32."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ContractError(f"feature map must be h x w x d with positive sizes, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DataError("feature map contains non-finite values")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def h(self):
        return self.data.shape[0]

    @property
    def w(self):
        return self.data.shape[1]

    @property
    def d(self):
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, FeatureMap):
            return NotImplemented
        return self.shape == other.shape and self.data.tobytes() == other.data.tobytes()

    def __hash__(self):
        return hash((self.shape, self.data.tobytes()))


def checksum(data):
    return xxhash.xxh64_intdigest(data, seed=0)


def write_tensor_record(tensor):
    """Encode a :class:`FeatureMap` or 1-D array as OCLT bytes."""
    if isinstance(tensor, FeatureMap):
        arr = tensor.data
    else:
        arr = np.asarray(tensor)
        if arr.ndim != 1:
            raise ContractError(f"only rank-1 vectors or FeatureMaps can be written, got rank {arr.ndim}")
        if arr.size < 1:
            raise ContractError("vector must have dim >= 1")
        arr = arr.astype(np.float32)
        if not np.all(np.isfinite(arr)):
            raise DataError("vector contains non-finite values")
    header = MAGIC + struct.pack("<BB", VERSION, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    body = header + arr.astype("<f4", copy=False).tobytes(order="C")
    return body + struct.pack("<Q", checksum(body))


def read_tensor_record(source):
    """Decode one OCLT record from bytes or a binary file object."""
    if isinstance(source, (bytes, bytearray, memoryview)):
        buf = bytes(source)
    elif isinstance(source, io.IOBase) or hasattr(source, "read"):
        buf = source.read()
    else:
        raise ContractError(f"cannot read a tensor record from {type(source).__name__}")

    if len(buf) < 6 or buf[:4] != MAGIC:
        raise FormatError("bad magic: not an OCLT record")
    version, rank = buf[4], buf[5]
    if version != VERSION:
        raise FormatError(f"unsupported OCLT version {version}")
    if rank not in (1, 3):
        raise FormatError(f"unsupported rank {rank}")
    dims_end = 6 + 4 * rank
    if len(buf) < dims_end:
        raise TruncationError("record ends inside the dims block")
    dims = struct.unpack(f"<{rank}I", buf[6:dims_end])
    if min(dims) < 1:
        raise FormatError(f"dims must be positive, got {dims}")
    count = int(np.prod(dims, dtype=np.int64))
    expected = dims_end + 4 * count + CHECKSUM_SIZE
    if len(buf) != expected:
        have = max(0, len(buf) - dims_end - CHECKSUM_SIZE) // 4
        raise TruncationError(f"dims {dims} need {count} floats, record holds {have}")
    body = buf[: expected - CHECKSUM_SIZE]
    (stored,) = struct.unpack("<Q", buf[-CHECKSUM_SIZE:])
    if stored != checksum(body):
        raise ChecksumError("checksum mismatch")
    payload = np.frombuffer(body, dtype="<f4", offset=dims_end, count=count).astype(np.float32)
    if not np.all(np.isfinite(payload)):
        raise DataError("payload contains non-finite values")
    if rank == 1:
        return payload
    return FeatureMap(payload.reshape(dims))


def load_tensor_record(path):
    with open(path, "rb") as fh:
        return read_tensor_record(fh)


def save_tensor_record(path, tensor):
    with open(path, "wb") as fh:
        fh.write(write_tensor_record(tensor))
