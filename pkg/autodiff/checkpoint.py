# autodiff/checkpoint.py

import struct

import numpy as np

from exceptions import CheckpointError

MAGIC = b"TITN"
FORMAT_VERSION = 1

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


def encode_tensors(tensors):
    """
    Serialise named arrays into the checkpoint byte layout.

    :param tensors: Ordered mapping of name to array-like; payloads are stored as little-endian float32
    :return: bytes
    """
    chunks = [MAGIC, _U32.pack(FORMAT_VERSION), _U32.pack(len(tensors))]
    for name, value in tensors.items():
        array = np.ascontiguousarray(np.asarray(value, dtype="<f4"))
        encoded = name.encode("utf-8")
        chunks.append(_U32.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(_U32.pack(array.ndim))
        chunks.extend(_U64.pack(dim) for dim in array.shape)
        chunks.append(array.tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, payload):
        self.payload = payload
        self.offset = 0

    def take(self, size, what):
        end = self.offset + size
        if end > len(self.payload):
            raise CheckpointError(f"truncated checkpoint while reading {what}")
        chunk = self.payload[self.offset : end]
        self.offset = end
        return chunk

    def u32(self, what):
        return _U32.unpack(self.take(4, what))[0]

    def u64(self, what):
        return _U64.unpack(self.take(8, what))[0]


def decode_tensors(payload):
    reader = _Reader(payload)
    magic = reader.take(4, "magic")
    if magic != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {magic!r}, expected {MAGIC!r}")
    version = reader.u32("version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}, expected {FORMAT_VERSION}")

    tensors = {}
    for _ in range(reader.u32("tensor count")):
        name_length = reader.u32("name length")
        try:
            name = reader.take(name_length, "name").decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointError(f"corrupt tensor name: {e}")
        rank = reader.u32(f"rank of {name}")
        shape = tuple(reader.u64(f"dims of {name}") for _ in range(rank))
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        data = reader.take(4 * count, f"payload of {name}")
        tensors[name] = np.frombuffer(data, dtype="<f4").reshape(shape).astype(np.float32)
    if reader.offset != len(payload):
        raise CheckpointError(f"{len(payload) - reader.offset} trailing bytes after last tensor")
    return tensors


def save_tensors(path, tensors):
    with open(path, "wb") as f:
        f.write(encode_tensors(tensors))


def load_tensors(path):
    try:
        with open(path, "rb") as f:
            payload = f.read()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}")
    return decode_tensors(payload)
