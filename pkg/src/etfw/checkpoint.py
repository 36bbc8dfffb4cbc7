"""Bit-exact binary checkpoints.

Layout: magic b"ETFW", format version (u32 LE), arch_id (u32 length + utf-8),
then per-tensor records: name (u32 length + utf-8), rank (u32), dims (u32
each), payload as little-endian float64 row-major. The file ends with a u64
checksum: the sum of all payload bytes mod 2**64.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"ETFW"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _write_str(buf: bytearray, s: str) -> None:
    raw = s.encode("utf-8")
    buf += struct.pack("<I", len(raw))
    buf += raw


def save(path: str, arch_id: str, tensors: dict[str, np.ndarray]) -> None:
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<I", VERSION)
    _write_str(buf, arch_id)
    checksum = 0
    for name, arr in tensors.items():
        # note: ascontiguousarray would promote 0-d arrays to 1-d
        arr = np.asarray(arr, dtype="<f8")
        if not arr.flags.c_contiguous:
            arr = arr.copy(order="C")
        _write_str(buf, name)
        buf += struct.pack("<I", arr.ndim)
        for d in arr.shape:
            buf += struct.pack("<I", d)
        payload = arr.tobytes()
        checksum = (checksum + sum(payload)) % 2**64
        buf += payload
    buf += struct.pack("<Q", checksum)
    with open(path, "wb") as fh:
        fh.write(bytes(buf))


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise CheckpointError("truncated checkpoint")
        out = self.raw[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def load(path: str) -> tuple[str, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise CheckpointError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}")
    r = _Reader(raw)
    r.take(4)
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    arch_id = r.string()
    tensors: dict[str, np.ndarray] = {}
    checksum = 0
    while r.pos < len(raw) - 8:
        name = r.string()
        rank = r.u32()
        dims = tuple(r.u32() for _ in range(rank))
        count = int(np.prod(dims)) if dims else 1
        payload = r.take(count * 8)
        checksum = (checksum + sum(payload)) % 2**64
        tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
    stored = struct.unpack("<Q", r.take(8))[0]
    if stored != checksum:
        raise CheckpointError(f"checksum mismatch: stored {stored}, computed {checksum}")
    return arch_id, tensors


def save_model(path: str, model) -> None:
    save(path, model.arch_id, {k: v.data for k, v in model.parameters().items()})


def load_model(path: str, s: float = 0.1):
    from .model import build_from_arch_id

    arch_id, tensors = load(path)
    model = build_from_arch_id(arch_id, s=s)
    params = model.parameters()
    if set(params) != set(tensors):
        raise CheckpointError(
            f"parameter names mismatch: checkpoint {sorted(tensors)} vs arch {sorted(params)}"
        )
    for name, arr in tensors.items():
        if params[name].data.shape != arr.shape:
            raise CheckpointError(f"shape mismatch for {name}")
        params[name].data = arr.astype(params[name].data.dtype)
    return model
