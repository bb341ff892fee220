"""Checkpoints, task vectors and the ``NPSC`` on-disk format.

A checkpoint is an ordered list of named tensors flattened into one float32
vector; every index used elsewhere in the package refers to this flat order.

Task-vector deltas are held in float64. The difference of two float32
numbers is exact in float64 (for exponents less than 29 binades apart), so
``apply(pre, diff(ft, pre))`` reproduces ``ft`` bit for bit, which a float32
delta cannot guarantee when ``ft - pre`` cancels.
"""

import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    BadMagicError,
    InvalidArgumentError,
    NonFiniteValueError,
    ParseError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from .validation import check_same_specs

CHECKPOINT_MAGIC = b"NPSC"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TensorSpec:
    name: str
    shape: tuple
    offset: int

    @property
    def size(self):
        return math.prod(self.shape)


def build_specs(named_shapes):
    """Turn ``[(name, shape), ...]`` into a tuple of ``TensorSpec`` with running offsets."""
    specs, offset, seen = [], 0, set()
    for name, shape in named_shapes:
        shape = tuple(int(s) for s in shape)
        if name in seen:
            raise InvalidArgumentError(f"duplicate tensor name {name!r}")
        if any(s <= 0 for s in shape):
            raise InvalidArgumentError(f"tensor {name!r} has non-positive dimension {shape}")
        seen.add(name)
        specs.append(TensorSpec(name, shape, offset))
        offset += math.prod(shape)
    return tuple(specs)


def _total_size(specs):
    return specs[-1].offset + specs[-1].size if specs else 0


def _readonly(arr, dtype):
    arr = np.array(arr, dtype=dtype, copy=True).reshape(-1)
    arr.flags.writeable = False
    return arr


class _FlatParams:
    dtype = None

    def __init__(self, specs, values):
        specs = tuple(specs)
        values = _readonly(values, self.dtype)
        expected = _total_size(specs)
        if values.shape[0] != expected:
            raise InvalidArgumentError(
                f"values have {values.shape[0]} elements but specs declare {expected}"
            )
        self.specs = specs
        self.values = values

    def __len__(self):
        return self.values.shape[0]

    @property
    def names(self):
        return [s.name for s in self.specs]

    def tensor(self, name):
        for s in self.specs:
            if s.name == name:
                return self.values[s.offset:s.offset + s.size].reshape(s.shape)
        raise KeyError(name)

    def tensors(self):
        return {s.name: self.values[s.offset:s.offset + s.size].reshape(s.shape)
                for s in self.specs}

    def bit_equal(self, other):
        """True when layouts match and every value has the identical bit pattern."""
        if type(self) is not type(other) or self.specs != other.specs:
            return False
        return self.values.tobytes() == other.values.tobytes()

    def __repr__(self):
        return f"{type(self).__name__}(tensors={len(self.specs)}, size={len(self)})"


class Checkpoint(_FlatParams):
    """Named float32 parameter tensors with a canonical flat ordering."""

    dtype = np.float32

    @classmethod
    def from_arrays(cls, arrays):
        """Build from an ordered mapping or sequence of ``(name, array)`` pairs."""
        items = list(arrays.items()) if hasattr(arrays, "items") else list(arrays)
        specs = build_specs((name, np.shape(a)) for name, a in items)
        if not items:
            return cls(specs, np.zeros(0, np.float32))
        flat = np.concatenate([np.asarray(a, dtype=np.float32).reshape(-1) for _, a in items])
        return cls(specs, flat)

    def with_values(self, values):
        return Checkpoint(self.specs, values)


class TaskVector(_FlatParams):
    """Element-wise delta between a fine-tuned and a pre-trained checkpoint (float64)."""

    dtype = np.float64

    def with_values(self, values):
        return TaskVector(self.specs, values)


def diff(fine_tuned, pre_trained):
    """Task vector ``fine_tuned - pre_trained``."""
    check_same_specs(pre_trained, fine_tuned)
    delta = fine_tuned.values.astype(np.float64) - pre_trained.values.astype(np.float64)
    return TaskVector(pre_trained.specs, delta)


def apply(base, tv, scale=1.0):
    """Checkpoint ``base + scale * tv`` rounded once to float32."""
    check_same_specs(base, tv)
    scale = float(scale)
    if not math.isfinite(scale):
        raise InvalidArgumentError(f"scale must be finite, got {scale}")
    if scale == 0.0:
        return Checkpoint(base.specs, base.values)
    out = base.values.astype(np.float64) + scale * tv.values
    return Checkpoint(base.specs, out.astype(np.float32))


# -- serialization -----------------------------------------------------------

def encode_checkpoint(ckpt):
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(ckpt.specs))]
    for s in ckpt.specs:
        name = s.name.encode("utf-8")
        if len(name) > 0xFFFF:
            raise InvalidArgumentError(f"tensor name too long: {s.name[:40]}...")
        if len(s.shape) > 0xFF:
            raise InvalidArgumentError(f"tensor {s.name!r} has rank {len(s.shape)} > 255")
        parts.append(struct.pack("<H", len(name)))
        parts.append(name)
        parts.append(struct.pack(f"<B{len(s.shape)}Q", len(s.shape), *s.shape))
    parts.append(np.asarray(ckpt.values, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data, pos=0):
        self.data = memoryview(data)
        self.pos = pos

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise TruncatedPayloadError(
                f"truncated {what}: need {n} bytes at offset {self.pos}, "
                f"only {len(self.data) - self.pos} remain"
            )
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size, what))


def decode_checkpoint(data, pos=0):
    """Decode one checkpoint starting at ``pos``; returns ``(checkpoint, end_pos)``."""
    rd = _Reader(data, pos)
    magic = bytes(rd.take(4, "magic"))
    if magic != CHECKPOINT_MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
    version, count = rd.unpack("<II", "header")
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(
            f"unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})")
    named_shapes = []
    for i in range(count):
        (name_len,) = rd.unpack("<H", f"tensor record {i}")
        try:
            name = bytes(rd.take(name_len, f"tensor record {i}")).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"tensor record {i}: name is not valid UTF-8") from exc
        (rank,) = rd.unpack("<B", f"tensor record {i}")
        dims = rd.unpack(f"<{rank}Q", f"tensor record {i}")
        named_shapes.append((name, dims))
    try:
        specs = build_specs(named_shapes)
    except InvalidArgumentError as exc:
        raise ParseError(str(exc)) from exc
    total = _total_size(specs)
    payload = rd.take(4 * total, "payload")
    values = np.frombuffer(payload, dtype="<f4").astype(np.float32)
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise NonFiniteValueError(f"non-finite value at flat index {bad}")
    return Checkpoint(specs, values), rd.pos


def save_checkpoint(ckpt, path):
    data = encode_checkpoint(ckpt)
    with open(os.fspath(path), "wb") as fh:
        fh.write(data)


def load_checkpoint(path):
    with open(os.fspath(path), "rb") as fh:
        data = fh.read()
    ckpt, end = decode_checkpoint(data)
    if end != len(data):
        raise ParseError(f"{len(data) - end} trailing bytes after checkpoint payload")
    return ckpt
