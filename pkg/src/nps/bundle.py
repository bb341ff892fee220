"""Compressed multi-task storage: one base checkpoint plus per-task masks and kept values.

File layout (little-endian)::

    b"NPSB" | u32 version=1 | embedded NPSC base checkpoint | u32 task count
    per task: u16 name length | UTF-8 name | f64 ratio | u64 kept count
              | ceil(D/8) packed mask bytes (LSB-first) | kept x f32 values

The kept f32 values are the reconstructed parameters ``base + delta`` at the
masked positions; deltas are recovered exactly as ``value - base`` in float64,
so reconstruction after a round trip is bit-identical.
"""

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    BadMagicError,
    InvalidArgumentError,
    ParseError,
    TaskNotFoundError,
    VersionMismatchError,
)
from .params import _Reader, decode_checkpoint, encode_checkpoint
from .pruning import Mask, PrunedTaskVector
from .validation import check_same_specs

BUNDLE_MAGIC = b"NPSB"
BUNDLE_VERSION = 1


@dataclass
class CompressedBundle:
    base: object
    entries: dict = field(default_factory=dict)
    format_version: int = BUNDLE_VERSION

    @property
    def task_names(self):
        return list(self.entries)

    def stored_bits(self):
        """Payload bits as accounted for storage: 32 per base value, 32 per kept value, 1 per mask bit."""
        D = len(self.base)
        return 32 * D + sum(32 * p.mask.kept + D for p in self.entries.values())


def compress(base, pruned):
    """Bundle ``base`` with ``[(task_name, PrunedTaskVector), ...]``."""
    entries = {}
    for name, ptv in pruned:
        if name in entries:
            raise InvalidArgumentError(f"duplicate task name {name!r}")
        check_same_specs(base, ptv)
        entries[name] = ptv
    return CompressedBundle(base, entries)


def reconstruct(bundle, task_name):
    """The pruned fine-tuned checkpoint of ``task_name``."""
    try:
        ptv = bundle.entries[task_name]
    except KeyError:
        known = ", ".join(bundle.entries) or "none"
        raise TaskNotFoundError(f"no task {task_name!r} in bundle (tasks: {known})") from None
    return ptv.reconstruct(bundle.base)


def encode_bundle(bundle):
    base = bundle.base
    parts = [BUNDLE_MAGIC, struct.pack("<I", BUNDLE_VERSION), encode_checkpoint(base),
             struct.pack("<I", len(bundle.entries))]
    for name, ptv in bundle.entries.items():
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise InvalidArgumentError("task name too long")
        idx = ptv.indices()
        kept_params = (base.values[idx].astype(np.float64) + ptv.values).astype("<f4")
        parts += [struct.pack("<H", len(raw)), raw,
                  struct.pack("<dQ", float(ptv.ratio), idx.shape[0]),
                  ptv.mask.bits.tobytes(), kept_params.tobytes()]
    return b"".join(parts)


def decode_bundle(data):
    rd = _Reader(data)
    magic = bytes(rd.take(4, "magic"))
    if magic != BUNDLE_MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {BUNDLE_MAGIC!r}")
    (version,) = rd.unpack("<I", "header")
    if version != BUNDLE_VERSION:
        raise VersionMismatchError(f"unsupported bundle version {version} (expected {BUNDLE_VERSION})")
    base, rd.pos = decode_checkpoint(data, rd.pos)
    D = len(base)
    n_bytes = (D + 7) // 8
    (count,) = rd.unpack("<I", "task count")
    entries = {}
    for i in range(count):
        (name_len,) = rd.unpack("<H", f"task record {i}")
        try:
            name = bytes(rd.take(name_len, f"task record {i}")).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"task record {i}: name is not valid UTF-8") from exc
        if name in entries:
            raise ParseError(f"duplicate task name {name!r}")
        ratio, kept = rd.unpack("<dQ", f"task {name!r} header")
        bits = np.frombuffer(rd.take(n_bytes, f"task {name!r} mask"), dtype=np.uint8).copy()
        flags = np.unpackbits(bits, bitorder="little")
        if flags[D:].any():
            raise ParseError(f"task {name!r}: mask padding bits are set")
        mask = Mask.from_bool(flags[:D])
        if mask.kept != kept:
            raise ParseError(f"task {name!r}: header says {kept} kept values, mask has {mask.kept}")
        values = np.frombuffer(rd.take(4 * kept, f"task {name!r} values"), dtype="<f4")
        if not np.all(np.isfinite(values)):
            raise ParseError(f"task {name!r}: non-finite kept value")
        if not (0 < ratio <= 1):
            raise ParseError(f"task {name!r}: ratio {ratio} outside (0, 1]")
        idx = mask.indices()
        deltas = values.astype(np.float64) - base.values[idx].astype(np.float64)
        deltas.flags.writeable = False
        entries[name] = PrunedTaskVector(base.specs, mask, deltas, float(ratio))
    if rd.pos != len(rd.data):
        raise ParseError(f"{len(rd.data) - rd.pos} trailing bytes after bundle")
    return CompressedBundle(base, entries, version)


def save_bundle(bundle, path):
    data = encode_bundle(bundle)
    with open(os.fspath(path), "wb") as fh:
        fh.write(data)


def load_bundle(path):
    with open(os.fspath(path), "rb") as fh:
        return decode_bundle(fh.read())
