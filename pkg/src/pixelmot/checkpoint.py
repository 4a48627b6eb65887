"""Binary checkpoint container.

Layout (all integers little-endian):

    magic           8 bytes  b"PXMTCKPT"
    version         u32      currently 1
    config length   u32      followed by that many UTF-8 bytes (config echo)
    step            u64
    rng key         16 bytes (128-bit little-endian)
    rng counter     u64
    parameter count u32      then per array:
        name length u16, name UTF-8 bytes,
        dtype tag   u8       0 = float64, 1 = int64
        ndim        u8, dims u32 each,
        payload     little-endian array bytes (C order)
    ema count       u32      same per-array encoding
    crc32           u32      of every preceding byte

Loading verifies magic, version, and CRC and fails with a reason; a
round-tripped checkpoint reproduces forward outputs bit-for-bit.
"""

from __future__ import annotations

import io
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Checkpoint", "save_checkpoint", "load_checkpoint", "MAGIC", "VERSION"]

MAGIC = b"PXMTCKPT"
VERSION = 1

_DTYPE_TAGS = {0: np.dtype("<f8"), 1: np.dtype("<i8")}
_TAG_FOR_KIND = {"f": 0, "i": 1}


@dataclass
class Checkpoint:
    config_text: str
    step: int
    rng_key: int
    rng_counter: int
    arrays: dict = field(default_factory=dict)
    ema: dict = field(default_factory=dict)


def _write_array_section(buf: io.BytesIO, arrays: dict) -> None:
    buf.write(struct.pack("<I", len(arrays)))
    for name in sorted(arrays):
        arr = np.asarray(arrays[name])
        if arr.dtype.kind not in _TAG_FOR_KIND:
            raise ValueError(f"array {name!r} has unsupported dtype {arr.dtype}")
        tag = _TAG_FOR_KIND[arr.dtype.kind]
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<BB", tag, arr.ndim))
        for dim in arr.shape:
            buf.write(struct.pack("<I", dim))
        buf.write(np.ascontiguousarray(arr, dtype=_DTYPE_TAGS[tag]).tobytes())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ValueError(
                f"truncated checkpoint: wanted {n} bytes at offset {self.pos}, "
                f"file has {len(self.data)}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _read_array_section(r: _Reader) -> dict:
    (count,) = r.unpack("<I")
    arrays = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        tag, ndim = r.unpack("<BB")
        if tag not in _DTYPE_TAGS:
            raise ValueError(f"array {name!r} has unknown dtype tag {tag}")
        shape = tuple(r.unpack("<I")[0] for _ in range(ndim))
        n_items = int(np.prod(shape)) if shape else 1
        payload = r.take(n_items * 8)
        arrays[name] = np.frombuffer(payload, dtype=_DTYPE_TAGS[tag]).reshape(shape).copy()
    return arrays


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    config = ckpt.config_text.encode("utf-8")
    buf.write(struct.pack("<I", len(config)))
    buf.write(config)
    buf.write(struct.pack("<Q", ckpt.step))
    buf.write(ckpt.rng_key.to_bytes(16, "little"))
    buf.write(struct.pack("<Q", ckpt.rng_counter))
    _write_array_section(buf, ckpt.arrays)
    _write_array_section(buf, ckpt.ema)
    body = buf.getvalue()
    with open(path, "wb") as f:
        f.write(body)
        f.write(struct.pack("<I", zlib.crc32(body)))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < len(MAGIC) + 8:
        raise ValueError(f"truncated checkpoint: only {len(raw)} bytes")
    body, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) != crc:
        raise ValueError("checkpoint checksum failure: file is corrupt")
    r = _Reader(body)
    if r.take(len(MAGIC)) != MAGIC:
        raise ValueError("not a checkpoint file (bad magic bytes)")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise ValueError(f"checkpoint version mismatch: file {version}, supported {VERSION}")
    (config_len,) = r.unpack("<I")
    config_text = r.take(config_len).decode("utf-8")
    (step,) = r.unpack("<Q")
    rng_key = int.from_bytes(r.take(16), "little")
    (rng_counter,) = r.unpack("<Q")
    arrays = _read_array_section(r)
    ema = _read_array_section(r)
    if r.pos != len(body):
        raise ValueError(f"checkpoint has {len(body) - r.pos} unexpected trailing bytes")
    return Checkpoint(config_text=config_text, step=step, rng_key=rng_key,
                      rng_counter=rng_counter, arrays=arrays, ema=ema)
