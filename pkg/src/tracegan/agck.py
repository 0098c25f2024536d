"""The AGCK binary tensor container used for model checkpoints.

Layout (all integers little-endian):
    magic            4 bytes, b"AGCK"
    format version   u32
    config block     u32 byte length, then that many bytes of UTF-8 text
                     holding one "key=value" pair per line, keys sorted
    tensor table     u32 tensor count, then per tensor:
                         name    u16 length + UTF-8 bytes
                         dtype   u8 tag (0 = float32; nothing else defined)
                         rank    u8
                         dims    rank * u32
                         payload little-endian float32 values, row-major

Readers fail with CheckpointError (never crash) on truncation, bad magic,
unknown version or dtype tag, or trailing bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"AGCK"
FORMAT_VERSION = 1
_MAX_RANK = 8


def write_container(path: str | Path, config: dict[str, str],
                    tensors: dict[str, np.ndarray]) -> None:
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<I", FORMAT_VERSION)
    text = "\n".join(f"{k}={config[k]}" for k in sorted(config)).encode("utf-8")
    buf += struct.pack("<I", len(text))
    buf += text
    buf += struct.pack("<I", len(tensors))
    for name, arr in tensors.items():
        if arr.dtype != np.float32:
            raise CheckpointError(f"tensor {name}: only float32 is serializable, got {arr.dtype}")
        encoded = name.encode("utf-8")
        buf += struct.pack("<H", len(encoded))
        buf += encoded
        buf += struct.pack("<BB", 0, arr.ndim)
        buf += struct.pack(f"<{arr.ndim}I", *arr.shape)
        buf += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(buf))


class _Reader:
    def __init__(self, data: bytes, origin: str):
        self.data = data
        self.pos = 0
        self.origin = origin

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.origin}: truncated file while reading {what}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u8(self, what):
        return self.take(1, what)[0]

    def u16(self, what):
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def read_container(path: str | Path) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot read ({exc})") from exc
    rd = _Reader(data, str(path))
    if rd.take(4, "magic") != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not an AGCK container")
    version = rd.u32("format version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    config_len = rd.u32("config length")
    try:
        config_text = rd.take(config_len, "config block").decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CheckpointError(f"{path}: config block is not valid UTF-8") from exc
    config: dict[str, str] = {}
    for line in config_text.splitlines():
        if not line:
            continue
        if "=" not in line:
            raise CheckpointError(f"{path}: malformed config line {line!r}")
        key, value = line.split("=", 1)
        config[key] = value

    tensors: dict[str, np.ndarray] = {}
    count = rd.u32("tensor count")
    for _ in range(count):
        name_len = rd.u16("tensor name length")
        name = rd.take(name_len, "tensor name").decode("utf-8")
        tag = rd.u8(f"dtype tag of {name}")
        if tag != 0:
            raise CheckpointError(f"{path}: tensor {name} has unknown dtype tag {tag}")
        rank = rd.u8(f"rank of {name}")
        if rank > _MAX_RANK:
            raise CheckpointError(f"{path}: tensor {name} has implausible rank {rank}")
        dims = struct.unpack(f"<{rank}I", rd.take(4 * rank, f"dims of {name}"))
        numel = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = rd.take(4 * numel, f"payload of {name}")
        arr = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(dims)
        tensors[name] = arr
    if rd.pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - rd.pos} trailing bytes after tensor table")
    return config, tensors
