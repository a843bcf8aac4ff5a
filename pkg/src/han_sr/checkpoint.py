"""Binary checkpoint with bit-exact round-tripping.

Layout, little-endian throughout:

    magic   8 bytes  b"HANCKPT1"
    version u32      currently 1
    conflen u32      followed by that many bytes of UTF-8 run-config text
    count   u32      number of parameter entries, then per entry:
        namelen u16, name bytes, dtype u8 (0=float32, 1=float64),
        rank u8, rank x u32 extents, raw little-endian values
    crc32   u32      over every preceding byte; validated on load
"""

from __future__ import annotations

import io
import os
import struct
import zlib

import numpy as np

MAGIC = b"HANCKPT1"
VERSION = 1

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


class CheckpointError(ValueError):
    """Unreadable, corrupt, or wrong-format checkpoint."""


def serialize(named_arrays, config_text: str) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    conf = config_text.encode("utf-8")
    buf.write(struct.pack("<I", len(conf)))
    buf.write(conf)
    entries = list(named_arrays)
    buf.write(struct.pack("<I", len(entries)))
    for name, arr in entries:
        arr = np.asarray(arr)
        if arr.dtype not in _CODES:
            raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype=_DTYPES[_CODES[arr.dtype]]).tobytes())
    payload = buf.getvalue()
    return payload + struct.pack("<I", zlib.crc32(payload))


def deserialize(blob: bytes) -> tuple[str, dict[str, np.ndarray]]:
    if len(blob) < len(MAGIC) + 12:
        raise CheckpointError("checkpoint truncated")
    payload, (stored,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(payload) != stored:
        raise CheckpointError("checksum mismatch: checkpoint is corrupt")
    view = io.BytesIO(payload)

    def read(n: int) -> bytes:
        chunk = view.read(n)
        if len(chunk) != n:
            raise CheckpointError("checkpoint truncated")
        return chunk

    if read(len(MAGIC)) != MAGIC:
        raise CheckpointError("bad magic: not a checkpoint file")
    (version,) = struct.unpack("<I", read(4))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (conf_len,) = struct.unpack("<I", read(4))
    config_text = read(conf_len).decode("utf-8")
    (count,) = struct.unpack("<I", read(4))
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", read(2))
        name = read(name_len).decode("utf-8")
        code, rank = struct.unpack("<BB", read(2))
        if code not in _DTYPES or not 1 <= rank <= 5:
            raise CheckpointError(f"{name}: bad dtype/rank ({code}, {rank})")
        shape = struct.unpack(f"<{rank}I", read(4 * rank))
        n_values = int(np.prod(shape))
        arr = np.frombuffer(read(n_values * _DTYPES[code].itemsize),
                            dtype=_DTYPES[code]).reshape(shape)
        arrays[name] = arr.copy()
    if view.read(1):
        raise CheckpointError("trailing bytes after the last entry")
    return config_text, arrays


def save_checkpoint(path, named_arrays, config_text: str) -> None:
    """Atomic write: serialize to a sibling temp file, then rename over."""
    blob = serialize(named_arrays, config_text)
    path = os.fspath(path)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[str, dict[str, np.ndarray]]:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return deserialize(blob)
