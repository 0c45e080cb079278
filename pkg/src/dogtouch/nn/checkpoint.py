"""Parameter checkpoint files.

Layout (little-endian): magic "DTCK", version u8, entry count u32, then
per entry: name length u16 + UTF-8 name, dtype code u8 (0 = f32, 1 = f64),
ndim u8, dims u32 each, raw values; finally CRC32 over everything after
the magic. Loading validates names and shapes against the target model.
"""
from __future__ import annotations

import struct
import zlib

import numpy as np

CHECKPOINT_MAGIC = b"DTCK"
CHECKPOINT_VERSION = 1
_DTYPES = {0: np.float32, 1: np.float64}
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, state: dict, meta: dict | None = None):
    """Write named arrays (and an optional small JSON-able meta dict)."""
    import json

    entries = dict(state)
    if meta is not None:
        entries = {"__meta__": np.frombuffer(
            json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
        ).astype(np.float64), **entries}
    body = bytearray()
    body += struct.pack("<BI", CHECKPOINT_VERSION, len(entries))
    for name, value in entries.items():
        value = np.asarray(value)
        if value.dtype not in _DTYPE_CODES:
            raise CheckpointError(f"unsupported dtype {value.dtype} for {name!r}")
        encoded = name.encode("utf-8")
        body += struct.pack("<H", len(encoded)) + encoded
        body += struct.pack("<BB", _DTYPE_CODES[value.dtype], value.ndim)
        body += struct.pack(f"<{value.ndim}I", *value.shape)
        body += value.tobytes()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(bytes(body))))


def load_checkpoint(path) -> tuple[dict, dict | None]:
    """Read back (state, meta)."""
    import json

    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError("not a checkpoint file")
    body, tail = blob[4:-4], blob[-4:]
    if struct.unpack("<I", tail)[0] != zlib.crc32(body):
        raise CheckpointError("checkpoint checksum mismatch")
    version, count = struct.unpack_from("<BI", body)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    offset = 5
    state: dict = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", body, offset)
        offset += 2
        name = body[offset : offset + name_len].decode("utf-8")
        offset += name_len
        dtype_code, ndim = struct.unpack_from("<BB", body, offset)
        offset += 2
        shape = struct.unpack_from(f"<{ndim}I", body, offset)
        offset += 4 * ndim
        dtype = np.dtype(_DTYPES[dtype_code])
        n_bytes = int(np.prod(shape)) * dtype.itemsize if ndim else dtype.itemsize
        value = np.frombuffer(body, dtype=dtype, count=max(int(np.prod(shape)), 1),
                              offset=offset).reshape(shape)
        offset += n_bytes
        state[name] = value.copy()
    meta = None
    if "__meta__" in state:
        raw = state.pop("__meta__").astype(np.uint8).tobytes()
        meta = json.loads(raw.decode("utf-8"))
    return state, meta


def save_model(path, model, meta: dict | None = None):
    save_checkpoint(path, model.state_dict(), meta)


def load_model(path, model) -> dict | None:
    """Load parameters into `model`, validating names and shapes."""
    state, meta = load_checkpoint(path)
    model.load_state_dict(state)
    return meta
