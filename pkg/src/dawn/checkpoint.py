"""Binary checkpoint files.

Layout (all integers little-endian)::

    magic        8 bytes   b"DAWNCKPT"
    version      uint32    currently 1
    meta_len     uint32
    meta         meta_len bytes of UTF-8 JSON (model config, free-form extras)
    count        uint32    number of entries
    entry * count:
        name_len uint16
        name     name_len bytes UTF-8
        ndim     uint8
        dims     uint32 * ndim
        values   float32 * prod(dims), row-major

Entries hold every parameter followed by every buffer (batch-norm running
statistics), in the model's naming order.
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Optional

import numpy as np

MAGIC = b"DAWNCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_state(path, state, meta: Optional[dict] = None) -> None:
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(meta_bytes)), meta_bytes, struct.pack("<I", len(state))]
    for name, value in state.items():
        arr = np.ascontiguousarray(value, dtype="<f4")
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_state(path) -> tuple["OrderedDict[str, np.ndarray]", dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    buf = path.read_bytes()
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"{path}: truncated while reading {what} at byte {pos}")
        chunk = buf[pos : pos + n]
        pos += n
        return chunk

    if take(8, "magic") != MAGIC:
        raise CheckpointError(f"{path}: not a DAWN checkpoint (bad magic)")
    version, meta_len = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version} (this build reads version {VERSION})")
    try:
        meta = json.loads(take(meta_len, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupted metadata in version {version} header: {exc}") from None
    (count,) = struct.unpack("<I", take(4, "entry count"))
    state: OrderedDict[str, np.ndarray] = OrderedDict()
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        name = take(name_len, "name").decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1, f"rank of {name}"))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim, f"shape of {name}"))
        n = int(np.prod(dims, dtype=np.int64))
        state[name] = np.frombuffer(take(4 * n, f"values of {name}"), dtype="<f4").reshape(dims).astype(np.float32)
    if pos != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - pos} trailing bytes after last entry")
    return state, meta


def export_checkpoint(model, path, extra: Optional[dict] = None) -> None:
    meta = {"config": model.config.to_dict()}
    if extra:
        meta.update(extra)
    save_state(path, model.state_dict(), meta)


def import_checkpoint(path, config=None):
    """Rebuild a model from ``path``.

    ``config`` defaults to the one recorded in the file. Shape disagreements
    raise :class:`CheckpointError` naming the offending parameter.
    """
    from .model import DawnConfig, DawnModel

    state, meta = load_state(path)
    if config is None:
        if "config" not in meta:
            raise CheckpointError(f"{path}: no model config recorded; pass one explicitly")
        config = DawnConfig.from_dict(meta["config"])
    model = DawnModel(config)
    own = model.state_dict()
    for name, value in own.items():
        if name not in state:
            raise CheckpointError(f"{path}: missing entry {name}")
        if state[name].shape != value.shape:
            raise CheckpointError(
                f"{path}: shape mismatch for {name}: file has {state[name].shape}, model expects {value.shape}"
            )
    extra = [n for n in state if n not in own]
    if extra:
        raise CheckpointError(f"{path}: unexpected entries {extra[:5]}")
    model.load_state_dict(state)
    return model


