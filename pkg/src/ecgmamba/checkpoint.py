"""Versioned binary checkpoints.

Layout (all integers little-endian)::

    8 bytes   magic b"ECGMCKPT"
    uint32    format version (1)
    uint32    length of the config text, then that many UTF-8 bytes:
              one "key=value" line per ModelConfig field
    uint32    number of tensors, then per tensor:
                uint16  name length, name bytes (UTF-8)
                uint8   ndim, then ndim x uint64 extents
                float64 values, C order
    32 bytes  SHA-256 of every preceding byte

Floats in the config text use ``repr`` so a load reproduces them exactly.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .model import Model, ModelConfig
from .tensor import Tensor

MAGIC = b"ECGMCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def config_to_text(cfg: ModelConfig) -> str:
    return "".join(f"{k}={v!r}\n" for k, v in cfg.to_dict().items())


def config_from_text(text: str) -> ModelConfig:
    items = {}
    for line in text.splitlines():
        if line.strip() and not line.startswith("#"):
            k, _, v = line.partition("=")
            items[k.strip()] = v.strip()
    return ModelConfig.from_dict(items)


def dumps(model: Model) -> bytes:
    cfg = config_to_text(model.config).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(cfg)), cfg]
    params = model.named_parameters()
    parts.append(struct.pack("<I", len(params)))
    for name, p in params.items():
        raw = name.encode()
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", p.ndim) + struct.pack(f"<{p.ndim}Q", *p.shape))
        parts.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def loads(blob: bytes) -> Model:
    if len(blob) < 52 or blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checkpoint checksum mismatch")
    version, n_cfg = struct.unpack_from("<II", body, 8)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 16
    cfg = config_from_text(body[pos : pos + n_cfg].decode())
    pos += n_cfg
    (n_tensors,) = struct.unpack_from("<I", body, pos)
    pos += 4
    params = {}
    for _ in range(n_tensors):
        (n_name,) = struct.unpack_from("<H", body, pos)
        pos += 2
        name = body[pos : pos + n_name].decode()
        pos += n_name
        (ndim,) = struct.unpack_from("<B", body, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}Q", body, pos)
        pos += 8 * ndim
        count = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(body, dtype="<f8", count=count, offset=pos).reshape(shape)
        pos += 8 * count
        params[name] = Tensor(data.astype(np.float64), requires_grad=True)
    if pos != len(body):
        raise CheckpointError("trailing bytes after the last tensor")
    return Model(cfg, params)


def save(model: Model, path) -> Path:
    path = Path(path)
    path.write_bytes(dumps(model))
    return path


def load(path) -> Model:
    return loads(Path(path).read_bytes())
