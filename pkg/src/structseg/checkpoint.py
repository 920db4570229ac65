"""Checkpoint serialization.

Binary layout (little-endian): magic `STKN`, version u32, tensor count
u32, then per tensor sorted by name: name length u32, UTF-8 name, rank
u32, dims u32 each, float32 data. The run configuration that produced
the parameters is written next to the binary as `<path>.cfg` in the
`key = value` text format, so a checkpoint is self-describing.
"""

from __future__ import annotations

import struct
from dataclasses import fields
from pathlib import Path

import numpy as np

from .config import RunConfig, parse_config
from .errors import (BadMagicError, BadVersionError, CheckpointMismatchError,
                     TruncatedFileError)
from .tensor import Tensor

MAGIC = b"STKN"
VERSION = 1


def config_text(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, list):
            value = ",".join(repr(v) for v in value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def save_checkpoint(path: str | Path, named_params: dict[str, Tensor],
                    cfg: RunConfig | None = None) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<2I", VERSION, len(named_params)))
        for name in sorted(named_params):
            data = named_params[name].data.astype("<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())
    if cfg is not None:
        path.with_suffix(path.suffix + ".cfg").write_text(config_text(cfg), encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], RunConfig | None]:
    """Read tensors (and the sidecar config if present)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: expected magic {MAGIC!r}")
    if len(raw) < 12:
        raise TruncatedFileError(f"{path}: header truncated")
    version, count = struct.unpack_from("<2I", raw, 4)
    if version != VERSION:
        raise BadVersionError(f"{path}: version {version}, expected {VERSION}")

    tensors: dict[str, np.ndarray] = {}
    off = 12
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<I", raw, off)
            off += 4
            if len(raw) < off + name_len:
                raise struct.error
            name = raw[off:off + name_len].decode("utf-8")
            off += name_len
            (rank,) = struct.unpack_from("<I", raw, off)
            off += 4
            dims = struct.unpack_from(f"<{rank}I", raw, off)
            off += 4 * rank
            n_bytes = 4 * int(np.prod(dims, dtype=np.int64)) if rank else 4
            if len(raw) < off + n_bytes:
                raise struct.error
            tensors[name] = np.frombuffer(raw, "<f4", n_bytes // 4, off).reshape(dims).copy()
            off += n_bytes
        except struct.error:
            raise TruncatedFileError(f"{path}: tensor table truncated") from None

    sidecar = path.with_suffix(path.suffix + ".cfg")
    cfg = parse_config(sidecar.read_text(encoding="utf-8")) if sidecar.exists() else None
    return tensors, cfg


def restore_model(model, tensors: dict[str, np.ndarray]) -> None:
    """Copy checkpoint tensors into a model, validating names and shapes."""
    model_params = dict(model.named_parameters())
    missing = sorted(set(model_params) - set(tensors))
    if missing:
        raise CheckpointMismatchError(f"checkpoint missing parameter(s): {missing}")
    unexpected = sorted(set(tensors) - set(model_params))
    if unexpected:
        raise CheckpointMismatchError(f"checkpoint has unexpected parameter(s): {unexpected}")
    for name, p in model_params.items():
        if tensors[name].shape != p.data.shape:
            raise CheckpointMismatchError(
                f"shape mismatch for {name}: checkpoint {tensors[name].shape}, "
                f"model {p.data.shape}")
        p.data[...] = tensors[name].astype(p.data.dtype)
