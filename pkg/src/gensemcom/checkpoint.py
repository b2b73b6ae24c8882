"""Self-describing checkpoint container.

Layout (all integers little-endian)::

    magic    8 bytes   b"GSCKPT\\x00\\x01"
    version  uint32
    hlen     uint64    length of the JSON header
    header   hlen      UTF-8 JSON: config, config_hash, meta, blocks[name, dtype, shape, offset, nbytes]
    payload            raw tensor bytes, concatenated in header order
    digest   32 bytes  SHA-256 of everything above

The writer is deterministic, so save -> load -> save reproduces the same bytes.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import torch

MAGIC = b"GSCKPT\x00\x01"
FORMAT_VERSION = 1
_DTYPES = {"float32": torch.float32, "float64": torch.float64, "int64": torch.int64}


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, state: dict, config: dict, config_hash: str, meta: dict | None = None) -> Path:
    blocks, chunks, offset = [], [], 0
    for name in sorted(state):
        t = state[name].detach().cpu().contiguous()
        dtype = str(t.dtype).replace("torch.", "")
        if dtype not in _DTYPES:
            raise CheckpointError(f"unsupported dtype {dtype} for {name}")
        raw = t.numpy().astype(t.numpy().dtype.newbyteorder("<"), copy=False).tobytes()
        blocks.append({"name": name, "dtype": dtype, "shape": list(t.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"format_version": FORMAT_VERSION, "config_hash": config_hash, "config": config,
         "meta": meta or {}, "blocks": blocks},
        sort_keys=True, separators=(",", ":"), default=list,
    ).encode("utf-8")
    body = MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(header)) + header + b"".join(chunks)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(body + hashlib.sha256(body).digest())
    return path


def read_checkpoint(path):
    """Return ``(state, header)`` after verifying structure and digest."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    fixed = len(MAGIC) + 12
    if len(data) < fixed + 32 or data[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"corrupt checkpoint {path}: bad magic or truncated header")
    body, digest = data[:-32], data[-32:]
    version, hlen = struct.unpack("<IQ", data[len(MAGIC):fixed])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint {path} has format version {version}, expected {FORMAT_VERSION}")
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"corrupt checkpoint {path}: digest mismatch (truncated or modified)")
    try:
        header = json.loads(body[fixed:fixed + hlen].decode("utf-8"))
    except ValueError as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: unreadable header") from exc
    payload = body[fixed + hlen:]
    state = {}
    for b in header["blocks"]:
        raw = payload[b["offset"]:b["offset"] + b["nbytes"]]
        if len(raw) != b["nbytes"]:
            raise CheckpointError(f"corrupt checkpoint {path}: block {b['name']} truncated")
        np_dtype = np.dtype(b["dtype"]).newbyteorder("<")
        arr = np.frombuffer(raw, dtype=np_dtype).reshape(b["shape"]).astype(np.dtype(b["dtype"]))
        state[b["name"]] = torch.from_numpy(arr.copy())
    return state, header


def load_checkpoint(path, expected_hash: str | None = None, force: bool = False):
    """Load parameters; refuse a config-hash mismatch unless ``force``."""
    state, header = read_checkpoint(path)
    if expected_hash is not None and header["config_hash"] != expected_hash and not force:
        raise CheckpointError(
            f"checkpoint config hash {header['config_hash']} does not match current config hash {expected_hash}"
        )
    return state, header
