"""Versioned binary checkpoint format.

Layout (little-endian throughout):

    magic "FFCK" | u32 version | str kind | str linked_hash | u32 n_params
    per param: str name | u8 ndim | u32 dims... | float32 raw data
    sha256 digest (32 bytes) over everything after the magic

where ``str`` is u16 length + utf8 bytes. ``linked_hash`` ties a checkpoint to
the one it was trained against (e.g. a denoiser to its frozen encoder); empty
when standalone. A checkpoint's own hash is the trailing digest, hex-encoded.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .errors import IoError, SchemaError

MAGIC = b"FFCK"
VERSION = 1


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<H", len(b)) + b


def _read_str(buf: bytes, off: int):
    (n,) = struct.unpack_from("<H", buf, off)
    off += 2
    return buf[off : off + n].decode("utf-8"), off + n


def save_checkpoint(path, params: dict, kind: str, linked_hash: str = "") -> str:
    """Write named float32 arrays; returns the checkpoint's content hash (hex)."""
    body = bytearray()
    body += struct.pack("<I", VERSION)
    body += _pack_str(kind)
    body += _pack_str(linked_hash)
    body += struct.pack("<I", len(params))
    for name in sorted(params):
        arr = params[name]
        if not isinstance(arr, np.ndarray):  # autodiff Tensor or similar wrapper
            arr = arr.data
        data = np.ascontiguousarray(arr, dtype="<f4")
        body += _pack_str(name)
        body += struct.pack("<B", data.ndim)
        for d in data.shape:
            body += struct.pack("<I", d)
        body += data.tobytes()
    digest = hashlib.sha256(bytes(body)).digest()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(MAGIC + bytes(body) + digest)
    return digest.hex()


def load_checkpoint(path):
    """Returns (params: dict[str, float32 ndarray], kind, linked_hash, own_hash)."""
    path = Path(path)
    if not path.exists():
        raise IoError(f"checkpoint not found: {path}", path=path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise SchemaError(f"bad checkpoint magic in {path}", path=path)
    body, digest = raw[4:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise SchemaError(f"checkpoint corrupted (hash mismatch): {path}", path=path)
    off = 0
    (version,) = struct.unpack_from("<I", body, off)
    off += 4
    if version != VERSION:
        raise SchemaError(f"unsupported checkpoint version {version} in {path}", path=path)
    kind, off = _read_str(body, off)
    linked, off = _read_str(body, off)
    (n_params,) = struct.unpack_from("<I", body, off)
    off += 4
    params = {}
    for _ in range(n_params):
        name, off = _read_str(body, off)
        (ndim,) = struct.unpack_from("<B", body, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", body, off)
        off += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(body, dtype="<f4", count=count, offset=off).reshape(shape)
        off += 4 * count
        params[name] = arr.copy()
    return params, kind, linked, digest.hex()


def checkpoint_hash(path) -> str:
    return load_checkpoint(path)[3]
