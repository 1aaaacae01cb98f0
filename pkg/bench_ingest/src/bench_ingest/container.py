"""Portable benchmark container: magic, JSON header, dense float32 payload.

Layout: 8-byte magic, little-endian uint32 header length, compact JSON header
with sorted keys, then the raw payload bytes. The header carries a sha256 of
the payload so readers detect truncation and bit flips without a sidecar.
The engine reads this format directly; writes here must stay byte-compatible.
"""

import hashlib
import json
import struct

import numpy as np

MAGIC = b"PTBENCH1"
VERSION = 1


def write(path, datasets, op_names, payload, source=""):
    """Write a container; payload is (n_datasets, arch_count, epochs + 2) in percent."""
    payload = np.ascontiguousarray(payload, dtype="<f4")
    if payload.ndim != 3 or payload.shape[0] != len(datasets):
        raise ValueError(f"payload shape {payload.shape} does not match datasets")
    raw = payload.tobytes()
    header = {
        "version": VERSION,
        "datasets": list(datasets),
        "op_names": list(op_names),
        "arch_count": int(payload.shape[1]),
        "epoch_count": int(payload.shape[2]) - 2,
        "payload_shape": list(payload.shape),
        "dtype": "<f4",
        "sha256": hashlib.sha256(raw).hexdigest(),
        "source": source,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(raw)
    return header


def read(path):
    """Read and validate a container; returns (header, payload float32)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        raw = fh.read()
    if header.get("version") != VERSION:
        raise ValueError(f"{path}: unsupported version {header.get('version')}")
    if hashlib.sha256(raw).hexdigest() != header["sha256"]:
        raise ValueError(f"{path}: payload checksum mismatch")
    shape = tuple(header["payload_shape"])
    payload = np.frombuffer(raw, dtype="<f4")
    if payload.size != int(np.prod(shape)):
        raise ValueError(f"{path}: payload size does not match shape {shape}")
    return header, payload.reshape(shape)
