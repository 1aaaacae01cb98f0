"""Flat binary checkpoint format for Mlp parameters.

Layout (little-endian):
    magic   6 bytes  b"NKMLP1"
    act     uint32   0 = tanh, 1 = relu
    ndims   uint32   number of layer dims
    dims    uint32 * ndims
    payload float64  per layer: W row-major (d_in x d_out), then bias (d_out)
"""
import struct

import numpy as np

from ._backend import ACT_TANH
from .mlp import Mlp

MAGIC = b"NKMLP1"


def save_mlp(path, net):
    dims = net.layer_dims
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", net._act, len(dims)))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        for w, b in zip(net.weights, net.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_mlp(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (magic {magic!r})")
        act, ndims = struct.unpack("<II", fh.read(8))
        dims = struct.unpack(f"<{ndims}I", fh.read(4 * ndims))
        net = Mlp(dims, "tanh" if act == ACT_TANH else "relu", rng=0)
        for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
            # frombuffer views are read-only; the kernels need writable arrays
            w = np.frombuffer(fh.read(8 * d_in * d_out), dtype="<f8")
            b = np.frombuffer(fh.read(8 * d_out), dtype="<f8")
            net.weights[i] = w.reshape(d_in, d_out).copy()
            net.biases[i] = b.copy()
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after parameter payload")
    for p in net.param_list():
        if not np.all(np.isfinite(p)):
            raise ValueError(f"{path}: non-finite parameters")
    return net
