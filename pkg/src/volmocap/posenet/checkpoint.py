"""Versioned little-endian checkpoint files.

Layout::

    b"VMCK" | u32 version | 16 B architecture hash | u32 J, W, H, D
    | f32 anchor sigma | f32 loss weight | u32 n + n bytes architecture JSON
    | u32 n + n bytes estimator-params JSON | u32 tensor count
    | per tensor: u32 n + name, u32 ndim, u32 dims..., f32 data (LE)
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np
import torch

MAGIC = b"VMCK"
VERSION = 1


def _put_bytes(buf: list, b: bytes):
    buf.append(struct.pack("<I", len(b)))
    buf.append(b)


def dumps(state: dict, arch: dict, params: dict, anchor_sigma: float, loss_weight: float) -> bytes:
    buf = [MAGIC, struct.pack("<I", VERSION)]
    buf.append(hashlib.md5(json.dumps(arch, sort_keys=True).encode()).digest())
    r = int(arch["resolution"])
    buf.append(struct.pack("<4I", int(arch["n_joints"]), r, r, r))
    buf.append(struct.pack("<2f", float(anchor_sigma), float(loss_weight)))
    _put_bytes(buf, json.dumps(arch, sort_keys=True).encode())
    _put_bytes(buf, json.dumps(params, sort_keys=True).encode())
    buf.append(struct.pack("<I", len(state)))
    for name, tensor in state.items():
        arr = tensor.detach().cpu().numpy().astype("<f4")
        _put_bytes(buf, name.encode())
        buf.append(struct.pack("<I", arr.ndim))
        buf.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.append(arr.tobytes(order="C"))
    return b"".join(buf)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise ValueError("truncated checkpoint")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def blob(self):
        (n,) = self.unpack("<I")
        return self.take(n)


def loads(data: bytes):
    """Returns ``(header, arch, params, state_dict)``."""
    rd = _Reader(data)
    if rd.take(4) != MAGIC:
        raise ValueError("not a checkpoint file")
    (version,) = rd.unpack("<I")
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    arch_hash = rd.take(16)
    J, W, H, D = rd.unpack("<4I")
    sigma, lam = rd.unpack("<2f")
    arch = json.loads(rd.blob())
    if hashlib.md5(json.dumps(arch, sort_keys=True).encode()).digest() != arch_hash:
        raise ValueError("architecture hash mismatch")
    params = json.loads(rd.blob())
    (n,) = rd.unpack("<I")
    state = {}
    for _ in range(n):
        name = rd.blob().decode()
        (ndim,) = rd.unpack("<I")
        shape = rd.unpack(f"<{ndim}I") if ndim else ()
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(rd.take(4 * count), dtype="<f4").reshape(shape)
        state[name] = torch.from_numpy(arr.astype(np.float32))
    header = dict(version=version, arch_hash=arch_hash.hex(), n_joints=J, shape=(W, H, D),
                  anchor_sigma=sigma, loss_weight=lam)
    return header, arch, params, state
