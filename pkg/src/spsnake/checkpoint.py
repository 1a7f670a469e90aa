"""Binary checkpoints for the mini U-Net.

Layout (little-endian): magic ``SPSCKPT\\0``, u32 format version, u32 length + config
JSON, 32-byte SHA-256 of that JSON, u32 schedule T, f64 beta_start, f64 beta_end,
u32 parameter count, then per parameter in name order: u32 name length, UTF-8 name,
u32 ndim, u32 dims, float64 values.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct

import numpy as np
import torch

from .diffusion import NoiseSchedule, build_schedule
from .errors import LoadError
from .net import DenoiserConfig, MiniUNet

MAGIC = b"SPSCKPT\x00"
FORMAT_VERSION = 1


def _schedule_ends(schedule: NoiseSchedule) -> tuple[float, float]:
    return float(schedule.beta[1]), float(schedule.beta[-1])


def encode_checkpoint(model: MiniUNet, schedule: NoiseSchedule) -> bytes:
    cfg_json = model.config.to_json().encode()
    b0, b1 = _schedule_ends(schedule)
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", FORMAT_VERSION, len(cfg_json)))
    buf.write(cfg_json)
    buf.write(hashlib.sha256(cfg_json).digest())
    buf.write(struct.pack("<Idd", schedule.T, b0, b1))
    state = model.state_dict()
    buf.write(struct.pack("<I", len(state)))
    for name in sorted(state):
        arr = state[name].detach().cpu().numpy().astype("<f8")
        raw = name.encode()
        buf.write(struct.pack("<I", len(raw)) + raw)
        buf.write(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise LoadError(f"truncated checkpoint while reading {what}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(data: bytes, expect_config: DenoiserConfig | None = None,
                      dtype=torch.float32):
    """Rebuild (model, schedule) from checkpoint bytes."""
    r = _Reader(data)
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise LoadError("bad checkpoint magic")
    version, cfg_len = r.unpack("<II", "header")
    if version != FORMAT_VERSION:
        raise LoadError(f"unsupported checkpoint version {version}")
    cfg_json = r.take(cfg_len, "config")
    digest = r.take(32, "config hash")
    if hashlib.sha256(cfg_json).digest() != digest:
        raise LoadError("config hash mismatch (corrupted header)")
    config = DenoiserConfig.from_dict(json.loads(cfg_json))
    if expect_config is not None and expect_config.digest() != digest:
        raise LoadError("checkpoint config does not match the expected config")
    T, b0, b1 = r.unpack("<Idd", "schedule")
    (count,) = r.unpack("<I", "parameter count")
    model = MiniUNet(config)
    expected = model.state_dict()
    state = {}
    for i in range(count):
        (nlen,) = r.unpack("<I", f"parameter {i} name")
        name = r.take(nlen, f"parameter {i} name").decode()
        (ndim,) = r.unpack("<I", f"{name} ndim")
        dims = r.unpack(f"<{ndim}I", f"{name} dims")
        n = int(np.prod(dims)) if dims else 1
        values = np.frombuffer(r.take(8 * n, f"{name} values"), dtype="<f8").reshape(dims)
        if name not in expected or tuple(expected[name].shape) != tuple(dims):
            raise LoadError(f"unexpected parameter {name} {dims}")
        state[name] = torch.from_numpy(values.copy())
    if set(state) != set(expected):
        raise LoadError(f"missing parameters: {sorted(set(expected) - set(state))}")
    if r.pos != len(data):
        raise LoadError("trailing bytes after parameters")
    model.load_state_dict(state)
    return model.to(dtype), build_schedule(T, b0, b1)


def save_checkpoint(model: MiniUNet, schedule: NoiseSchedule, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_checkpoint(model, schedule))


def load_checkpoint(path, expect_config: DenoiserConfig | None = None, dtype=torch.float32):
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read(), expect_config, dtype)
