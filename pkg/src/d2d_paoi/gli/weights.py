"""Binary weights file.

Layout (all little-endian):

    b"GLINET"                      magic
    u32   format version (1)
    u32   number of integer fields, then that many i64:
          resolution, c1, c2, c3, h1, h2, feedback_rounds, input_feature_count, seed
    u32   number of float fields, then that many f64:
          distance_scale, p_floor
    u32   number of tensors; for each: u32 ndim, ndim x u32 shape, f64 data (row-major)

Tensor order: conv kernels 1-3, conv biases (3,), W1, b1, W2, b2, W3, b3.
"""

from __future__ import annotations

import io
import struct
from dataclasses import replace
from pathlib import Path

import numpy as np

from .net import NetConfig, NetParams

MAGIC = b"GLINET"
VERSION = 1


class WeightsFormatError(ValueError):
    pass


def _int_fields(cfg: NetConfig) -> list[int]:
    return [cfg.resolution, *cfg.conv_filter_sizes, *cfg.hidden_sizes, cfg.feedback_rounds,
            cfg.input_feature_count, cfg.seed]


def save_params(params: NetParams, cfg: NetConfig, path) -> None:
    params.check(cfg)
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    ints = _int_fields(cfg)
    buf.write(struct.pack(f"<I{len(ints)}q", len(ints), *ints))
    floats = [cfg.distance_scale, cfg.p_floor]
    buf.write(struct.pack(f"<I{len(floats)}d", len(floats), *floats))
    tensors = params.tensors()
    buf.write(struct.pack("<I", len(tensors)))
    for t in tensors:
        buf.write(struct.pack(f"<I{t.ndim}I", t.ndim, *t.shape))
        buf.write(np.ascontiguousarray(t, dtype="<f8").tobytes())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(buf.getvalue())


def load_params(path, base: NetConfig | None = None) -> tuple[NetParams, NetConfig]:
    """Read a weights file; training hyperparameters are taken from ``base``."""
    data = Path(path).read_bytes()
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise WeightsFormatError(f"{path}: truncated weights file")
        out = view[pos:pos + n]
        pos += n
        return out

    if bytes(take(len(MAGIC))) != MAGIC:
        raise WeightsFormatError(f"{path}: bad magic")
    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise WeightsFormatError(f"{path}: unsupported format version {version}")
    (n_int,) = struct.unpack("<I", take(4))
    ints = struct.unpack(f"<{n_int}q", take(8 * n_int))
    (n_float,) = struct.unpack("<I", take(4))
    floats = struct.unpack(f"<{n_float}d", take(8 * n_float))
    if n_int != 9 or n_float != 2:
        raise WeightsFormatError(f"{path}: unexpected config record ({n_int} ints, {n_float} floats)")
    R, c1, c2, c3, h1, h2, f, nfeat, seed = ints
    cfg = replace(
        base or NetConfig(), resolution=R, conv_filter_sizes=(c1, c2, c3), hidden_sizes=(h1, h2),
        feedback_rounds=f, input_feature_count=nfeat, seed=seed,
        distance_scale=floats[0], p_floor=floats[1],
    )
    (n_t,) = struct.unpack("<I", take(4))
    tensors = []
    for _ in range(n_t):
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        tensors.append(np.frombuffer(take(8 * count), dtype="<f8").reshape(shape).astype(np.float64))
    if pos != len(data):
        raise WeightsFormatError(f"{path}: trailing bytes after tensors")
    try:
        params = NetParams.from_tensors(tensors)
        params.check(cfg)
    except (IndexError, ValueError) as exc:
        raise WeightsFormatError(f"{path}: {exc}") from exc
    return params, cfg
