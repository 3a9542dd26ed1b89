"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"ACGN"  u32 version
    u32 config_len, config_len bytes of UTF-8 JSON
    u32 n_tensors, then per tensor:
        u32 name_len, name (UTF-8), u8 dtype code, u32 rank, rank x u32 dims, data

dtype code 0 is float32, 1 is int64 (Adam step counters).
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from . import features
from .acgan import ACGAN, TrainConfig, config_dict
from .errors import FormatError

MAGIC = b"ACGN"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<i8")}


def _dtype_code(arr):
    if arr.dtype.kind == "f":
        return 0, arr.astype("<f4")
    if arr.dtype.kind in "iu":
        return 1, arr.astype("<i8")
    raise FormatError(f"cannot store dtype {arr.dtype}")


def encode(config: dict, tensors: dict[str, np.ndarray]) -> bytes:
    cfg = json.dumps(config, sort_keys=True).encode("utf-8")
    out = [MAGIC, struct.pack("<II", VERSION, len(cfg)), cfg, struct.pack("<I", len(tensors))]
    for name in sorted(tensors):
        code, arr = _dtype_code(np.asarray(tensors[name]))
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)) + raw)
        out.append(struct.pack("<BI", code, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(out)


def decode(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if data[:4] != MAGIC:
        raise FormatError("not an ACGN checkpoint")
    try:
        version, clen = struct.unpack_from("<II", data, 4)
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        pos = 12
        config = json.loads(data[pos : pos + clen].decode("utf-8"))
        pos += clen
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", data, pos)
            pos += 4
            name = data[pos : pos + nlen].decode("utf-8")
            pos += nlen
            code, rank = struct.unpack_from("<BI", data, pos)
            pos += 5
            dims = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
            dtype = _DTYPES.get(code)
            if dtype is None:
                raise FormatError(f"tensor {name}: unknown dtype code {code}")
            nbytes = dtype.itemsize * int(np.prod(dims, dtype=np.int64))
            if pos + nbytes > len(data):
                raise FormatError(f"tensor {name}: data truncated")
            tensors[name] = np.frombuffer(data, dtype=dtype, count=nbytes // dtype.itemsize,
                                          offset=pos).reshape(dims).copy()
            pos += nbytes
    except struct.error as exc:
        raise FormatError(f"truncated checkpoint: {exc}") from None
    return config, tensors


def model_config(model: ACGAN) -> dict:
    return {
        "train": config_dict(model.cfg),
        "epochs_done": model.epochs_done,
        "feature": {
            "shape": list(features.MAP_SHAPE),
            "sample_rate": features.SAMPLE_RATE,
            "segment_samples": features.SEGMENT_SAMPLES,
            "n_fft": features.N_FFT,
            "hop": features.HOP,
            "n_mels": features.N_MELS,
        },
    }


def save_checkpoint(model: ACGAN, path) -> None:
    """Atomic write: temp file in the same directory, then rename."""
    data = encode(model_config(model), model.tensors())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def load_checkpoint(path) -> ACGAN:
    with open(path, "rb") as fh:
        config, tensors = decode(fh.read())
    cfg = TrainConfig(**config["train"])
    model = ACGAN(cfg)
    model.load_tensors(tensors)
    model.epochs_done = config.get("epochs_done", 0)
    return model
