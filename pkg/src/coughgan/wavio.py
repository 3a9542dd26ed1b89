"""Minimal RIFF/WAVE codec: 16-bit PCM and 32-bit IEEE float."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError

WAVE_FORMAT_PCM = 1
WAVE_FORMAT_IEEE_FLOAT = 3
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass
class AudioBuffer:
    """Interleaved float32 samples plus their sample rate."""

    samples: np.ndarray
    sample_rate: int
    channels: int = 1

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32).reshape(-1)
        if self.sample_rate <= 0:
            raise FormatError(f"sample rate must be positive, got {self.sample_rate}")
        if self.channels < 1 or self.samples.size % self.channels:
            raise FormatError(
                f"{self.samples.size} samples do not divide into {self.channels} channels"
            )

    @property
    def frames(self) -> np.ndarray:
        """Samples as an (n_frames, channels) view."""
        return self.samples.reshape(-1, self.channels)

    def __len__(self):
        return self.samples.size // self.channels


def read_wav(data: bytes) -> AudioBuffer:
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError("not a RIFF/WAVE file")
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8 : pos + 8 + size]
        if cid == b"fmt ":
            if len(body) < 16:
                raise FormatError("fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body)
            if fmt[0] == WAVE_FORMAT_EXTENSIBLE and len(body) >= 26:
                fmt = (struct.unpack_from("<H", body, 24)[0],) + fmt[1:]
        elif cid == b"data":
            if len(body) < size:
                raise FormatError(f"data chunk truncated: header says {size} bytes, found {len(body)}")
            payload = body
            break
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise FormatError("missing fmt chunk")
    if payload is None:
        raise FormatError("missing data chunk")

    code, channels, rate, _, block_align, bits = fmt
    if code == WAVE_FORMAT_PCM and bits == 16:
        dtype, scale = "<i2", 1.0 / 32768.0
    elif code == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        dtype, scale = "<f4", 1.0
    else:
        raise FormatError(f"unsupported WAV format code {code} with {bits} bits per sample")
    if channels < 1:
        raise FormatError("WAV declares zero channels")
    usable = len(payload) - len(payload) % block_align
    samples = np.frombuffer(payload[:usable], dtype=dtype).astype(np.float32)
    if scale != 1.0:
        samples *= np.float32(scale)
    return AudioBuffer(samples, rate, channels)


def load_wav(path: str | os.PathLike) -> AudioBuffer:
    with open(path, "rb") as fh:
        return read_wav(fh.read())


def encode_wav(buffer: AudioBuffer, float32: bool = False) -> bytes:
    """Serialize to WAV bytes; PCM-16 by default (clipped, rounded)."""
    x = buffer.samples
    if float32:
        code, bits, payload = WAVE_FORMAT_IEEE_FLOAT, 32, x.astype("<f4").tobytes()
    else:
        q = np.clip(np.round(x.astype(np.float64) * 32768.0), -32768, 32767).astype("<i2")
        code, bits, payload = WAVE_FORMAT_PCM, 16, q.tobytes()
    block = buffer.channels * bits // 8
    fmt = struct.pack("<HHIIHH", code, buffer.channels, buffer.sample_rate,
                      buffer.sample_rate * block, block, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    return b"RIFF" + struct.pack("<I", len(body)) + body


def write_wav(path: str | os.PathLike, buffer: AudioBuffer, float32: bool = False) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_wav(buffer, float32=float32))
