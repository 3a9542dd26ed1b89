import struct

import numpy as np
import pytest

from coughgan.errors import FormatError
from coughgan.wavio import AudioBuffer, encode_wav, read_wav


def _pcm16(samples, channels=1, rate=8000):
    data = struct.pack(f"<{len(samples)}h", *samples)
    fmt = struct.pack("<HHIIHH", 1, channels, rate, rate * 2 * channels, 2 * channels, 16)
    body = b"WAVE" + b"fmt " + struct.pack("<I", 16) + fmt + b"data" + struct.pack("<I", len(data)) + data
    return b"RIFF" + struct.pack("<I", len(body)) + body


def test_pcm16_scaling():
    buf = read_wav(_pcm16([0, 16384, -16384]))
    np.testing.assert_array_equal(buf.samples, [0.0, 0.5, -0.5])
    assert buf.sample_rate == 8000


def test_stereo_interleaving():
    buf = read_wav(_pcm16([1, 2, 3, 4], channels=2))
    assert buf.channels == 2
    np.testing.assert_array_equal(buf.frames * 32768, [[1, 2], [3, 4]])


def test_bad_magic():
    with pytest.raises(FormatError):
        read_wav(b"RIFX" + _pcm16([0])[4:])


def test_unsupported_code():
    data = bytearray(_pcm16([0, 1]))
    data[20:22] = struct.pack("<H", 2)  # ADPCM
    with pytest.raises(FormatError, match="format code 2"):
        read_wav(bytes(data))


def test_truncated_data():
    with pytest.raises(FormatError, match="truncated"):
        read_wav(_pcm16([0, 1, 2, 3])[:-3])


def test_float_roundtrip(rng):
    x = rng.uniform(-1, 1, 101).astype(np.float32)
    back = read_wav(encode_wav(AudioBuffer(x, 12000), float32=True))
    np.testing.assert_array_equal(back.samples, x)


def test_pcm_roundtrip_within_quantum(rng):
    x = rng.uniform(-0.99, 0.99, 500).astype(np.float32)
    back = read_wav(encode_wav(AudioBuffer(x, 12000)))
    assert np.max(np.abs(back.samples - x)) <= 0.5 / 32768 + 1e-9
