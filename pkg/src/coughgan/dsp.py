"""Cough preprocessing: mono mix, peak normalisation, zero-phase low-pass,
decimation and hysteresis segmentation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError, DomainError
from .wavio import AudioBuffer

PEAK_EPS = 1e-17


@dataclass(frozen=True)
class PreprocessConfig:
    cutoff: float = 6000.0
    normalize: bool = True
    filter: bool = True
    downsample: bool = True

    def __post_init__(self):
        if self.cutoff <= 0:
            raise ConfigError("cutoff must be positive")

    @property
    def fs_downsample(self) -> int:
        return int(round(self.cutoff * 2))


@dataclass(frozen=True)
class SegmentConfig:
    cough_padding: float = 0.1
    min_cough_len: float = 0.1
    th_l_multiplier: float = 0.1
    th_h_multiplier: float = 2.0

    def __post_init__(self):
        if not 0 < self.th_l_multiplier < self.th_h_multiplier:
            raise ConfigError("need 0 < th_l_multiplier < th_h_multiplier")
        if self.cough_padding < 0 or self.min_cough_len < 0:
            raise ConfigError("padding and minimum cough length must be non-negative")


@dataclass
class SegmentationResult:
    segments: list = field(default_factory=list)
    mask: np.ndarray = None
    spans: list = field(default_factory=list)  # inclusive (start, end) per segment


def to_mono(buffer: AudioBuffer) -> AudioBuffer:
    if buffer.channels == 1:
        return buffer
    return AudioBuffer(buffer.frames.mean(axis=1), buffer.sample_rate, 1)


def peak_normalize(x):
    x = np.asarray(x)
    return x / (np.max(np.abs(x)) + PEAK_EPS) if x.size else x


# ------------------------------------------------------------ filter design

def _zpk_to_tf(z, p, k):
    b = np.real(k * np.poly(z))
    a = np.real(np.poly(p))
    return b, a


def _bilinear_lowpass(poles, gain, wn):
    """Map an all-pole analog prototype (cutoff 1 rad/s) onto a digital
    low-pass with normalized cutoff ``wn`` (1 = Nyquist)."""
    fs2 = 4.0  # 2 * fs with fs = 2
    warped = fs2 * math.tan(math.pi * wn / 2.0)
    p = poles * warped
    k = gain * warped ** len(poles)
    pz = (fs2 + p) / (fs2 - p)
    zz = -np.ones(len(poles))
    kz = k * np.real(1.0 / np.prod(fs2 - p))
    return _zpk_to_tf(zz, pz, kz)


def butterworth_lowpass(order: int = 4, wn: float = 0.5):
    """Digital Butterworth low-pass coefficients ``(b, a)`` with ``a[0] == 1``."""
    if not 0 < wn < 1:
        raise DomainError(f"normalized cutoff must lie in (0, 1), got {wn}")
    if order < 1:
        raise DomainError("filter order must be at least 1")
    m = np.arange(-order + 1, order, 2)
    poles = -np.exp(1j * math.pi * m / (2 * order))
    return _bilinear_lowpass(poles, 1.0, wn)


def chebyshev1_lowpass(order: int, ripple_db: float, wn: float):
    """Digital Chebyshev type-I low-pass, passband ripple in dB."""
    if not 0 < wn < 1:
        raise DomainError(f"normalized cutoff must lie in (0, 1), got {wn}")
    eps = math.sqrt(10 ** (0.1 * ripple_db) - 1.0)
    mu = math.asinh(1.0 / eps) / order
    theta = math.pi * np.arange(-order + 1, order, 2) / (2 * order)
    poles = -np.sinh(mu + 1j * theta)
    gain = np.real(np.prod(-poles))
    if order % 2 == 0:
        gain /= math.sqrt(1 + eps * eps)
    return _bilinear_lowpass(poles, gain, wn)


def lfilter_zi(b, a):
    """Steady-state initial conditions of a direct-form II transposed filter
    for a unit step input."""
    b = np.asarray(b, dtype=np.float64) / a[0]
    a = np.asarray(a, dtype=np.float64) / a[0]
    n = max(len(a), len(b))
    b = np.pad(b, (0, n - len(b)))
    a = np.pad(a, (0, n - len(a)))
    if n == 1:
        return np.zeros(0)
    companion = np.zeros((n - 1, n - 1))
    companion[:, 0] = -a[1:]
    companion[:-1, 1:] = np.eye(n - 2)
    rhs = b[1:] - a[1:] * b[0]
    return np.linalg.solve(np.eye(n - 1) - companion, rhs)


def filtfilt(b, a, x):
    """Zero-phase forward-backward filtering with odd reflection padding."""
    x = np.asarray(x, dtype=np.float64)
    padlen = 3 * max(len(a), len(b))
    if x.ndim != 1 or x.size <= padlen:
        raise DomainError(f"input of length {x.size} is too short for padlen {padlen}")
    ext = np.concatenate([
        2 * x[0] - x[padlen:0:-1],
        x,
        2 * x[-1] - x[-2 : -padlen - 2 : -1],
    ])
    zi = lfilter_zi(b, a)
    y, _ = lfilter(b, a, ext, zi=zi * ext[0])
    y = y[::-1]
    y, _ = lfilter(b, a, y, zi=zi * y[0])
    return y[::-1][padlen:-padlen]


def decimate(x, factor: int):
    """Zero-phase Chebyshev anti-alias filter, then keep every ``factor``-th sample."""
    if factor < 1:
        raise DomainError(f"decimation factor must be >= 1, got {factor}")
    x = np.asarray(x)
    if factor == 1:
        return x
    b, a = chebyshev1_lowpass(8, 0.05, 0.8 / factor)
    return filtfilt(b, a, x)[::factor]


def preprocess_cough(buffer: AudioBuffer, cfg: PreprocessConfig = PreprocessConfig()):
    """Mono, normalise, low-pass and decimate; returns ``(buffer, fs_new)``.

    ``fs_new`` is always ``2 * cutoff``, even when the integer decimation
    factor leaves the true rate elsewhere.
    """
    if len(buffer) == 0:
        raise DomainError("cannot preprocess an empty buffer")
    fs = buffer.sample_rate
    fs_new = cfg.fs_downsample
    x = to_mono(buffer).samples.astype(np.float64)
    if cfg.normalize:
        x = peak_normalize(x)
    if cfg.filter:
        b, a = butterworth_lowpass(4, fs_new / fs)
        x = filtfilt(b, a, x)
    if cfg.downsample:
        x = decimate(x, int(fs / fs_new))
    return AudioBuffer(x.astype(np.float32), fs_new), fs_new


def segment_cough(x, fs: int, cfg: SegmentConfig = SegmentConfig()) -> SegmentationResult:
    """Split a signal into individual coughs with a hysteresis comparator on x**2.

    Entering a cough needs a sample above ``th_h``; leaving it needs more than
    ``tolerance`` consecutive samples below ``th_l``. Segments reaching the end
    of the signal are emitted without touching the mask.
    """
    if fs <= 0:
        raise DomainError("sample rate must be positive")
    x = np.asarray(x)
    n = x.size
    mask = np.zeros(n, dtype=bool)
    result = SegmentationResult(mask=mask)
    if n == 0:
        return result

    rms = math.sqrt(float(np.mean(np.square(x, dtype=np.float64))))
    th_l = cfg.th_l_multiplier * rms
    th_h = cfg.th_h_multiplier * rms
    padding = round(fs * cfg.cough_padding)
    min_samples = round(fs * cfg.min_cough_len)
    tolerance = round(0.01 * fs)

    power = np.square(x, dtype=np.float64).tolist()
    start = 0
    active = False
    below = 0
    for i, s in enumerate(power):
        if active:
            if s < th_l:
                below += 1
                if below > tolerance:
                    end = min(i + padding, n)
                    active = False
                    if end + 1 - start - 2 * padding > min_samples:
                        result.segments.append(x[start : end + 1])
                        result.spans.append((start, min(end, n - 1)))
                        mask[start : end + 1] = True
            elif i == n - 1:
                active = False
                if i + 1 - start - 2 * padding > min_samples:
                    result.segments.append(x[start : i + 1])
                    result.spans.append((start, i))
            else:
                below = 0
        elif s > th_h:
            start = max(i - padding, 0)
            active = True
            below = 0
    return result


def fix_length(x, n: int):
    if n < 0:
        raise DomainError("target length must be non-negative")
    x = np.asarray(x)
    if x.size >= n:
        return x[:n]
    return np.concatenate([x, np.zeros(n - x.size, dtype=x.dtype)])
