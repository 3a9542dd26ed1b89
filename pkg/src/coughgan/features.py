"""Spectral features and mel-spectrogram inversion.

Analysis defaults (n_fft 2048, hop 512, periodic Hann, reflect centering,
Slaney mel scale up to 6 kHz) turn a 1 s segment at 12 kHz into a 128 x 24
map, the image size the GAN works on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft

from .errors import ConfigError, ShapeError
from .dsp import peak_normalize
from .wavio import AudioBuffer

SAMPLE_RATE = 12000
SEGMENT_SAMPLES = 12000
N_FFT = 2048
HOP = 512
N_MELS = 128
N_FRAMES = 1 + SEGMENT_SAMPLES // HOP
MAP_SHAPE = (N_MELS, N_FRAMES, 1)

POWER_FLOOR = 1e-10
TOP_DB = 80.0


@dataclass
class StftMatrix:
    bins: np.ndarray  # (n_fft // 2 + 1, n_frames) complex
    n_fft: int
    hop: int
    sample_rate: int = SAMPLE_RATE
    length: int | None = None


@dataclass(frozen=True)
class MelFilterbank:
    weights: np.ndarray  # (n_mels, n_fft // 2 + 1)
    fmin: float
    fmax: float
    sample_rate: int
    n_fft: int


@dataclass
class FeatureMap:
    values: np.ndarray  # (128, 24, 1) in [-1, 1]
    class_label: int | None = None


def _check_geometry(n_fft, hop):
    if hop <= 0 or hop > n_fft:
        raise ConfigError(f"hop must be in (0, n_fft], got {hop}")
    if n_fft <= 0 or n_fft & (n_fft - 1):
        raise ConfigError(f"n_fft must be a power of two, got {n_fft}")


def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(x, n_fft: int = N_FFT, hop: int = HOP, sample_rate: int = SAMPLE_RATE) -> StftMatrix:
    _check_geometry(n_fft, hop)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise ShapeError("stft expects a non-empty 1-D signal")
    padded = np.pad(x, n_fft // 2, mode="reflect") if x.size > 1 else np.pad(x, n_fft // 2)
    n_frames = 1 + (padded.size - n_fft) // hop
    frames = np.lib.stride_tricks.sliding_window_view(padded, n_fft)[::hop][:n_frames]
    spec = np.fft.rfft(frames * hann(n_fft), axis=1).T
    return StftMatrix(spec, n_fft, hop, sample_rate, x.size)


def istft(S: StftMatrix, length: int | None = None) -> np.ndarray:
    """Least-squares overlap-add inverse of :func:`stft`."""
    n_fft, hop = S.n_fft, S.hop
    _check_geometry(n_fft, hop)
    if S.bins.ndim != 2 or S.bins.shape[0] != n_fft // 2 + 1:
        raise ConfigError(f"bins shape {S.bins.shape} does not match n_fft {n_fft}")
    length = length if length is not None else S.length
    n_frames = S.bins.shape[1]
    win = hann(n_fft)
    frames = np.fft.irfft(S.bins.T, n=n_fft, axis=1) * win
    total = n_fft + hop * (n_frames - 1)
    y = np.zeros(total)
    wss = np.zeros(total)
    for t in range(n_frames):
        y[t * hop : t * hop + n_fft] += frames[t]
        wss[t * hop : t * hop + n_fft] += win * win
    nz = wss > 1e-11
    y[nz] /= wss[nz]
    y = y[n_fft // 2 :]
    if length is None:
        return y[: total - n_fft]
    if y.size < length:
        y = np.pad(y, (0, length - y.size))
    return y[:length]


# ------------------------------------------------------------------- mel

_F_SP = 200.0 / 3
_MIN_LOG_HZ = 1000.0
_MIN_LOG_MEL = _MIN_LOG_HZ / _F_SP
_LOGSTEP = math.log(6.4) / 27.0


def hz_to_mel(f):
    f = np.asarray(f, dtype=np.float64)
    mel = f / _F_SP
    log_part = f >= _MIN_LOG_HZ
    return np.where(log_part, _MIN_LOG_MEL + np.log(np.maximum(f, 1e-300) / _MIN_LOG_HZ) / _LOGSTEP, mel)


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    return np.where(m >= _MIN_LOG_MEL, _MIN_LOG_HZ * np.exp(_LOGSTEP * (m - _MIN_LOG_MEL)), _F_SP * m)


@lru_cache(maxsize=16)
def mel_filterbank(n_mels: int = N_MELS, sample_rate: int = SAMPLE_RATE, n_fft: int = N_FFT,
                   fmin: float = 0.0, fmax: float | None = None) -> MelFilterbank:
    """Slaney-style triangular filterbank, area normalised."""
    fmax = sample_rate / 2 if fmax is None else fmax
    if not 0 <= fmin < fmax <= sample_rate / 2:
        raise ConfigError(f"need 0 <= fmin < fmax <= {sample_rate / 2}, got {fmin}, {fmax}")
    fft_freqs = np.linspace(0, sample_rate / 2, n_fft // 2 + 1)
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    quantized = np.round(edges * n_fft / sample_rate).astype(int)
    if np.any(np.diff(quantized) == 0):
        raise ConfigError(
            f"{n_mels} mel bands are too narrow for n_fft={n_fft} at {sample_rate} Hz"
        )
    widths = np.diff(edges)
    ramps = edges[:, None] - fft_freqs[None, :]
    lower = -ramps[:-2] / widths[:-1, None]
    upper = ramps[2:] / widths[1:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    weights *= (2.0 / (edges[2:] - edges[:-2]))[:, None]
    weights.setflags(write=False)
    return MelFilterbank(weights, float(fmin), float(fmax), sample_rate, n_fft)


def power_spectrogram(x, n_fft=N_FFT, hop=HOP):
    return np.abs(stft(x, n_fft, hop).bins) ** 2


def mel_spectrogram(x, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    x = np.asarray(x)
    if x.shape != (SEGMENT_SAMPLES,):
        raise ShapeError(f"expected a {SEGMENT_SAMPLES}-sample segment, got shape {x.shape}")
    fb = mel_filterbank(N_MELS, sample_rate, N_FFT)
    return fb.weights @ power_spectrogram(x)


def scale_to_unit(mel_power, label: int | None = None) -> FeatureMap:
    """Log-compress to 80 dB below the map maximum and map onto [-1, 1]."""
    S = np.asarray(mel_power, dtype=np.float64)
    if np.any(S < 0):
        raise ConfigError("mel power must be non-negative")
    ref = max(float(S.max()) if S.size else 0.0, POWER_FLOOR)
    db = 10.0 * np.log10(np.maximum(S, POWER_FLOOR) / ref)
    db = np.clip(db, -TOP_DB, 0.0)
    values = ((db + 40.0) / 40.0).astype(np.float32)
    if values.ndim == 2:
        values = values[..., None]
    return FeatureMap(values, label)


def unscale(f, ref: float = 1.0) -> np.ndarray:
    """Inverse of :func:`scale_to_unit` given the original map maximum."""
    values = f.values if isinstance(f, FeatureMap) else np.asarray(f)
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 3:
        v = v[..., 0]
    return ref * 10.0 ** ((40.0 * v - 40.0) / 10.0)


def featurize(segment, label: int | None = None) -> FeatureMap:
    return scale_to_unit(mel_spectrogram(segment), label)


def mfcc(x, n_mfcc: int = 20, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    if n_mfcc > N_MELS:
        raise ConfigError(f"n_mfcc {n_mfcc} exceeds n_mels {N_MELS}")
    return mfcc_from_log_mel(np.log(mel_spectrogram(x, sample_rate) + POWER_FLOOR), n_mfcc)


def mfcc_from_log_mel(log_mel, n_mfcc: int = 20) -> np.ndarray:
    return scipy.fft.dct(np.asarray(log_mel, dtype=np.float64), type=2, norm="ortho", axis=0)[:n_mfcc]


def chroma(x, sample_rate: int = SAMPLE_RATE, n_fft: int = N_FFT, hop: int = HOP) -> np.ndarray:
    """Pitch-class energy, A = class 0, each frame scaled to a maximum of 1."""
    power = power_spectrogram(x, n_fft, hop)
    freqs = np.arange(1, n_fft // 2 + 1) * sample_rate / n_fft
    pc = np.mod(np.round(12 * np.log2(freqs / 440.0)).astype(int), 12)
    out = np.zeros((12, power.shape[1]))
    np.add.at(out, pc, power[1:])
    peak = out.max(axis=0)
    nz = peak > 0
    out[:, nz] /= peak[nz]
    return out


# ------------------------------------------------------------ inversion

def mel_to_magnitude(mel_power, fb: MelFilterbank | None = None) -> np.ndarray:
    fb = fb or mel_filterbank()
    W = fb.weights
    col = W.sum(axis=0)
    lin = W.T @ np.asarray(mel_power, dtype=np.float64)
    nz = col > 0
    lin[nz] /= col[nz, None]
    lin[~nz] = 0.0
    return np.sqrt(np.maximum(lin, 0.0))


def griffin_lim(magnitude, iterations: int = 32, length: int = SEGMENT_SAMPLES,
                n_fft: int = N_FFT, hop: int = HOP, seed: int = 0, errors: list | None = None):
    """Classic Griffin-Lim phase retrieval from a magnitude spectrogram.

    When ``errors`` is given, the spectral distance of each iterate is appended.
    """
    rng = np.random.default_rng(seed)
    M = np.asarray(magnitude, dtype=np.float64)
    angles = np.exp(2j * np.pi * rng.random(M.shape))
    x = np.zeros(length)
    for _ in range(iterations):
        x = istft(StftMatrix(M * angles, n_fft, hop), length=length)
        S = stft(x, n_fft, hop).bins
        if errors is not None:
            errors.append(float(np.linalg.norm(np.abs(S) - M)))
        mag = np.abs(S)
        angles = np.where(mag > 0, S / np.where(mag > 0, mag, 1.0), 1.0)
    return x


def feature_to_audio(f, iterations: int = 32, seed: int = 0) -> AudioBuffer:
    values = f.values if isinstance(f, FeatureMap) else np.asarray(f)
    if values.shape != MAP_SHAPE:
        raise ShapeError(f"expected a feature map of shape {MAP_SHAPE}, got {values.shape}")
    magnitude = mel_to_magnitude(unscale(values))
    x = griffin_lim(magnitude, iterations, SEGMENT_SAMPLES, seed=seed)
    return AudioBuffer(peak_normalize(x).astype(np.float32), SAMPLE_RATE)
