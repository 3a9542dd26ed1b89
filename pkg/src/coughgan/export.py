"""Writing generated maps as PGM images and their audio renderings as WAV."""

from __future__ import annotations

import os

import numpy as np

from .features import feature_to_audio
from .wavio import write_wav


def encode_pgm(unit_map) -> bytes:
    """Binary PGM (P5, maxval 255) from values in [0, 1]; row 0 is the top row."""
    img = np.asarray(unit_map, dtype=np.float64)
    if img.ndim == 3:
        img = img[..., 0]
    q = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    h, w = q.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + q.tobytes()


def decode_pgm(data: bytes) -> np.ndarray:
    """Inverse of :func:`encode_pgm`; returns values in [0, 1]."""
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        end = pos
        while end < len(data) and not data[end : end + 1].isspace():
            end += 1
        if end == pos:
            raise ValueError("truncated PGM header")
        fields.append(data[pos:end])
        pos = end
    if fields[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h, maxval = (int(f) for f in fields[1:])
    body = data[pos + 1 : pos + 1 + w * h]  # exactly one whitespace byte after maxval
    if len(body) != w * h:
        raise ValueError("truncated PGM body")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).astype(np.float64) / maxval


def export_samples(unit, raw, out_dir, prefix: str, figure: bool = False, griffin_lim_iters: int = 32):
    """Write ``{prefix}_{i}.pgm`` / ``{prefix}_{i}.wav`` for every map.

    ``unit`` holds maps rescaled to [0, 1] (images); ``raw`` the generator's
    [-1, 1] output used for audio inversion.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for i, (u, r) in enumerate(zip(unit, raw)):
        pgm = os.path.join(out_dir, f"{prefix}_{i}.pgm")
        with open(pgm, "wb") as fh:
            fh.write(encode_pgm(u))
        wav = os.path.join(out_dir, f"{prefix}_{i}.wav")
        write_wav(wav, feature_to_audio(np.asarray(r, np.float32), iterations=griffin_lim_iters, seed=i))
        paths += [pgm, wav]
    if figure:
        from .plots import plot_sample_grid
        path = os.path.join(out_dir, f"{prefix}.png")
        plot_sample_grid(unit, path)
        paths.append(path)
    return paths
