"""NPY v1.0 persistence and the per-status segment directory layout."""

from __future__ import annotations

import ast
import csv
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError

NPY_MAGIC = b"\x93NUMPY"
ALIGN = 64


def npy_encode(array) -> bytes:
    a = np.asarray(array, dtype="<f4")
    if a.ndim > 3:
        raise FormatError(f"rank {a.ndim} arrays are not supported (max 3)")
    shape = f"({a.shape[0]},)" if a.ndim == 1 else "(" + ", ".join(map(str, a.shape)) + ")"
    header = f"{{'descr': '<f4', 'fortran_order': False, 'shape': {shape}, }}"
    preamble = len(NPY_MAGIC) + 2 + 2
    pad = -(preamble + len(header) + 1) % ALIGN
    header = header + " " * pad + "\n"
    return NPY_MAGIC + b"\x01\x00" + struct.pack("<H", len(header)) + header.encode("ascii") + a.tobytes(order="C")


def npy_decode(data: bytes) -> np.ndarray:
    if len(data) < 10 or data[:6] != NPY_MAGIC:
        raise FormatError("bad NPY magic")
    major, minor = data[6], data[7]
    if (major, minor) != (1, 0):
        raise FormatError(f"unsupported NPY version {major}.{minor}")
    (hlen,) = struct.unpack_from("<H", data, 8)
    try:
        header = ast.literal_eval(data[10 : 10 + hlen].decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise FormatError(f"unreadable NPY header: {exc}") from None
    if not isinstance(header, dict) or header.get("descr") != "<f4":
        raise FormatError(f"unsupported NPY dtype {header.get('descr') if isinstance(header, dict) else header!r}")
    if header.get("fortran_order"):
        raise FormatError("fortran-ordered NPY arrays are not supported")
    shape = tuple(header["shape"])
    payload = data[10 + hlen :]
    expected = 4 * int(np.prod(shape, dtype=np.int64))
    if len(payload) != expected:
        raise FormatError(f"NPY payload is {len(payload)} bytes, header shape {shape} needs {expected}")
    return np.frombuffer(payload, dtype="<f4").reshape(shape).copy()


def npy_write(array, path) -> None:
    with open(path, "wb") as fh:
        fh.write(npy_encode(array))


def npy_read(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return npy_decode(fh.read())


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    status: str
    uuid: str
    index: int


def store_segments(segments: dict, root) -> list[ManifestEntry]:
    """Write ``{(uuid, status): [segment, ...]}`` as ``<root>/<status>/<uuid>-<i>.npy``.

    Existing files are overwritten. The manifest is sorted by (status, uuid, index).
    """
    entries = []
    for (uuid, status), segs in segments.items():
        if not segs:
            continue
        folder = os.path.join(root, status.lower())
        try:
            os.makedirs(folder, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create {folder}: {exc}") from exc
        for i, seg in enumerate(segs):
            path = os.path.join(folder, f"{uuid}-{i}.npy")
            try:
                npy_write(seg, path)
            except OSError as exc:
                raise OSError(f"cannot write {path}: {exc}") from exc
            entries.append(ManifestEntry(path, status.lower(), uuid, i))
    entries.sort(key=lambda e: (e.status, e.uuid, e.index))
    return entries


def write_manifest(entries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "status", "uuid", "index"])
        for e in entries:
            w.writerow([e.path, e.status, e.uuid, e.index])


def scan_store(root) -> list[ManifestEntry]:
    """Enumerate an existing segment store."""
    entries = []
    for status in sorted(os.listdir(root)):
        folder = os.path.join(root, status)
        if not os.path.isdir(folder):
            continue
        for name in os.listdir(folder):
            if not name.endswith(".npy"):
                continue
            uuid, _, idx = name[:-4].rpartition("-")
            if not idx.isdigit():
                continue
            entries.append(ManifestEntry(os.path.join(folder, name), status, uuid, int(idx)))
    entries.sort(key=lambda e: (e.status, e.uuid, e.index))
    return entries
