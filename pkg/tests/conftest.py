import csv
import io
import os

import numpy as np
import pytest

from coughgan.metadata import COLUMNS, EXPERT_FIELDS
from coughgan.wavio import AudioBuffer, write_wav

REAL_METADATA = os.environ.get("COUGHVID_METADATA")


def make_row(uuid, cough_detected=0.9, snr=10.0, status="healthy", experts=None, **extra):
    """A 51-column metadata row as a dict; ``experts`` maps k -> {field: value}."""
    row = {c: "" for c in COLUMNS}
    row.update(uuid=uuid, datetime="2020-04-13T21:30:59.801831+00:00",
               cough_detected=str(cough_detected), SNR=str(snr), status=status or "")
    for k, ann in (experts or {}).items():
        for name in EXPERT_FIELDS:
            row[f"{name}_{k}"] = ann.get(name, "")
    row.update({k: str(v) for k, v in extra.items()})
    return row


def make_csv(rows, header=COLUMNS) -> bytes:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=header, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue().encode("utf-8")


def burst_signal(fs, n, bursts, amplitude=1.0):
    x = np.zeros(n)
    for a, b in bursts:
        x[a:b] = amplitude
    return x


def write_cough_wav(path, fs=24000, seconds=2.0, bursts=((0.5, 0.8),), seed=0, silent=False):
    """A noise-burst 'cough' recording: low background, loud bursts."""
    rng = np.random.default_rng(seed)
    n = int(fs * seconds)
    x = np.zeros(n) if silent else rng.normal(0, 0.001, n)
    if not silent:
        for a, b in bursts:
            i, j = int(a * fs), int(b * fs)
            t = np.arange(j - i) / fs
            x[i:j] += 0.8 * np.sin(2 * np.pi * 400 * t) * np.hanning(j - i)
    write_wav(path, AudioBuffer(x.astype(np.float32), fs))
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[n])
