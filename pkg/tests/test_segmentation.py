import math

import numpy as np
import pytest

from coughgan.dsp import SegmentConfig, segment_cough
from coughgan.errors import ConfigError


def brute_force(x, fs, cfg):
    """Scan-based re-derivation of the hysteresis machine.

    Finds each entry sample, then searches forward for the first run of
    ``tolerance + 1`` low-power samples; returns (spans, mask, tail_span).
    """
    n = len(x)
    p = [float(v) * float(v) for v in x]
    rms = math.sqrt(sum(p) / n)
    lo, hi = cfg.th_l_multiplier * rms, cfg.th_h_multiplier * rms
    pad = round(fs * cfg.cough_padding)
    min_len = round(fs * cfg.min_cough_len)
    tol = round(0.01 * fs)
    spans, mask = [], [False] * n
    i = 0
    while i < n:
        entries = [j for j in range(i, n) if p[j] > hi]
        if not entries:
            break
        j = entries[0]
        start = max(j - pad, 0)
        run, k, exit_at = 0, j + 1, None
        while k < n:
            run = run + 1 if p[k] < lo else 0
            if run == tol + 1:
                exit_at = k
                break
            k += 1
        if exit_at is None:
            if j < n - 1 and p[n - 1] >= lo and n - start - 2 * pad > min_len:
                spans.append((start, n - 1))
            break
        end = min(exit_at + pad, n)
        if end + 1 - start - 2 * pad > min_len:
            spans.append((start, min(end, n - 1)))
            for t in range(start, min(end + 1, n)):
                mask[t] = True
        i = exit_at + 1
    return spans, np.array(mask, dtype=bool)


class TestHandTrace:
    CFG = SegmentConfig(cough_padding=0.0, min_cough_len=0.05)

    def burst(self, *ranges, n=1000):
        x = np.zeros(n)
        for a, b in ranges:
            x[a:b] = 1.0
        return x

    def test_single_burst(self):
        x = self.burst((500, 600))
        rms = math.sqrt(np.mean(x**2))
        assert rms == pytest.approx(0.3162, abs=1e-4)
        res = segment_cough(x, 1000, self.CFG)
        assert res.spans == [(500, 610)]
        assert len(res.segments[0]) == 111
        assert np.flatnonzero(res.mask).tolist() == list(range(500, 611))

    def test_two_bursts_in_order(self):
        res = segment_cough(self.burst((200, 300), (600, 700)), 1000, self.CFG)
        assert [s for s, _ in res.spans] == [200, 600]
        assert all(len(seg) == 111 for seg in res.segments)

    def test_short_burst_dropped(self):
        res = segment_cough(self.burst((500, 530)), 1000, self.CFG)
        assert res.segments == [] and not res.mask.any()

    def test_silent_and_empty(self):
        assert segment_cough(np.zeros(500), 1000).segments == []
        res = segment_cough(np.zeros(0), 1000)
        assert res.segments == [] and res.mask.size == 0

    def test_tail_segment_leaves_mask(self):
        res = segment_cough(self.burst((800, 1000)), 1000, self.CFG)
        assert res.spans == [(800, 999)]
        assert not res.mask.any()

    def test_padding(self):
        cfg = SegmentConfig(cough_padding=0.02, min_cough_len=0.05)
        res = segment_cough(self.burst((500, 600)), 1000, cfg)
        assert res.spans == [(480, 630)]

    def test_bad_thresholds(self):
        with pytest.raises(ConfigError):
            SegmentConfig(th_l_multiplier=2.0, th_h_multiplier=1.0)


def _random_case(rng):
    fs = int(rng.integers(100, 1500))
    n = int(rng.integers(1, 3 * fs))
    x = rng.normal(0, rng.uniform(0.001, 0.2), n)
    for _ in range(rng.integers(0, 5)):
        a = int(rng.integers(0, n))
        b = min(n, a + int(rng.integers(1, max(2, fs // 2))))
        x[a:b] += rng.uniform(0.2, 1.5) * rng.choice([-1, 1], b - a)
    cfg = SegmentConfig(
        cough_padding=float(rng.choice([0.0, 0.01, 0.05, 0.1])),
        min_cough_len=float(rng.choice([0.0, 0.02, 0.1])),
        th_l_multiplier=float(rng.uniform(0.05, 0.5)),
        th_h_multiplier=float(rng.uniform(0.6, 3.0)),
    )
    return x, fs, cfg


def test_matches_brute_force_on_random_signals():
    rng = np.random.default_rng(2024)
    emitted = 0
    for _ in range(1000):
        x, fs, cfg = _random_case(rng)
        res = segment_cough(x, fs, cfg)
        spans, mask = brute_force(x, fs, cfg)
        assert res.spans == spans, (fs, cfg)
        np.testing.assert_array_equal(res.mask, mask)
        for (a, b), seg in zip(res.spans, res.segments):
            np.testing.assert_array_equal(seg, x[a : b + 1])
        emitted += len(spans)
    assert emitted > 200  # the generator exercises real segments


def test_emitted_length_invariant():
    rng = np.random.default_rng(7)
    for _ in range(200):
        x, fs, cfg = _random_case(rng)
        pad = round(fs * cfg.cough_padding)
        for a, b in segment_cough(x, fs, cfg).spans:
            assert b + 1 - a - 2 * pad > round(fs * cfg.min_cough_len) or b == len(x) - 1
