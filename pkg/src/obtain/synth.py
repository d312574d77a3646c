"""Synthetic test signals: click tracks with known beat grids."""

import numpy as np

from .audio import SAMPLE_RATE


def click(sr=SAMPLE_RATE, freq=1000.0, dur=0.03, decay=0.005):
    t = np.arange(int(dur * sr)) / sr
    return np.sin(2 * np.pi * freq * t) * np.exp(-t / decay)


def beat_grid(segments, start=0.0):
    """Beat times for ``[(bpm, seconds), ...]`` played back to back."""
    times = []
    t0 = start
    for bpm, dur in segments:
        period = 60.0 / bpm
        t = t0
        end = t0 + dur
        while t < end - 1e-9:
            times.append(t)
            t += period
        t0 = t
    return np.asarray(times)


def click_track(bpm=120.0, duration=30.0, sr=SAMPLE_RATE, amplitude=0.5,
                noise=0.0, seed=0, segments=None, start=0.0):
    """Render clicks on a tempo grid; returns ``(samples, beat_times)``."""
    if segments is None:
        segments = [(bpm, duration - start)]
    times = beat_grid(segments, start)
    total = int(round(max(start + sum(d for _, d in segments), duration) * sr))
    y = np.zeros(total)
    c = amplitude * click(sr)
    for t in times:
        i = int(round(t * sr))
        seg = y[i:i + len(c)]
        seg += c[: len(seg)]
    if noise > 0:
        y += noise * np.random.default_rng(seed).standard_normal(total)
    return np.clip(y, -1.0, 1.0), times[times < total / sr]
