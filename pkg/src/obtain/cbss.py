"""Cumulative beat strength signal.

Each new onset-strength value is blended with the best log-Gaussian
weighted score found roughly one beat period back::

    cbss[n] = (1 - alpha) * oss[n] + alpha * max_v W[v] * cbss[n + v]
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _accel
from .errors import ParameterError


@dataclass(frozen=True)
class CbssConfig:
    alpha: float = 0.9
    eta: float = 5.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ParameterError("alpha must lie in [0, 1]")
        if self.eta <= 0:
            raise ParameterError("eta must be > 0")


def window_offsets(tau_b):
    """Integer lookback offsets v with -2*tau_b <= v <= -tau_b/2."""
    return np.arange(-2 * tau_b, -math.ceil(tau_b / 2) + 1)


@lru_cache(maxsize=256)
def _window(tau_b, eta):
    v = window_offsets(tau_b)
    w = np.exp(-(eta * np.log(-v / tau_b)) ** 2)
    w.setflags(write=False)
    return v, w


def log_gaussian_window(tau_b, eta=5.0):
    """Return ``(v, W)`` for the lookback window of beat period ``tau_b``."""
    tau_b = int(round(tau_b))
    if tau_b < 2:
        raise ParameterError(f"tau_b must be >= 2, got {tau_b}")
    return _window(tau_b, float(eta))


class CbssBuffer:
    """Ring buffer of CBSS values with a monotone write counter.

    Values are written twice (``i`` and ``i + capacity``) so any window of
    up to ``capacity`` most-recent samples is a contiguous slice.
    """

    def __init__(self, capacity):
        self.capacity = int(capacity)
        self._ring = np.zeros(2 * self.capacity)
        self.write_index = 0

    @classmethod
    def for_tempo_range(cls, min_period_bpm=50.0, oss_rate=44100 / 128, extra=512):
        slow = int(round(60.0 * oss_rate / min_period_bpm))
        return cls(max(2 * slow + 1, extra))

    def append(self, value):
        p = self.write_index % self.capacity
        self._ring[p] = value
        self._ring[p + self.capacity] = value
        self.write_index += 1

    def recent(self, length):
        """The last ``length`` values, oldest first, zero-padded at cold start."""
        if length > self.capacity:
            raise ParameterError("window longer than buffer capacity")
        end = self.write_index % self.capacity + self.capacity
        seg = self._ring[end - length:end]
        if self.write_index < length:
            seg = seg.copy()
            seg[: length - self.write_index] = 0.0
        return seg

    def __getitem__(self, index):
        """Value at global index (must still be inside the ring)."""
        if index < 0:
            return 0.0
        if index >= self.write_index or index < self.write_index - self.capacity:
            raise IndexError(index)
        return float(self._ring[index % self.capacity])

    def values_at(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        out = self._ring[indices % self.capacity]
        return np.where(indices < 0, 0.0, out)


def phi(buf, tau_b, eta=5.0):
    """Best weighted previous score for the sample about to be appended."""
    v, w = log_gaussian_window(tau_b, eta)
    # v runs from -2*tau_b up to -ceil(tau_b/2); n + v for n = write_index
    seg = buf.recent(-int(v[0]))[: len(v)]
    return _accel.weighted_max(seg, w)


def cbss_update(oss_value, buf, cfg=CbssConfig(), tau_b=None):
    """Append and return the next CBSS value. Without a period, CBSS = OSS."""
    if tau_b is None or cfg.alpha == 0.0:
        value = float(oss_value)
    else:
        value = (1.0 - cfg.alpha) * oss_value + cfg.alpha * phi(buf, tau_b, cfg.eta)
    buf.append(value)
    return value


def cbss_offline(oss, tau_b, cfg=CbssConfig()):
    """Run the recursion over a whole OSS array with a fixed period."""
    oss = np.asarray(oss, dtype=np.float64)
    buf = CbssBuffer(max(2 * int(round(tau_b)) + 1, 8) if tau_b else 8)
    return np.array([cbss_update(o, buf, cfg, tau_b) for o in oss])
