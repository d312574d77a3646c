"""Real-time beat picking on the CBSS.

Two systems run side by side:

* System 1 looks for a multiscale local maximum (local maxima scalogram,
  LMS) at the newest decidable CBSS sample while the elapsed time since
  the last beat is inside ``(BP - early_margin, BP + late_margin)``. If the
  span closes without a peak a forced beat keeps the sequence periodic.
* System 2 fires once per interval, half a period after the last beat,
  and phase-matches a pulse train of period BP against the last 512 CBSS
  samples. When its pulse positions carry a higher mean CBSS than System 1's
  recent beats, the beat sequence is re-anchored onto System 2's grid.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .audio import SAMPLE_RATE
from .errors import ParameterError

SOURCE_SYSTEM1 = "system1"
SOURCE_FORCED = "forced"
SOURCE_CORRECTION = "system2-correction"


@dataclass(frozen=True)
class DetectorConfig:
    frame_len: int = 512
    frame_hop: int = 1
    early_margin: int = 10
    late_margin: int = 7
    rng_seed: int = 2017
    phase_agreement: int = 7
    hop: int = 128

    def __post_init__(self):
        if self.frame_len < 4:
            raise ParameterError("frame_len must be >= 4")
        if self.frame_hop != 1:
            raise ParameterError("the detector advances one CBSS sample at a time")
        if self.early_margin < 0 or self.late_margin < 0:
            raise ParameterError("margins must be >= 0")


@dataclass
class BeatEvent:
    frame_index: int
    source: str = SOURCE_SYSTEM1
    hop: int = 128

    @property
    def time_sec(self):
        return self.frame_index * self.hop / SAMPLE_RATE

    def to_json(self):
        return {"time": round(self.time_sec, 6), "source": self.source}


# ---------------------------------------------------------------------------
# peak detection
# ---------------------------------------------------------------------------


def detrend(x):
    """Remove the least-squares straight line from ``x``."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise ParameterError("detrend needs at least 2 samples")
    t = np.arange(n) - (n - 1) / 2.0
    slope = np.dot(t, x) / np.dot(t, t)
    return x - x.mean() - slope * t


def n_scales(n):
    """Number of LMS rows for a frame of ``n`` samples: ceil(n/2) - 1."""
    return max((n + 1) // 2 - 1, 0)


@dataclass
class LmsMatrix:
    entries: np.ndarray
    row_sums: np.ndarray
    lam: int

    @property
    def scaled(self):
        """Rows 1..lambda."""
        return self.entries[: self.lam]


def lms_matrix(x, rng):
    """Full local maxima scalogram of ``x`` (rows are scales 1..K).

    Entry (k, i) is 0 when sample i exceeds both of its k-distant
    neighbours and ``1 + r`` otherwise, r ~ U[0, 1]. Neighbours outside
    the frame take the random branch. Meant for inspection and tests;
    the detector uses the fused kernel in :mod:`obtain._accel`.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    K = n_scales(n)
    r = rng.random((K, n))
    m = 1.0 + r
    for k in range(1, K + 1):
        i = np.arange(k, n - k)
        zero = (x[i] > x[i - k]) & (x[i] > x[i + k])
        m[k - 1, i[zero]] = 0.0
    row_sums = m.sum(axis=1)
    lam = int(np.argmin(row_sums)) + 1 if K else 0
    return LmsMatrix(m, row_sums, lam)


def lms_peaks(x, r, causal=False):
    """Peak indices, lambda and row sums for random draws ``r`` (shape K x n)."""
    x = np.asarray(x, dtype=np.float64)
    if r.shape[0] == 0:
        return np.zeros(0, dtype=np.int64), 0, np.zeros(0)
    gamma, fail = _accel.lms_scan(x, r, causal)
    lam = int(np.argmin(gamma)) + 1
    return np.flatnonzero(fail > lam), lam, gamma


def detect_peaks_lms(x, rng, causal=False):
    """Indices of columns that are zero at every scale up to lambda.

    ``causal=True`` compares right neighbours beyond the frame end with the
    last sample instead of excluding the column, so the second-to-last
    sample can be confirmed as soon as one later sample is known.
    """
    x = np.asarray(x, dtype=np.float64)
    r = rng.random((n_scales(x.shape[0]), x.shape[0]))
    return lms_peaks(x, r, causal)[0]


# ---------------------------------------------------------------------------
# detector
# ---------------------------------------------------------------------------


@dataclass
class System2Result:
    positions: np.ndarray
    mean: float
    phase: int


@dataclass
class DetectorState:
    last_beat_index: int = None
    last_emitted: int = -1
    system2_pending: System2Result = None
    recent: deque = field(default_factory=deque)


def pulse_phase(window, period):
    """Best phase of a unit pulse train of ``period`` against ``window``.

    Returns ``(phase, positions, correlation)``; ties go to the smallest phase.
    """
    window = np.asarray(window, dtype=np.float64)
    n = window.shape[0]
    period = int(period)
    n_phase = min(period, n)
    pos = np.arange(n_phase)[:, None] + period * np.arange((n - 1) // period + 1)[None, :]
    vals = np.where(pos < n, window[np.minimum(pos, n - 1)], 0.0)
    cc = vals.sum(axis=1)
    phase = int(np.argmax(cc))
    return phase, pos[phase][pos[phase] < n], cc


class BeatDetector:
    def __init__(self, cfg=DetectorConfig()):
        self.cfg = cfg
        self.state = DetectorState()
        self.rng = np.random.default_rng(cfg.rng_seed)
        self._K = n_scales(cfg.frame_len)

    # -- System 1 --------------------------------------------------------

    def _causal_peak(self, buf):
        """Is the second-newest CBSS sample a multiscale peak of the frame?"""
        x = detrend(buf.recent(self.cfg.frame_len))
        j = x.shape[0] - 2
        # cheap exact rejection: a peak must beat its immediate neighbours
        if not (x[j] > x[j - 1] and x[j] > x[j + 1]):
            return False
        r = self.rng.random((self._K, x.shape[0]))
        gamma, fail = _accel.lms_scan(x, r, True)
        lam = int(np.argmin(gamma)) + 1
        return bool(fail[j] > lam)

    def system1_step(self, buf, bp):
        """Gate + peak test for the newest decidable sample; may return an event."""
        st = self.state
        p = buf.write_index - 2
        if p < 1:
            return None
        if st.last_beat_index is None:
            if self._causal_peak(buf):
                return BeatEvent(p, SOURCE_SYSTEM1, self.cfg.hop)
            return None
        elapsed = p - st.last_beat_index
        if bp - self.cfg.early_margin < elapsed < bp + self.cfg.late_margin:
            if self._causal_peak(buf):
                return BeatEvent(p, SOURCE_SYSTEM1, self.cfg.hop)
        elif elapsed >= bp + self.cfg.late_margin:
            return BeatEvent(p, SOURCE_FORCED, self.cfg.hop)
        return None

    # -- System 2 --------------------------------------------------------

    def system2_step(self, buf, bp):
        n = buf.write_index - 1
        L = self.cfg.frame_len
        window = buf.recent(L)
        phase, rel, _ = pulse_phase(window, bp)
        positions = n - (L - 1) + rel
        keep = positions >= 0
        positions = positions[keep]
        vals = window[rel[keep]]
        mean = float(vals.mean()) if vals.size else 0.0
        result = System2Result(positions, mean, phase)
        self.state.system2_pending = result
        return result

    # -- arbitration -----------------------------------------------------

    def arbitrate(self, event, buf, bp):
        """Compare System 1's recent beats with the pending System 2 grid.

        Returns the event to emit (possibly a correction, possibly None).
        """
        st = self.state
        pending = st.system2_pending
        st.system2_pending = None
        if pending is None or pending.positions.size == 0:
            return event
        lo = event.frame_index - self.cfg.frame_len + 1
        idx = [i for i in st.recent if i >= lo] + [event.frame_index]
        s1_mean = float(np.mean(buf.values_at(idx)))
        if not pending.mean > s1_mean:
            return event
        final = int(pending.positions[-1])
        p = event.frame_index
        grid = final + bp * int(np.round((p - final) / bp))
        if abs(grid - p) <= self.cfg.phase_agreement:
            # both systems sit on the same beat: nothing to correct
            return event
        if grid > p + 1:
            # next grid beat still ahead: re-anchor and let System 1 find it
            st.last_beat_index = grid - bp
            return None
        if grid > st.last_emitted:
            return BeatEvent(grid, SOURCE_CORRECTION, self.cfg.hop)
        st.last_beat_index = grid
        return None

    # -- per-sample driver -----------------------------------------------

    def step(self, buf, bp):
        """Advance by the CBSS sample just appended to ``buf``."""
        if bp is None or bp < 2:
            return None
        st = self.state
        n = buf.write_index - 1
        if st.last_beat_index is not None and n - st.last_beat_index == bp // 2:
            self.system2_step(buf, bp)
        event = self.system1_step(buf, bp)
        if event is None:
            return None
        if st.last_beat_index is not None:
            event = self.arbitrate(event, buf, bp)
        if event is None:
            return None
        st.last_beat_index = event.frame_index
        st.last_emitted = event.frame_index
        st.recent.append(event.frame_index)
        while st.recent and st.recent[0] < event.frame_index - self.cfg.frame_len:
            st.recent.popleft()
        return event
