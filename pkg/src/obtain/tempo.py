"""Causal tempo estimation.

Each update takes the most recent ``buffer_len`` onset-strength samples,
finds candidate beat periods from the harmonically enhanced
autocorrelation, scores them against ideal pulse trains and feeds the
winner into a decaying tempo accumulator. The adopted tempo is then
filtered by a 7 s history: small drifts are followed, octave jumps are
suppressed and genuine changes are only accepted once they persist.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .audio import SAMPLE_RATE
from .errors import ParameterError

OSS_RATE = SAMPLE_RATE / 128.0


@dataclass(frozen=True)
class TempoConfig:
    buffer_len: int = 1024
    buffer_hop: int = 128
    min_bpm: float = 50.0
    max_bpm: float = 210.0
    n_candidates: int = 10
    history_sec: float = 7.0
    change_threshold_bpm: float = 5.0
    change_delay_sec: float = 1.0
    accumulator_kernel_bpm: float = 5.0
    accumulator_halflife_sec: float = 0.5
    harmonic_tolerance: float = 0.05
    n_pulses: int = 4
    remove_mean: bool = False
    eacf_weight: float = 1.0
    oss_rate: float = OSS_RATE

    def __post_init__(self):
        if not 0 < self.min_bpm < self.max_bpm:
            raise ParameterError("need 0 < min_bpm < max_bpm")
        if self.n_candidates < 1:
            raise ParameterError("n_candidates must be >= 1")
        if not 0 < self.buffer_hop <= self.buffer_len:
            raise ParameterError("need 0 < buffer_hop <= buffer_len")
        if self.accumulator_halflife_sec <= 0:
            raise ParameterError("accumulator_halflife_sec must be > 0")

    def bpm_to_period(self, bpm):
        return max(1, int(round(60.0 * self.oss_rate / bpm)))

    def period_to_bpm(self, period):
        return 60.0 * self.oss_rate / period


def lag_bounds(cfg=TempoConfig()):
    """Inclusive range of candidate lags (in OSS samples) for the tempo limits."""
    lo = int(round(60.0 * cfg.oss_rate / cfg.max_bpm))
    hi = int(round(60.0 * cfg.oss_rate / cfg.min_bpm))
    return lo, hi


def autocorrelation(buf):
    """Mean-removed autocorrelation for lags [0, len/2), normalized by lag 0."""
    x = np.asarray(buf, dtype=np.float64)
    x = x - x.mean()
    n = x.shape[0]
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    X = np.fft.rfft(x, nfft)
    acf = np.fft.irfft(X * np.conj(X), nfft)[: n // 2]
    if acf.size == 0 or acf[0] <= 1e-12 * max(1.0, float(np.dot(x, x))) or acf[0] <= 0:
        return np.zeros(n // 2)
    return acf / acf[0]


def enhance_harmonics(acf):
    """acf[l] + acf[2l] + acf[4l]; out-of-range lags contribute zero."""
    acf = np.asarray(acf, dtype=np.float64)
    n = acf.shape[0]
    out = acf.copy()
    for stretch in (2, 4):
        m = (n - 1) // stretch + 1
        out[:m] += acf[::stretch][:m]
    return out


def pick_candidates(eacf, cfg=TempoConfig()):
    """Up to ``n_candidates`` local-maximum lags inside the tempo limits,
    strongest first."""
    eacf = np.asarray(eacf, dtype=np.float64)
    lo, hi = lag_bounds(cfg)
    lo = max(lo, 1)
    hi = min(hi, eacf.shape[0] - 2)
    if hi < lo:
        return []
    lags = np.arange(lo, hi + 1)
    mid = eacf[lags]
    is_peak = (mid > eacf[lags - 1]) & (mid >= eacf[lags + 1])
    peaks = lags[is_peak]
    order = np.lexsort((peaks, -eacf[peaks]))
    return [int(p) for p in peaks[order][: cfg.n_candidates]]


def _zscore(v):
    sd = v.std()
    if sd <= 0:
        return np.zeros_like(v)
    return (v - v.mean()) / sd


def score_candidates(buf, candidates, eacf=None, cfg=TempoConfig()):
    """Pick the candidate period whose pulse train best matches ``buf``.

    Returns ``(bpm, period)``. With ``cfg.n_pulses == 0`` the pulse train
    spans the whole buffer, and with ``cfg.remove_mean`` the buffer mean is
    subtracted first. The score is the sum of the z-normalized maximum and
    variance of the cross-correlation over all phases, plus
    ``cfg.eacf_weight`` times the z-normalized enhanced autocorrelation at
    each lag. Ties go to the larger enhanced-autocorrelation value, then
    the shorter period.
    """
    if not candidates:
        raise ParameterError("no tempo candidates to score")
    periods = np.asarray(candidates, dtype=np.int64)
    buf = np.asarray(buf, dtype=np.float64)
    if cfg.remove_mean:
        buf = buf - buf.mean()
    cc_max, cc_var = _accel.pulse_stats(buf, periods, cfg.n_pulses)
    strength = np.zeros(len(periods)) if eacf is None else np.asarray(eacf)[periods]
    score = _zscore(cc_max) + _zscore(cc_var) + cfg.eacf_weight * _zscore(strength)
    # round so tiny float noise cannot defeat the tie-break
    order = np.lexsort((periods, -strength, -np.round(score, 12)))
    best = int(periods[order[0]])
    return cfg.period_to_bpm(best), best


@dataclass
class TempoState:
    grid: np.ndarray
    accumulator: np.ndarray
    history: deque = field(default_factory=deque)
    current_bpm: float = None
    current_period: int = None
    pending_change: tuple = None
    last_update: float = None

    @classmethod
    def create(cls, cfg=TempoConfig()):
        grid = np.arange(int(np.ceil(cfg.min_bpm)), int(np.floor(cfg.max_bpm)) + 1, dtype=np.float64)
        return cls(grid=grid, accumulator=np.zeros_like(grid))

    def history_mean(self):
        return float(np.mean([b for _, b in self.history])) if self.history else None


def _is_harmonic(a, b, tol):
    ratio = a / b
    return any(abs(ratio - h) <= tol * h for h in (2.0, 3.0, 0.5, 1.0 / 3.0))


def accumulate_and_decide(instant_bpm, state, cfg, now_sec):
    """Fold one instantaneous tempo into ``state``; return (bpm, period)."""
    if state.last_update is not None:
        dt = max(now_sec - state.last_update, 0.0)
        state.accumulator *= 0.5 ** (dt / cfg.accumulator_halflife_sec)
    state.last_update = now_sec
    sigma = cfg.accumulator_kernel_bpm
    state.accumulator += np.exp(-0.5 * ((state.grid - instant_bpm) / sigma) ** 2)
    accumulated = float(state.grid[int(np.argmax(state.accumulator))])

    thr = cfg.change_threshold_bpm
    if now_sec < cfg.history_sec or not state.history:
        adopted = accumulated
        state.pending_change = None
    else:
        mean = state.history_mean()
        cur = state.current_bpm
        if abs(accumulated - mean) <= thr or (cur is not None and abs(accumulated - cur) <= thr):
            adopted = accumulated
            state.pending_change = None
        elif _is_harmonic(accumulated, mean, cfg.harmonic_tolerance):
            adopted = mean
            state.pending_change = None
        else:
            pend = state.pending_change
            if pend is None or abs(pend[0] - accumulated) > thr:
                state.pending_change = pend = (accumulated, now_sec)
            if now_sec - pend[1] >= cfg.change_delay_sec - 1e-9:
                adopted = accumulated
                state.pending_change = None
            else:
                adopted = cur if cur is not None else accumulated

    adopted = float(min(max(adopted, cfg.min_bpm), cfg.max_bpm))
    state.current_bpm = adopted
    state.current_period = cfg.bpm_to_period(adopted)
    state.history.append((now_sec, adopted))
    while state.history and state.history[0][0] <= now_sec - cfg.history_sec:
        state.history.popleft()
    return adopted, state.current_period


@dataclass
class TempoUpdate:
    time_sec: float
    instant_bpm: float
    accumulated_bpm: float
    adopted_bpm: float
    period: int


class TempoEstimator:
    """Streaming tempo tracker fed one onset-strength value per hop."""

    def __init__(self, cfg=TempoConfig()):
        self.cfg = cfg
        self.state = TempoState.create(cfg)
        n = cfg.buffer_len
        # doubled ring: the latest n values are always contiguous
        self._ring = np.zeros(2 * n)
        self._pos = 0
        self.count = 0

    @property
    def period(self):
        return self.state.current_period

    @property
    def bpm(self):
        return self.state.current_bpm

    def buffer(self):
        n = self.cfg.buffer_len
        return self._ring[self._pos:self._pos + n]

    def push(self, value, now_sec):
        n = self.cfg.buffer_len
        self._ring[self._pos] = value
        self._ring[self._pos + n] = value
        self._pos = (self._pos + 1) % n
        self.count += 1
        if self.count < n or (self.count - n) % self.cfg.buffer_hop:
            return None
        return self.update(now_sec)

    def update(self, now_sec):
        buf = self.buffer()
        eacf = enhance_harmonics(autocorrelation(buf))
        cands = pick_candidates(eacf, self.cfg)
        if not cands:
            return None
        instant, _ = score_candidates(buf, cands, eacf, self.cfg)
        adopted, period = accumulate_and_decide(instant, self.state, self.cfg, now_sec)
        acc = float(self.state.grid[int(np.argmax(self.state.accumulator))])
        return TempoUpdate(now_sec, instant, acc, adopted, period)
