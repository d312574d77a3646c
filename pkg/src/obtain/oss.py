"""Onset strength signal: windowed FFT, normalization, noise gate,
log compression, rectified spectral flux and Hamming smoothing."""

from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .audio import SAMPLE_RATE, FrameConfig
from .errors import InputError, ParameterError


@dataclass(frozen=True)
class CompressionConfig:
    gamma: float = 100.0
    noise_floor_db: float = 74.0
    ref_span_frames: int = 344

    def __post_init__(self):
        if self.gamma <= 0:
            raise ParameterError("gamma must be > 0")
        if self.noise_floor_db <= 0:
            raise ParameterError("noise_floor_db must be > 0")
        if self.ref_span_frames < 1:
            raise ParameterError("ref_span_frames must be >= 1")

    @property
    def gate_threshold(self):
        """Normalized magnitude below which bins are zeroed."""
        return 10.0 ** (-self.noise_floor_db / 20.0)


def hamming_taps(length=15):
    """Hamming window scaled to unit sum."""
    h = np.hamming(length)
    return h / h.sum()


@dataclass(frozen=True)
class SmootherConfig:
    length: int = 15
    taps: np.ndarray = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.length < 1:
            raise ParameterError("smoother length must be >= 1")
        if self.taps is None:
            object.__setattr__(self, "taps", hamming_taps(self.length))


@dataclass
class SpectralFrame:
    magnitudes: np.ndarray


@dataclass
class OssSample:
    value: float
    frame_index: int
    flux: float = 0.0
    hop: int = 128

    @property
    def time_sec(self):
        return self.frame_index * self.hop / SAMPLE_RATE


_WINDOWS = {}


def _analysis_window(n):
    w = _WINDOWS.get(n)
    if w is None:
        w = _WINDOWS[n] = np.hamming(n)
    return w


def magnitude_spectrum(frame):
    """One-sided magnitude spectrum of a Hamming-windowed frame (n/2 + 1 bins)."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 1:
        raise InputError("frame must be one-dimensional")
    if not np.all(np.isfinite(frame)):
        raise InputError("frame contains non-finite samples")
    return SpectralFrame(np.abs(np.fft.rfft(frame * _analysis_window(frame.shape[0]))))


@dataclass
class NormalizerState:
    reference: float = 0.0
    frames_seen: int = 0

    def update(self, magnitudes, cfg):
        if self.frames_seen < cfg.ref_span_frames:
            m = float(np.max(magnitudes)) if magnitudes.size else 0.0
            if m > self.reference:
                self.reference = m
            self.frames_seen += 1
        return self.reference


def normalize_and_gate(spec, state, cfg=CompressionConfig()):
    """Divide by the (frozen after ``ref_span_frames``) running maximum and
    zero every bin more than ``noise_floor_db`` below it."""
    mag = spec.magnitudes if isinstance(spec, SpectralFrame) else np.asarray(spec)
    ref = state.update(mag, cfg)
    if ref <= 0.0:
        return SpectralFrame(np.zeros_like(mag, dtype=np.float64))
    y = mag / ref
    y[y < cfg.gate_threshold] = 0.0
    return SpectralFrame(y)


def log_compress(spec, cfg=CompressionConfig()):
    """x -> log(1 + gamma*x) / log(1 + gamma), with x clamped to [0, 1] first."""
    x = spec.magnitudes if isinstance(spec, SpectralFrame) else np.asarray(spec, dtype=np.float64)
    x = np.clip(x, 0.0, 1.0)
    return SpectralFrame(np.log1p(cfg.gamma * x) / np.log1p(cfg.gamma))


def flux(prev, curr):
    """Half-wave rectified spectral difference summed over bins."""
    p = prev.magnitudes if isinstance(prev, SpectralFrame) else np.asarray(prev, dtype=np.float64)
    c = curr.magnitudes if isinstance(curr, SpectralFrame) else np.asarray(curr, dtype=np.float64)
    if p.shape != c.shape:
        raise InputError(f"spectrum length mismatch: {p.shape} vs {c.shape}")
    return float(np.maximum(c - p, 0.0).sum())


class Smoother:
    """Causal FIR over the flux stream; the prefix is zero-padded."""

    def __init__(self, cfg=SmootherConfig()):
        self.taps = np.asarray(cfg.taps, dtype=np.float64)
        # newest value last; reversed taps so a dot product gives sum h[j] * f[n-j]
        self._rtaps = self.taps[::-1].copy()
        self._buf = np.zeros(len(self.taps))

    def push(self, value):
        buf = self._buf
        buf[:-1] = buf[1:]
        buf[-1] = value
        return float(buf @ self._rtaps)


def smooth(flux_stream, cfg=SmootherConfig(), hop=128):
    sm = Smoother(cfg)
    return [
        OssSample(max(sm.push(f), 0.0), i, float(f), hop) for i, f in enumerate(flux_stream)
    ]


class OssExtractor:
    """Streaming frame -> onset strength chain; one instance per audio stream."""

    def __init__(self, frame_cfg=FrameConfig(), comp_cfg=CompressionConfig(),
                 smooth_cfg=SmootherConfig()):
        self.frame_cfg = frame_cfg
        self.comp_cfg = comp_cfg
        self.norm = NormalizerState()
        self.smoother = Smoother(smooth_cfg)
        n_bins = frame_cfg.window_len // 2 + 1
        self._prev = np.zeros(n_bins)
        self._curr = np.zeros(n_bins)
        self._window = _analysis_window(frame_cfg.window_len)
        self._threshold = comp_cfg.gate_threshold
        self.frame_index = 0

    def push(self, frame):
        if not np.all(np.isfinite(frame)):
            raise InputError("frame contains non-finite samples")
        mag = np.abs(np.fft.rfft(frame * self._window))
        ref = self.norm.update(mag, self.comp_cfg)
        f = _accel.compress_flux(
            mag, ref, self._threshold, self.comp_cfg.gamma, self._prev, self._curr
        )
        self._prev, self._curr = self._curr, self._prev
        value = self.smoother.push(f)
        sample = OssSample(value if value > 0.0 else 0.0, self.frame_index, f,
                           self.frame_cfg.hop)
        self.frame_index += 1
        return sample


def oss_from_frames(frames, frame_cfg=FrameConfig(), comp_cfg=CompressionConfig(),
                    smooth_cfg=SmootherConfig()):
    ex = OssExtractor(frame_cfg, comp_cfg, smooth_cfg)
    return [ex.push(fr) for fr in frames]
