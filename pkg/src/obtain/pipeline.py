"""Per-hop orchestration: audio hop -> OSS -> tempo -> CBSS -> beat detector."""

import logging
import queue
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .audio import SAMPLE_RATE, FrameConfig, StreamResampler, decode_pcm16, read_wav
from .beat_detect import BeatDetector, BeatEvent, DetectorConfig
from .cbss import CbssBuffer, CbssConfig, cbss_update
from .errors import InputError, ParameterError
from .metrics import EvalConfig
from .oss import CompressionConfig, OssExtractor, SmootherConfig
from .tempo import TempoConfig, TempoEstimator

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    frame: FrameConfig = field(default_factory=FrameConfig)
    compression: CompressionConfig = field(default_factory=CompressionConfig)
    smoother: SmootherConfig = field(default_factory=SmootherConfig)
    tempo: TempoConfig = None
    cbss: CbssConfig = field(default_factory=CbssConfig)
    detector: DetectorConfig = None
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        # hop-derived rates are computed once here and shared downstream
        rate = SAMPLE_RATE / self.frame.hop
        if self.tempo is None:
            object.__setattr__(self, "tempo", TempoConfig(oss_rate=rate))
        elif abs(self.tempo.oss_rate - rate) > 1e-9:
            raise ParameterError("tempo.oss_rate must equal sample_rate / hop")
        if self.detector is None:
            object.__setattr__(self, "detector", DetectorConfig(hop=self.frame.hop))
        elif self.detector.hop != self.frame.hop:
            raise ParameterError("detector.hop must equal frame.hop")

    @property
    def oss_rate(self):
        return SAMPLE_RATE / self.frame.hop

    @property
    def hop_budget_sec(self):
        return self.frame.hop / SAMPLE_RATE


class LatencyTracker:
    """Fixed-size histogram of per-hop wall times (1 us bins up to 50 ms)."""

    BIN = 1e-6
    NBINS = 50_000

    def __init__(self, budget_sec):
        self.budget = budget_sec
        self.counts = np.zeros(self.NBINS + 1, dtype=np.int64)
        self.n = 0
        self.total = 0.0
        self.overruns = 0
        self.worst = 0.0

    def record(self, dt):
        self.counts[min(int(dt / self.BIN), self.NBINS)] += 1
        self.n += 1
        self.total += dt
        if dt > self.worst:
            self.worst = dt
        if dt > self.budget:
            self.overruns += 1

    def percentile(self, q):
        if self.n == 0:
            return 0.0
        cum = np.cumsum(self.counts)
        idx = int(np.searchsorted(cum, q / 100.0 * self.n))
        return (idx + 1) * self.BIN

    def summary(self):
        return {
            "hops": self.n,
            "total_sec": self.total,
            "mean_ms": 1e3 * self.total / self.n if self.n else 0.0,
            "p99_ms": 1e3 * self.percentile(99),
            "max_ms": 1e3 * self.worst,
            "overruns": self.overruns,
        }


@dataclass
class Traces:
    oss: list = field(default_factory=list)     # (frame_index, time, flux, oss)
    cbss: list = field(default_factory=list)    # (frame_index, time, oss, cbss)
    tempo: list = field(default_factory=list)   # TempoUpdate


class Pipeline:
    """Causal beat tracker; feed it ``hop`` samples at a time."""

    def __init__(self, cfg=PipelineConfig(), traces=False):
        # compile (or load cached) kernels now so the first hops stay in budget
        _accel.warmup()
        self.cfg = cfg
        self.hop = cfg.frame.hop
        self.win = cfg.frame.window_len
        self._frame = np.zeros(self.win)
        self.samples_seen = 0
        self.hop_counter = 0
        self.oss = OssExtractor(cfg.frame, cfg.compression, cfg.smoother)
        self.tempo = TempoEstimator(cfg.tempo)
        self.cbss = CbssBuffer.for_tempo_range(cfg.tempo.min_bpm, cfg.oss_rate,
                                               cfg.detector.frame_len)
        self.detector = BeatDetector(cfg.detector)
        self.latency = LatencyTracker(cfg.hop_budget_sec)
        self.traces = Traces() if traces else None

    @property
    def stream_time(self):
        return self.samples_seen / SAMPLE_RATE

    def process_hop(self, samples):
        """Consume exactly one hop of samples; return a BeatEvent or None."""
        t0 = time.perf_counter()
        samples = np.asarray(samples, dtype=np.float64)
        if samples.shape != (self.hop,):
            raise InputError(f"expected {self.hop} samples, got {samples.shape}")
        fr = self._frame
        fr[:-self.hop] = fr[self.hop:]
        fr[-self.hop:] = samples
        self.samples_seen += self.hop
        self.hop_counter += 1
        event = None
        if self.samples_seen >= self.win:
            event = self._advance(fr)
        dt = time.perf_counter() - t0
        self.latency.record(dt)
        if dt > self.latency.budget:
            log.debug("hop %d over budget: %.3f ms", self.hop_counter, dt * 1e3)
        return event

    def _advance(self, frame):
        s = self.oss.push(frame)
        t = s.time_sec
        upd = self.tempo.push(s.value, t)
        period = self.tempo.period
        c = cbss_update(s.value, self.cbss, self.cfg.cbss, period)
        event = self.detector.step(self.cbss, period)
        if self.traces is not None:
            self.traces.oss.append((s.frame_index, t, s.flux, s.value))
            self.traces.cbss.append((s.frame_index, t, s.value, c))
            if upd is not None:
                self.traces.tempo.append(upd)
        return event

    def process(self, samples):
        """Feed an arbitrary-length array; the trailing partial hop is dropped."""
        samples = np.asarray(samples, dtype=np.float64)
        events = []
        for i in range(0, samples.shape[0] - self.hop + 1, self.hop):
            ev = self.process_hop(samples[i:i + self.hop])
            if ev is not None:
                events.append(ev)
        return events


def track(samples, cfg=PipelineConfig(), traces=False):
    """Run the tracker over an in-memory 44100 Hz mono signal."""
    pipe = Pipeline(cfg, traces=traces)
    events = pipe.process(samples)
    return events, pipe


def run_file(path, cfg=PipelineConfig(), traces=False):
    """Decode ``path`` and track it. Returns ``(events, pipeline)``."""
    stream = read_wav(path)
    t0 = time.perf_counter()
    events, pipe = track(stream.samples, cfg, traces)
    log.info("tracked %.1f s of audio in %.3f s", stream.duration, time.perf_counter() - t0)
    return events, pipe


_EOF = object()


def run_stream(source, sink, cfg=PipelineConfig(), queue_size=64):
    """Track a live stream.

    ``source`` is an iterable of float sample arrays (any chunk size) in
    arrival order; it is drained by a reader thread into a bounded queue.
    ``sink`` is called with each :class:`BeatEvent` as soon as it fires.
    Returns 0 on clean end of stream, 1 if the sink or source failed.
    """
    q = queue.Queue(maxsize=queue_size)
    failure = []

    def reader():
        try:
            for chunk in source:
                q.put(np.asarray(chunk, dtype=np.float64))
        except Exception as exc:  # surfaced as exit status
            failure.append(exc)
        finally:
            q.put(_EOF)

    th = threading.Thread(target=reader, daemon=True)
    th.start()
    pipe = Pipeline(cfg)
    pending = np.zeros(0)
    status = 0
    while True:
        chunk = q.get()
        if chunk is _EOF:
            break
        pending = np.concatenate([pending, chunk]) if pending.size else chunk
        n_full = pending.shape[0] // pipe.hop * pipe.hop
        try:
            for i in range(0, n_full, pipe.hop):
                ev = pipe.process_hop(pending[i:i + pipe.hop])
                if ev is not None:
                    sink(ev)
        except (BrokenPipeError, OSError) as exc:
            log.error("event sink failed: %s", exc)
            status = 1
            break
        pending = pending[n_full:]
    if failure:
        log.error("source failed: %s", failure[0])
        status = 1
    run_stream.last_pipeline = pipe
    return status


def pcm16_chunks(fh, channels=1, chunk_bytes=4096, sample_rate=SAMPLE_RATE):
    """Yield 44100 Hz float mono chunks from a binary file of interleaved
    s16le PCM at ``sample_rate``."""
    frame = 2 * channels
    resampler = StreamResampler(sample_rate)
    carry = b""
    while True:
        data = fh.read(chunk_bytes)
        if not data:
            break
        data = carry + data
        usable = len(data) - len(data) % frame
        carry = data[usable:]
        if usable:
            raw = decode_pcm16(data[:usable], sample_rate, channels, resample=False).samples
            out = resampler.push(raw)
            if out.size:
                yield out


__all__ = [
    "BeatEvent",
    "LatencyTracker",
    "Pipeline",
    "PipelineConfig",
    "Traces",
    "pcm16_chunks",
    "run_file",
    "run_stream",
    "track",
]
