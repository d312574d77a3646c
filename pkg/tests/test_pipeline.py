import io

import numpy as np
import pytest

from obtain.audio import encode_wav, write_wav
from obtain.beat_detect import DetectorConfig
from obtain.errors import InputError, ParameterError
from obtain.pipeline import (
    LatencyTracker,
    Pipeline,
    PipelineConfig,
    pcm16_chunks,
    run_file,
    run_stream,
    track,
)
from obtain.synth import beat_grid, click_track
from obtain.tempo import TempoConfig


@pytest.fixture(scope="module")
def click120():
    return click_track(120, 30.0)


def test_config_derives_rates():
    cfg = PipelineConfig()
    assert cfg.oss_rate == pytest.approx(344.53125)
    assert cfg.tempo.oss_rate == cfg.oss_rate
    assert cfg.hop_budget_sec == pytest.approx(128 / 44100)
    with pytest.raises(ParameterError):
        PipelineConfig(tempo=TempoConfig(oss_rate=100.0))
    with pytest.raises(ParameterError):
        PipelineConfig(detector=DetectorConfig(hop=64))


def test_hop_size_enforced():
    with pytest.raises(InputError):
        Pipeline().process_hop(np.zeros(100))


def test_silence_never_beats():
    events, pipe = track(np.zeros(44100 * 5))
    assert events == []
    assert pipe.hop_counter == 44100 * 5 // 128


def test_short_file_gives_no_events(tmp_path):
    path = tmp_path / "short.wav"
    write_wav(path, 0.5 * np.ones(900))
    events, _ = run_file(path)
    assert events == []


def test_click_track_intervals(click120):
    y, _ = click120
    events, pipe = track(y)
    t = np.array([e.time_sec for e in events])
    assert np.median(np.diff(t[t >= 5.0])) == pytest.approx(0.5, abs=0.03)
    # causality: each event is at or before the stream time when it fired
    assert t[-1] <= pipe.stream_time
    assert pipe.latency.n == pipe.hop_counter


def test_traces_are_aligned(click120):
    y, _ = click120
    pipe = Pipeline(traces=True)
    pipe.process(y[: 44100 * 5])
    tr = pipe.traces
    assert len(tr.oss) == len(tr.cbss) == pipe.oss.frame_index
    assert [r[0] for r in tr.oss] == list(range(len(tr.oss)))
    assert all(a[3] == b[2] for a, b in zip(tr.oss, tr.cbss))
    times = [u.time_sec for u in tr.tempo]
    assert times == sorted(times) and len(times) >= 2


def test_identical_runs_are_identical(click120):
    y, _ = click120
    a = [(e.frame_index, e.source) for e in track(y[: 44100 * 12])[0]]
    b = [(e.frame_index, e.source) for e in track(y[: 44100 * 12])[0]]
    assert a == b


def test_hop_feeding_matches_bulk(click120):
    y, _ = click120
    y = y[: 44100 * 8]
    bulk = [e.frame_index for e in track(y)[0]]
    pipe = Pipeline()
    step = [e.frame_index for i in range(0, len(y) - 127, 128)
            if (e := pipe.process_hop(y[i:i + 128])) is not None]
    assert bulk == step


def test_bounded_state(click120):
    y, _ = click120
    pipe = Pipeline()
    pipe.process(y[: 44100 * 4])
    sizes = (pipe.tempo._ring.size, pipe.cbss._ring.size)
    pipe.process(y[44100 * 4: 44100 * 20])
    assert (pipe.tempo._ring.size, pipe.cbss._ring.size) == sizes
    assert len(pipe.detector.state.recent) <= 512


def test_latency_tracker():
    lt = LatencyTracker(0.003)
    for dt in [0.001] * 98 + [0.002, 0.01]:
        lt.record(dt)
    assert lt.n == 100 and lt.overruns == 1
    assert lt.percentile(50) == pytest.approx(0.001, abs=2e-6)
    assert lt.percentile(99) == pytest.approx(0.002, abs=2e-6)
    s = lt.summary()
    assert s["max_ms"] == pytest.approx(10.0)


def _pcm(y):
    return np.clip(np.round(np.asarray(y) * 32768), -32768, 32767).astype("<i2").tobytes()


def test_pcm16_chunks_handle_odd_boundaries():
    y = np.linspace(-0.5, 0.5, 1001)
    stereo = np.repeat(y[:, None], 2, axis=1)
    raw = _pcm(stereo.ravel())
    out = np.concatenate(list(pcm16_chunks(io.BytesIO(raw), channels=2, chunk_bytes=333)))
    np.testing.assert_allclose(out, y, atol=1 / 32768)


def test_run_stream_matches_offline(click120):
    y, _ = click120
    y = y[: 44100 * 10]
    q = np.frombuffer(_pcm(y), "<i2") / 32768.0
    offline = [e.frame_index for e in track(q)[0]]
    got = []
    status = run_stream(pcm16_chunks(io.BytesIO(_pcm(y)), chunk_bytes=1000), got.append)
    assert status == 0
    assert [e.frame_index for e in got] == offline


def test_run_stream_is_live(click120):
    y, _ = click120
    data = _pcm(y[: 44100 * 8])
    fed = []
    seen_at = []

    def source():
        for i in range(0, len(data), 4096):
            fed.append(i)
            yield np.frombuffer(data[i:i + 4096], "<i2") / 32768.0

    def sink(ev):
        seen_at.append(len(fed))

    assert run_stream(source(), sink, queue_size=2) == 0
    assert seen_at and seen_at[0] < len(fed)


def test_run_stream_sink_failure():
    y, _ = click_track(120, 6.0)

    def sink(ev):
        raise BrokenPipeError

    assert run_stream([y], sink) == 1


def test_run_stream_source_failure():
    def source():
        yield np.zeros(1000)
        raise OSError("device gone")

    assert run_stream(source(), lambda ev: None) == 1


def test_run_stream_partial_tail():
    assert run_stream([np.zeros(1000), np.zeros(77)], lambda ev: None) == 0
    pipe = run_stream.last_pipeline
    assert pipe.samples_seen == 1024


def test_beat_grid_segments():
    g = beat_grid([(120, 2.0), (60, 3.0)])
    np.testing.assert_allclose(g, [0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0])


def test_wav_file_round_trip(tmp_path, click120):
    y, _ = click120
    path = tmp_path / "c.wav"
    path.write_bytes(encode_wav(y[: 44100 * 6]))
    events, _ = run_file(path)
    assert len(events) >= 5
