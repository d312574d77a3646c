import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obtain import _accel
from obtain.errors import ParameterError
from obtain.oss import hamming_taps
from obtain.tempo import (
    OSS_RATE,
    TempoConfig,
    TempoEstimator,
    TempoState,
    accumulate_and_decide,
    autocorrelation,
    enhance_harmonics,
    lag_bounds,
    pick_candidates,
    score_candidates,
)

from oracles import acf_direct, pulse_corr


def impulse_train(period, n=1024, phase=0, height=1.0):
    x = np.zeros(n)
    x[phase::period] = height
    return x


def test_oss_rate():
    assert OSS_RATE == pytest.approx(344.53125)


def test_lag_bounds_default():
    # 60 * 344.53 / 210 = 98.4 and 60 * 344.53 / 50 = 413.4
    assert lag_bounds() == (98, 413)


def test_config_validation():
    for kw in ({"min_bpm": 200, "max_bpm": 100}, {"n_candidates": 0},
               {"buffer_hop": 2000}, {"accumulator_halflife_sec": 0}):
        with pytest.raises(ParameterError):
            TempoConfig(**kw)


def test_constant_buffer_acf_is_zero():
    assert not autocorrelation(np.full(1024, 3.0)).any()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(8, 96))
def test_acf_matches_direct_sum(seed, n):
    x = np.random.default_rng(seed).random(n)
    np.testing.assert_allclose(autocorrelation(x), acf_direct(list(x)), atol=1e-10)
    assert autocorrelation(x)[0] == pytest.approx(1.0)


def test_impulse_train_acf_maxima():
    acf = autocorrelation(impulse_train(100))
    for lag in (100, 200, 300, 400):
        assert acf[lag] > acf[lag - 1] and acf[lag] > acf[lag + 1]


def test_eacf_index_arithmetic():
    acf = np.zeros(512)
    acf[100] = 1.0
    e = enhance_harmonics(acf)
    assert e[100] == e[50] == e[25] == 1.0
    assert e.sum() == 3.0
    assert not enhance_harmonics(np.zeros(512)).any()


@given(st.lists(st.floats(0, 1), min_size=4, max_size=100))
def test_eacf_dominates_nonnegative_acf(values):
    acf = np.asarray(values)
    assert np.all(enhance_harmonics(acf) >= acf)


def test_candidates_empty_and_bounded():
    assert pick_candidates(np.zeros(512)) == []
    rng = np.random.default_rng(0)
    cands = pick_candidates(rng.random(512))
    lo, hi = lag_bounds()
    assert 1 <= len(cands) <= 10
    assert all(lo <= c <= hi for c in cands)


def test_120bpm_top_candidate():
    # 60 / 120 * 344.53 = 172.27
    e = enhance_harmonics(autocorrelation(_clicks_oss(120, 1024 / OSS_RATE)))
    assert abs(pick_candidates(e)[0] - 172) <= 1


def test_single_candidate_wins():
    bpm, period = score_candidates(np.random.default_rng(1).random(1024), [150])
    assert period == 150
    assert bpm == pytest.approx(60 * OSS_RATE / 150)


def test_period_beats_its_stretch():
    buf = impulse_train(120)
    _, period = score_candidates(buf, [156, 120], enhance_harmonics(autocorrelation(buf)))
    assert period == 120


def test_all_zero_buffer_tie_break():
    eacf = np.zeros(512)
    eacf[[110, 200, 300]] = [0.2, 0.9, 0.9]
    _, period = score_candidates(np.zeros(1024), [110, 300, 200], eacf)
    assert period == 200


def test_pulse_stats_against_oracle(backend):
    rng = np.random.default_rng(5)
    buf = rng.random(300)
    periods = np.array([7, 50, 113, 299])
    for n_pulses in (0, 1, 4):
        mx, var = backend.pulse_stats(buf, periods, n_pulses)
        for c, P in enumerate(periods):
            cc = [pulse_corr(list(buf), int(P), phi, n_pulses) for phi in range(P)]
            assert mx[c] == pytest.approx(max(cc))
            assert var[c] == pytest.approx(np.var(cc))


def _state(history_bpm, now=10.0, cfg=TempoConfig()):
    st_ = TempoState.create(cfg)
    for k in range(60):
        st_.history.append((now - 6.0 + 0.1 * k, history_bpm))
    st_.current_bpm = history_bpm
    st_.current_period = cfg.bpm_to_period(history_bpm)
    st_.last_update = now - 0.01
    return st_


def _feed(state, bpm, t0, t1, cfg=TempoConfig(), step=0.37):
    out = []
    t = t0
    while t <= t1 + 1e-9:
        # a dominant accumulator so the decision sees ``bpm`` directly
        state.accumulator[:] = 0.0
        out.append((t, accumulate_and_decide(bpm, state, cfg, t)[0]))
        t += step
    return out


@pytest.mark.parametrize("other", [60.0, 40.0])
def test_harmonic_is_suppressed(other):
    cfg = TempoConfig(min_bpm=30)
    st_ = _state(120.0, cfg=cfg)
    assert all(b == 120.0 for _, b in _feed(st_, other, 10.0, 14.0, cfg))


def test_double_is_suppressed():
    cfg = TempoConfig(max_bpm=300)
    st_ = _state(120.0, cfg=cfg)
    assert all(b == 120.0 for _, b in _feed(st_, 240.0, 10.0, 14.0, cfg))


def test_small_drift_is_followed():
    st_ = _state(120.0)
    assert _feed(st_, 123.0, 10.0, 10.0)[0][1] == 123.0


def test_persistent_change_is_adopted_after_delay():
    st_ = _state(120.0)
    trace = _feed(st_, 97.0, 10.0, 12.5)
    switched = [t for t, b in trace if b == 97.0]
    assert switched and 11.0 - 1e-9 <= switched[0] <= 11.0 + 0.37
    assert all(b == 120.0 for t, b in trace if t < 11.0 - 1e-9)


def test_first_seconds_follow_accumulator():
    cfg = TempoConfig()
    st_ = TempoState.create(cfg)
    assert accumulate_and_decide(88.0, st_, cfg, 3.0)[0] == 88.0
    assert st_.current_period == round(60 * OSS_RATE / 88)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(20.0, 400.0), min_size=1, max_size=60))
def test_tempo_state_invariants(instants):
    cfg = TempoConfig()
    st_ = TempoState.create(cfg)
    for k, b in enumerate(instants):
        bpm, period = accumulate_and_decide(b, st_, cfg, 0.4 * k)
        assert cfg.min_bpm <= bpm <= cfg.max_bpm
        assert period >= 1
        times = [t for t, _ in st_.history]
        assert all(a < b for a, b in zip(times, times[1:]))
        assert times[-1] - times[0] <= cfg.history_sec


def _clicks_oss(bpm, seconds):
    """Impulses on the beat grid, shaped by the OSS smoother."""
    period = 60 * OSS_RATE / bpm
    n = int(seconds * OSS_RATE)
    x = np.zeros(n)
    k = np.round(np.arange(0, n, period)).astype(int)
    x[k[k < n]] = 1.0
    return np.convolve(x, hamming_taps(15))[:n]


@pytest.mark.parametrize("bpm", [60, 90, 120, 150, 180])
def test_estimator_converges_on_impulse_oss(bpm):
    est = TempoEstimator()
    x = _clicks_oss(bpm, 10)
    ups = [u for i, v in enumerate(x) if (u := est.push(v, (i + 1) / OSS_RATE))]
    assert ups
    late = [u.adopted_bpm for u in ups if u.time_sec >= 6]
    assert all(abs(b - bpm) <= 2 for b in late)


def test_estimator_update_cadence_and_determinism():
    x = _clicks_oss(100, 8) + 0.01 * np.random.default_rng(2).random(int(8 * OSS_RATE))
    runs = []
    for _ in range(2):
        est = TempoEstimator()
        runs.append([(i, u.instant_bpm, u.adopted_bpm) for i, v in enumerate(x)
                     if (u := est.push(v, (i + 1) / OSS_RATE))])
    assert runs[0] == runs[1]
    idx = [i for i, _, _ in runs[0]]
    assert idx[0] == 1023
    assert set(np.diff(idx)) == {128}


def test_estimator_is_causal():
    a = _clicks_oss(120, 6)
    b = a.copy()
    b[1500:] = np.random.default_rng(3).random(b.size - 1500)
    ea, eb = TempoEstimator(), TempoEstimator()
    for i in range(1500):
        ua = ea.push(a[i], i / OSS_RATE)
        ub = eb.push(b[i], i / OSS_RATE)
        assert (ua is None) == (ub is None)
        if ua:
            assert ua.adopted_bpm == ub.adopted_bpm


def test_kernel_backends_agree_on_pulse_stats():
    if not _accel.HAVE_NUMBA:
        pytest.skip("numba not available")
    buf = np.random.default_rng(9).random(1024)
    periods = np.arange(98, 414, 7)
    a = _accel.pulse_stats_numpy(buf, periods, 4)
    b = _accel.pulse_stats_numba(buf, periods, 4)
    np.testing.assert_allclose(a[0], b[0], rtol=1e-12)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-9)
