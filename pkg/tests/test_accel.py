import importlib.util
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obtain import _accel

needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not available")


def test_backend_flag_selects_numpy():
    env = dict(os.environ, OBTAIN_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", "import obtain; print(obtain.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


@pytest.mark.parametrize("value", ["", "0", "false"])
def test_backend_flag_off_values(value):
    env = dict(os.environ, OBTAIN_DISABLE_NUMBA=value)
    out = subprocess.run([sys.executable, "-c", "import obtain; print(obtain.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    installed = importlib.util.find_spec("numba") is not None
    assert out.stdout.strip() == ("numba" if installed else "numpy")


@needs_numba
@settings(max_examples=100, deadline=None)
@given(st.integers(2, 80), st.integers(0, 2 ** 31 - 1), st.booleans())
def test_lms_scan_backends_agree(n, seed, causal):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 4, n).astype(float) if seed % 2 else rng.normal(size=n)
    r = rng.random((max((n + 1) // 2 - 1, 0), n))
    g1, f1 = _accel.lms_scan_numpy(x, r, causal)
    g2, f2 = _accel.lms_scan_numba(x, r, causal)
    np.testing.assert_allclose(g1, g2, rtol=1e-12)
    np.testing.assert_array_equal(f1, f2)


@needs_numba
@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(1e-6, 10.0), st.floats(0.5, 1000.0))
def test_compress_flux_backends_agree(seed, ref, gamma):
    rng = np.random.default_rng(seed)
    mag = rng.random(65) * ref * rng.choice([1e-6, 1e-2, 1.0, 2.0], 65)
    prev = rng.random(65)
    o1, o2 = np.empty(65), np.empty(65)
    f1 = _accel.compress_flux_numpy(mag, ref, 2e-4, gamma, prev, o1)
    f2 = _accel.compress_flux_numba(mag, ref, 2e-4, gamma, prev, o2)
    np.testing.assert_allclose(o1, o2, rtol=1e-12, atol=1e-15)
    assert f1 == pytest.approx(f2, rel=1e-12, abs=1e-15)


def test_compress_flux_zero_reference(backend):
    out = np.ones(8)
    assert backend.compress_flux(np.ones(8), 0.0, 1e-4, 100.0, np.zeros(8), out) == 0.0
    assert not out.any()


@needs_numba
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(0, 6))
def test_pulse_stats_backends_agree(seed, n_pulses):
    rng = np.random.default_rng(seed)
    buf = rng.random(int(rng.integers(20, 400)))
    periods = np.unique(rng.integers(1, buf.size, 8))
    a = _accel.pulse_stats_numpy(buf, periods, n_pulses)
    b = _accel.pulse_stats_numba(buf, periods, n_pulses)
    np.testing.assert_allclose(a[0], b[0], rtol=1e-12)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-9, atol=1e-12)


@needs_numba
def test_pipeline_backends_agree():
    code = (
        "from obtain.synth import click_track\n"
        "from obtain.pipeline import track\n"
        "y, _ = click_track(133, 12.0, noise=0.01, seed=5)\n"
        "print([(e.frame_index, e.source) for e in track(y)[0]])\n"
    )
    outs = []
    for flag in ("0", "1"):
        env = dict(os.environ, OBTAIN_DISABLE_NUMBA=flag)
        outs.append(subprocess.run([sys.executable, "-c", code], env=env,
                                   capture_output=True, text=True, check=True).stdout)
    assert outs[0] == outs[1]
    assert len(eval(outs[0])) > 10
