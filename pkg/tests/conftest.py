import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from obtain import _accel  # noqa: E402

_ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion.

    Usage: ``criterion(3, ok, "detail")``; the line is printed immediately
    and again in the terminal summary.
    """

    def report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return report


BACKENDS = ["numpy", "numba"]


@pytest.fixture(params=BACKENDS)
def backend(request):
    """Namespace of kernel implementations for one backend."""
    name = request.param
    if name == "numba" and not _accel.HAVE_NUMBA:
        pytest.skip("numba not available")

    class K:
        lms_scan = getattr(_accel, f"lms_scan_{name}")
        weighted_max = getattr(_accel, f"weighted_max_{name}")
        compress_flux = getattr(_accel, f"compress_flux_{name}")
        pulse_stats = getattr(_accel, f"pulse_stats_{name}")

    K.name = name
    return K


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
