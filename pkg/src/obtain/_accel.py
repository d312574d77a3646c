"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``OBTAIN_DISABLE_NUMBA`` is unset (or ``0``/``false``). Both paths
take identical inputs, including the uniform random matrix used by the
local-maxima scalogram, so their outputs agree exactly.
"""

import os

import numpy as np

_FLAG = os.environ.get("OBTAIN_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError("numba disabled by OBTAIN_DISABLE_NUMBA")
    import numba

    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"


def _njit(fn):
    if HAVE_NUMBA:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn


# ---------------------------------------------------------------------------
# local maxima scalogram
# ---------------------------------------------------------------------------


def lms_scan_numpy(x, r, causal=False):
    """Row sums and per-column failure scale of the local maxima scalogram.

    Parameters
    ----------
    x : np.ndarray [shape=(n,)]
        signal (already detrended)
    r : np.ndarray [shape=(K, n)]
        uniform draws in [0, 1]; row ``k-1`` holds the draws for scale ``k``
    causal : bool
        clamp right neighbours that fall past the end of the frame to the
        last sample instead of forcing the random branch

    Returns
    -------
    gamma : np.ndarray [shape=(K,)]
        row sums of the scalogram
    fail : np.ndarray [shape=(n,)], int64
        smallest scale at which each column holds a non-zero entry,
        ``K + 1`` if the column is zero at every scale
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    K = r.shape[0]
    if K == 0:
        return np.zeros(0), np.ones(n, dtype=np.int64)
    j = np.arange(n)[None, :]
    k = np.arange(1, K + 1)[:, None]
    lo = j - k
    hi = j + k
    valid = lo >= 0
    if causal:
        hi = np.minimum(hi, n - 1)
    else:
        valid &= hi <= n - 1
    xl = x[np.clip(lo, 0, n - 1)]
    xh = x[np.clip(hi, 0, n - 1)]
    zero = valid & (x[None, :] > xl) & (x[None, :] > xh)
    gamma = np.where(zero, 0.0, 1.0 + r).sum(axis=1)
    nonzero = ~zero
    any_nz = nonzero.any(axis=0)
    fail = np.where(any_nz, nonzero.argmax(axis=0) + 1, K + 1).astype(np.int64)
    return gamma, fail


@_njit
def _lms_scan_jit(x, r, causal):
    n = x.shape[0]
    K = r.shape[0]
    gamma = np.zeros(K)
    fail = np.full(n, K + 1, dtype=np.int64)
    for k in range(1, K + 1):
        s = 0.0
        for j in range(n):
            lo = j - k
            hi = j + k
            zero = False
            if lo >= 0:
                if hi > n - 1:
                    if causal:
                        hi = n - 1
                        zero = x[j] > x[lo] and x[j] > x[hi]
                else:
                    zero = x[j] > x[lo] and x[j] > x[hi]
            if not zero:
                s += 1.0 + r[k - 1, j]
                if fail[j] > k:
                    fail[j] = k
        gamma[k - 1] = s
    return gamma, fail


def lms_scan_numba(x, r, causal=False):
    x = np.ascontiguousarray(x, dtype=np.float64)
    r = np.ascontiguousarray(r, dtype=np.float64)
    if r.shape[0] == 0:
        return np.zeros(0), np.ones(x.shape[0], dtype=np.int64)
    return _lms_scan_jit(x, r, bool(causal))


# ---------------------------------------------------------------------------
# CBSS lookback
# ---------------------------------------------------------------------------


def weighted_max_numpy(segment, weights):
    return float(np.max(segment * weights))


@_njit
def _weighted_max_jit(segment, weights):
    best = segment[0] * weights[0]
    for i in range(1, segment.shape[0]):
        v = segment[i] * weights[i]
        if v > best:
            best = v
    return best


def weighted_max_numba(segment, weights):
    return float(_weighted_max_jit(segment, weights))


# ---------------------------------------------------------------------------
# onset strength: gate + log compression + rectified flux, fused
# ---------------------------------------------------------------------------


def compress_flux_numpy(mag, ref, threshold, gamma, prev, out):
    """Normalize, gate, log-compress ``mag`` into ``out``; return flux vs ``prev``."""
    if ref <= 0.0:
        out[:] = 0.0
    else:
        y = mag / ref
        y[y < threshold] = 0.0
        np.minimum(y, 1.0, out=y)
        out[:] = np.log1p(gamma * y) / np.log1p(gamma)
    return float(np.maximum(out - prev, 0.0).sum())


@_njit
def _compress_flux_jit(mag, ref, threshold, gamma, prev, out):
    flux = 0.0
    if ref <= 0.0:
        for k in range(mag.shape[0]):
            out[k] = 0.0
        return 0.0
    scale = 1.0 / np.log1p(gamma)
    for k in range(mag.shape[0]):
        y = mag[k] / ref
        if y < threshold:
            y = 0.0
        elif y > 1.0:
            y = 1.0
        v = np.log1p(gamma * y) * scale
        out[k] = v
        d = v - prev[k]
        if d > 0.0:
            flux += d
    return flux


def compress_flux_numba(mag, ref, threshold, gamma, prev, out):
    return float(_compress_flux_jit(mag, float(ref), float(threshold), float(gamma), prev, out))


# ---------------------------------------------------------------------------
# pulse-train cross-correlation statistics
# ---------------------------------------------------------------------------


def pulse_stats_numpy(buf, periods, n_pulses=0):
    """Max and variance over phases of the pulse-train cross-correlation.

    For period ``P`` and phase ``phi`` the correlation is the sum of
    ``buf[phi + j*P]`` for ``j < n_pulses`` (positions past the buffer add 0).
    ``n_pulses=0`` extends the train over the whole buffer.
    """
    n = buf.shape[0]
    out_max = np.zeros(len(periods))
    out_var = np.zeros(len(periods))
    for c, P in enumerate(periods):
        P = int(P)
        count = n_pulses if n_pulses > 0 else (n - 1) // P + 1
        pos = np.arange(P)[:, None] + P * np.arange(count)[None, :]
        vals = np.where(pos < n, buf[np.minimum(pos, n - 1)], 0.0)
        cc = vals.sum(axis=1)
        out_max[c] = cc.max()
        out_var[c] = cc.var()
    return out_max, out_var


@_njit
def _pulse_stats_jit(buf, periods, n_pulses):
    n = buf.shape[0]
    m = periods.shape[0]
    out_max = np.zeros(m)
    out_var = np.zeros(m)
    for c in range(m):
        P = periods[c]
        cc = np.zeros(P)
        for phi in range(P):
            s = 0.0
            j = 0
            idx = phi
            while idx < n and (n_pulses <= 0 or j < n_pulses):
                s += buf[idx]
                j += 1
                idx += P
            cc[phi] = s
        out_max[c] = cc.max()
        out_var[c] = cc.var()
    return out_max, out_var


def pulse_stats_numba(buf, periods, n_pulses=0):
    return _pulse_stats_jit(
        np.ascontiguousarray(buf, dtype=np.float64),
        np.asarray(periods, dtype=np.int64),
        int(n_pulses),
    )


if HAVE_NUMBA:
    lms_scan = lms_scan_numba
    weighted_max = weighted_max_numba
    compress_flux = compress_flux_numba
    pulse_stats = pulse_stats_numba
else:
    lms_scan = lms_scan_numpy
    weighted_max = weighted_max_numpy
    compress_flux = compress_flux_numpy
    pulse_stats = pulse_stats_numpy


_WARM = False


def warmup():
    """Trigger JIT compilation of every kernel (no-op on the numpy path)."""
    global _WARM
    if _WARM or not HAVE_NUMBA:
        return
    _WARM = True
    x = np.random.default_rng(0).random(16)
    lms_scan_numba(x, np.zeros((7, 16)), False)
    lms_scan_numba(x, np.zeros((7, 16)), True)
    weighted_max_numba(x, x)
    out = np.zeros(16)
    compress_flux_numba(x, 1.0, 1e-4, 100.0, np.zeros(16), out)
    pulse_stats_numba(x, np.array([3, 4]))
