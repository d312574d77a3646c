"""Optional input perturbations for robustness runs: additive white noise
at a target SNR and a causal Butterworth low-pass."""

import numpy as np
from scipy import signal

from .audio import SAMPLE_RATE
from .errors import ParameterError


def add_noise(samples, snr_db, seed=0):
    """Add white Gaussian noise so that signal/noise power equals ``snr_db``.

    Silent input gets no noise (the SNR is undefined there).
    """
    x = np.asarray(samples, dtype=np.float64)
    power = float(np.mean(x ** 2)) if x.size else 0.0
    if power == 0.0:
        return x.copy()
    sigma = np.sqrt(power / 10.0 ** (snr_db / 10.0))
    noise = sigma * np.random.default_rng(seed).standard_normal(x.shape[0])
    return np.clip(x + noise, -1.0, 1.0)


def lowpass(samples, cutoff_hz, order=4, sample_rate=SAMPLE_RATE):
    """Causal Butterworth low-pass (second-order sections)."""
    nyq = sample_rate / 2.0
    if not 0.0 < cutoff_hz < nyq:
        raise ParameterError(f"cutoff must lie in (0, {nyq:g}) Hz, got {cutoff_hz}")
    sos = signal.butter(order, cutoff_hz, btype="low", fs=sample_rate, output="sos")
    return signal.sosfilt(sos, np.asarray(samples, dtype=np.float64))
