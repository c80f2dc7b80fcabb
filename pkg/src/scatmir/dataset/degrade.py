"""
Controlled degradations of synthesized sequences: additive noise at a
target SNR, note sparsity in 10 s windows, and template selection by
amplitude-modulation strength.
"""
from __future__ import annotations

import logging

import numpy as np
import scipy.signal

from ..dsp import Signal
from ..errors import DegradationError, DescriptorError, InvalidInputError
from .score import Score

log = logging.getLogger(__name__)

AM_BAND = (4.0, 8.0)
ENVELOPE_RATE = 100.0


def degrade_snr(signal: Signal, snr_db: float, seed) -> Signal:
    """Peak-normalize, then add white Gaussian noise at exactly ``snr_db``.

    The drawn noise is rescaled so that its sample power equals the signal
    power divided by ``10 ** (snr_db / 10)``.
    """
    x = signal.samples
    peak = np.abs(x).max()
    if peak <= 0:
        raise DegradationError("cannot set an SNR on a silent signal")
    x = x / peak
    noise = np.random.default_rng(seed).standard_normal(x.size)
    p_sig = np.mean(x ** 2)
    p_noise = p_sig / 10.0 ** (snr_db / 10.0)
    noise *= np.sqrt(p_noise / np.mean(noise ** 2))
    return Signal(x + noise, signal.sample_rate)


def measured_snr(clean: Signal, noisy: Signal) -> float:
    x = clean.samples / np.abs(clean.samples).max()
    noise = noisy.samples - x
    return float(10.0 * np.log10(np.mean(x ** 2) / np.mean(noise ** 2)))


def window_counts(onsets, window: float, starts) -> np.ndarray:
    """Number of onsets in ``[s, s + window)`` for every start ``s``."""
    o = np.sort(np.asarray(onsets, dtype=np.float64))
    s = np.asarray(starts, dtype=np.float64)
    return np.searchsorted(o, s + window, side="left") - np.searchsorted(o, s, side="left")


def enforce_sparsity(score: Score, lambda_pol: int, seed, window: float = 10.0) -> Score:
    """At most ``lambda_pol`` notes in every sliding window of ``window`` seconds.

    Windows are half-open, ``[s, s + window)``. The count of any window is
    bounded by that of the window starting at the first onset it contains,
    so only onset-aligned windows are scanned. While one exceeds the bound,
    a seeded random note inside the earliest offending window is removed.
    The removed notes are listed in ``meta["removed"]``.
    """
    if lambda_pol < 1:
        raise InvalidInputError("lambda_pol must be >= 1")
    rng = np.random.default_rng(seed)
    events = list(score.events)
    removed = []
    while True:
        onsets = np.array([e.onset_seconds for e in events])
        counts = window_counts(onsets, window, onsets)
        bad = np.nonzero(counts > lambda_pol)[0]
        if bad.size == 0:
            break
        s = onsets[bad[0]]
        inside = np.nonzero((onsets >= s) & (onsets < s + window))[0]
        victim = int(inside[rng.integers(inside.size)])
        removed.append(events.pop(victim))
    if not removed:
        return score
    log.info("sparsity: removed %d of %d notes", len(removed), len(score))
    return score.with_events(events, removed=[
        (e.onset_seconds, e.pitch, e.velocity) for e in removed])


def _envelope(x: np.ndarray, sample_rate: int) -> tuple[np.ndarray, float]:
    env = np.abs(scipy.signal.hilbert(x))
    step = max(1, int(sample_rate // ENVELOPE_RATE))
    rate = sample_rate / step
    # low-pass well below the new Nyquist before keeping every step-th sample
    sos = scipy.signal.butter(4, min(0.4 * rate, 0.45 * sample_rate), fs=sample_rate,
                              output="sos")
    env = scipy.signal.sosfiltfilt(sos, env)[::step]
    return np.maximum(env, 0.0), rate


def am_descriptor(template) -> float:
    """Envelope amplitude-modulation strength in the 4-8 Hz band.

    The Hilbert envelope is low-passed and resampled to about 100 Hz. Its
    decay is removed by dividing by an exponential fitted (log-linear least
    squares) from the envelope peak down to 1% of it. The result is the
    energy of the normalized envelope within 4-8 Hz over its total energy,
    DC included, so an unmodulated decaying tone scores close to 0.
    """
    sig = getattr(template, "signal", template)
    x, fs = sig.samples, sig.sample_rate
    if x.size < 0.5 * fs:
        raise DescriptorError(f"template of {x.size / fs:.3f} s is shorter than 0.5 s")
    if not np.any(x):
        raise DescriptorError("template is silent")
    env, rate = _envelope(x, fs)
    i0 = int(np.argmax(env))
    peak = env[i0]
    tail = np.nonzero(env[i0:] < 0.01 * peak)[0]
    i1 = i0 + (int(tail[0]) if tail.size else env.size - i0)
    seg = env[i0:i1]
    if seg.size < 0.25 * rate:
        raise DescriptorError("envelope decays too fast to measure modulation")
    t = np.arange(seg.size) / rate
    slope, icpt = np.polyfit(t, np.log(np.maximum(seg, 1e-12 * peak)), 1)
    flat = seg / np.exp(icpt + slope * t)
    spec = np.abs(np.fft.rfft(flat * np.hanning(flat.size))) ** 2
    f = np.fft.rfftfreq(flat.size, d=1.0 / rate)
    band = (f >= AM_BAND[0]) & (f <= AM_BAND[1])
    return float(spec[band].sum() / spec.sum())


def select_by_intermodulation(pool, target: float):
    """Template whose descriptor is nearest ``target``; ties go to the lower rank."""
    pool = list(pool)
    if not pool:
        raise InvalidInputError("template pool is empty")
    return min(pool, key=lambda tpl: (abs(tpl.lambda_int - target), tpl.rank))
