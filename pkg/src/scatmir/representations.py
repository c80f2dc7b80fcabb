"""
Baseline time-frequency representations: spectrogram, MFSC, MFCC with
first-difference deltas, and the CWT scalogram.
"""
from __future__ import annotations

import numpy as np
import scipy.fft

from .dsp import FeatureMatrix, FrameConfig, Signal, dct2, next_pow2, stft
from .errors import InvalidInputError
from .filterbank import FilterBank

LOG_FLOOR = 1e-10


def safe_log(x, floor: float = LOG_FLOOR) -> np.ndarray:
    return np.log(np.maximum(x, floor))


def spectrogram(signal: Signal, cfg: FrameConfig = FrameConfig()) -> FeatureMatrix:
    """Squared magnitude of the one-sided STFT rows."""
    z = stft(signal, cfg)
    return FeatureMatrix(
        rows=np.abs(z.rows) ** 2,
        hop_seconds=z.hop_seconds,
        kind="spectrogram",
        start_seconds=z.start_seconds,
        params=z.params,
    )


def mfsc(spec: FeatureMatrix, mel: FilterBank) -> FeatureMatrix:
    """Mel-averaged spectrogram: ``rows @ |mel|^2.T / (2 pi)``."""
    if spec.kind != "spectrogram":
        raise InvalidInputError(f"mfsc expects a spectrogram, got {spec.kind!r}")
    if mel.kind != "mel" or mel.filters.shape[1] != spec.width:
        raise InvalidInputError(
            f"mel bank has {mel.filters.shape[1]} bins, spectrogram rows have {spec.width}"
        )
    n_fft = spec.params.get("n_fft")
    if n_fft is not None and n_fft != mel.n_fft:
        raise InvalidInputError(f"mel bank n_fft {mel.n_fft} != spectrogram n_fft {n_fft}")
    weights = np.abs(mel.filters) ** 2
    out = spec.rows @ weights.T / (2.0 * np.pi)
    return FeatureMatrix(
        rows=out,
        hop_seconds=spec.hop_seconds,
        kind="mfsc",
        start_seconds=spec.start_seconds,
        labels=tuple(f"{f:.1f}Hz" for f in mel.center_freqs),
        params=dict(spec.params, mel=mel.config()),
    )


def mfcc(mfsc_matrix: FeatureMatrix, n_keep: int = 20) -> FeatureMatrix:
    """Floored log of each MFSC row, orthonormal DCT, first ``n_keep`` coefficients."""
    if mfsc_matrix.kind != "mfsc":
        raise InvalidInputError(f"mfcc expects an mfsc matrix, got {mfsc_matrix.kind!r}")
    if n_keep < 1:
        raise InvalidInputError("n_keep must be >= 1")
    if n_keep > mfsc_matrix.width:
        raise InvalidInputError(f"n_keep={n_keep} exceeds the {mfsc_matrix.width} mel filters")
    coeffs = dct2(safe_log(mfsc_matrix.rows), axis=1)[:, :n_keep]
    return FeatureMatrix(
        rows=coeffs,
        hop_seconds=mfsc_matrix.hop_seconds,
        kind="mfcc",
        start_seconds=mfsc_matrix.start_seconds,
        params=dict(mfsc_matrix.params, n_mfcc=n_keep),
    )


def delta_mfcc(mfcc_matrix: FeatureMatrix) -> FeatureMatrix:
    """Static coefficients followed by their frame-to-frame difference.

    The delta part of row 0 is zero.
    """
    if mfcc_matrix.n_frames < 2:
        raise InvalidInputError("delta_mfcc needs at least two frames")
    static = mfcc_matrix.rows
    delta = np.zeros_like(static)
    delta[1:] = static[1:] - static[:-1]
    return FeatureMatrix(
        rows=np.hstack([static, delta]),
        hop_seconds=mfcc_matrix.hop_seconds,
        kind="delta_mfcc",
        start_seconds=mfcc_matrix.start_seconds,
        params=dict(mfcc_matrix.params),
    )


def _check_bank_rate(signal: Signal, bank: FilterBank):
    if bank.kind != "wavelet":
        raise InvalidInputError("cwt needs an analytic wavelet bank")
    if float(bank.sample_rate) != float(signal.sample_rate):
        raise InvalidInputError(
            f"bank sample rate {bank.sample_rate} != signal sample rate {signal.sample_rate}"
        )


def subsampled_ifft(spectrum: np.ndarray, step: int) -> np.ndarray:
    """``ifft(spectrum)[::step]`` computed on a length ``N / step`` grid.

    Exact when ``step`` divides ``N``: folding the spectrum onto the shorter
    grid is the frequency-domain image of time subsampling.
    """
    n = spectrum.shape[-1]
    if step == 1:
        return scipy.fft.ifft(spectrum, axis=-1)
    if n % step:
        return scipy.fft.ifft(spectrum, axis=-1)[..., ::step]
    folded = spectrum.reshape(spectrum.shape[:-1] + (step, n // step)).sum(axis=-2)
    return scipy.fft.ifft(folded, axis=-1) / step


def cwt(signal: Signal, bank: FilterBank, hop_samples: int = 1) -> FeatureMatrix:
    """Scalogram ``|x * psi_j|`` sampled every ``hop_samples`` samples.

    The convolution is circular over the bank's DFT length; the signal is
    zero-padded up to it (a bank shorter than the signal is resized to the
    next power of two). Row ``n`` is the instant ``n * hop``.
    """
    _check_bank_rate(signal, bank)
    if hop_samples < 1:
        raise InvalidInputError("hop_samples must be >= 1")
    n = len(signal)
    if bank.n_fft < n:
        bank = bank.at(next_pow2(n))
    x_hat = scipy.fft.fft(signal.samples, n=bank.n_fft)
    n_out = -(-n // hop_samples)
    rows = np.empty((n_out, len(bank)))
    for j, psi in enumerate(bank.filters):
        rows[:, j] = np.abs(subsampled_ifft(x_hat * psi, hop_samples))[:n_out]
    return FeatureMatrix(
        rows=rows,
        hop_seconds=hop_samples / signal.sample_rate,
        kind="cwt",
        labels=tuple(f"{f:.1f}Hz" for f in bank.center_freqs),
        params={"bank": bank.config(), "hop_samples": hop_samples},
    )
