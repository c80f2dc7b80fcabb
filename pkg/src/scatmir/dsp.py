"""
Core transforms: FFT, short-time Fourier framing and the orthonormal DCT.

Everything here is computed in float64 / complex128. The FFT and DCT are thin
wrappers over :mod:`scipy.fft`; the wrappers own the padding, validation and
bookkeeping that the rest of the package relies on.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.fft
import scipy.signal

from .errors import InvalidInputError

WindowKind = Literal["hann", "hamming", "rectangular"]

DEFAULT_WINDOW = 1024
DEFAULT_HOP = 256


def next_pow2(n: int) -> int:
    """Smallest power of two >= n (n >= 1)."""
    return 1 << max(0, int(n - 1).bit_length())


def is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Signal:
    """Mono waveform. Samples are stored as a read-only float64 array."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64).reshape(-1)
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise InvalidInputError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        if x.size < 1:
            raise InvalidInputError("signal must contain at least one sample")
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("signal contains non-finite samples")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class ComplexSpectrum:
    """Full (two-sided) DFT of a zero-padded frame.

    ``n_input`` is the frame length before padding; ``bins.size`` is the
    padded transform length.
    """

    bins: np.ndarray
    bin_hz: float
    n_input: int

    @property
    def n_fft(self) -> int:
        return self.bins.size


@dataclass(frozen=True)
class FrameConfig:
    window_size_samples: int = DEFAULT_WINDOW
    hop_samples: int = DEFAULT_HOP
    window_kind: WindowKind = "hann"
    # analyse a zero-padded final partial window
    pad_tail: bool = False

    def __post_init__(self):
        if self.window_size_samples < 1 or self.hop_samples < 1:
            raise InvalidInputError("window and hop must be positive")
        if self.hop_samples > self.window_size_samples:
            raise InvalidInputError("hop_samples must not exceed window_size_samples")
        if self.window_kind not in ("hann", "hamming", "rectangular"):
            raise InvalidInputError(f"unknown window kind {self.window_kind!r}")

    @property
    def n_fft(self) -> int:
        return next_pow2(self.window_size_samples)

    def window(self) -> np.ndarray:
        if self.window_kind == "rectangular":
            return np.ones(self.window_size_samples)
        return scipy.signal.get_window(self.window_kind, self.window_size_samples, fftbins=True)

    def n_frames(self, n_samples: int) -> int:
        span = n_samples - self.window_size_samples
        if span < 0:
            raise InvalidInputError(
                f"signal of {n_samples} samples is shorter than one window "
                f"({self.window_size_samples})"
            )
        if self.pad_tail:
            return -(-span // self.hop_samples) + 1
        return span // self.hop_samples + 1


@dataclass(frozen=True)
class FeatureMatrix:
    """Time-indexed feature rows.

    Row ``n`` describes the instant ``start_seconds + n * hop_seconds``.
    ``labels`` optionally names the columns (e.g. scattering paths), and
    ``params`` carries the settings that produced the matrix.
    """

    rows: np.ndarray
    hop_seconds: float
    kind: str
    start_seconds: float = 0.0
    labels: tuple = ()
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        rows = np.asarray(self.rows)
        if rows.ndim != 2:
            raise InvalidInputError("feature rows must form a 2-D array")
        if not np.all(np.isfinite(rows)):
            raise InvalidInputError(f"{self.kind} matrix contains non-finite values")
        if self.labels and len(self.labels) != rows.shape[1]:
            raise InvalidInputError("label count does not match row width")
        object.__setattr__(self, "rows", rows)

    @property
    def n_frames(self) -> int:
        return self.rows.shape[0]

    @property
    def width(self) -> int:
        return self.rows.shape[1]

    def times(self) -> np.ndarray:
        return self.start_seconds + self.hop_seconds * np.arange(self.n_frames)


def fft(frame, sample_rate: float = 1.0, pad: bool = True) -> ComplexSpectrum:
    """Discrete Fourier transform of ``frame``, zero-padded to a power of two.

    With ``pad=False`` the transform length equals the frame length.
    """
    x = np.asarray(frame)
    if x.ndim != 1 or x.size == 0:
        raise InvalidInputError("fft needs a non-empty 1-D frame")
    n = next_pow2(x.size) if pad else x.size
    bins = scipy.fft.fft(x.astype(np.complex128), n=n)
    return ComplexSpectrum(bins=bins, bin_hz=sample_rate / n, n_input=x.size)


def ifft(spectrum: ComplexSpectrum) -> np.ndarray:
    """Inverse of :func:`fft`; returns the first ``n_input`` samples (complex)."""
    return scipy.fft.ifft(spectrum.bins)[: spectrum.n_input]


def frames(samples: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    """Unwindowed frames, shape (n_frames, window_size). Tail is zero-padded if asked."""
    n_frames = cfg.n_frames(samples.size)
    needed = (n_frames - 1) * cfg.hop_samples + cfg.window_size_samples
    if needed > samples.size:
        samples = np.concatenate([samples, np.zeros(needed - samples.size)])
    view = np.lib.stride_tricks.sliding_window_view(samples, cfg.window_size_samples)
    return view[:: cfg.hop_samples][:n_frames]


def stft(signal: Signal, cfg: FrameConfig = FrameConfig()) -> FeatureMatrix:
    """Windowed one-sided DFT of every frame.

    Row ``n`` is the transform of ``signal[n*hop : n*hop + window]`` (times the
    window), with ``n_fft // 2 + 1`` bins. Row times refer to frame centres.
    """
    fr = frames(signal.samples, cfg) * cfg.window()
    rows = scipy.fft.rfft(fr, n=cfg.n_fft, axis=1)
    return FeatureMatrix(
        rows=rows,
        hop_seconds=cfg.hop_samples / signal.sample_rate,
        kind="stft",
        start_seconds=0.5 * cfg.window_size_samples / signal.sample_rate,
        params={
            "window_size_samples": cfg.window_size_samples,
            "hop_samples": cfg.hop_samples,
            "window_kind": cfg.window_kind,
            "n_fft": cfg.n_fft,
            "sample_rate": signal.sample_rate,
        },
    )


def dct2(vector, axis: int = -1) -> np.ndarray:
    """Orthonormal type-II DCT along ``axis``."""
    v = np.asarray(vector, dtype=np.float64)
    if v.size == 0 or v.shape[axis] == 0:
        raise InvalidInputError("dct2 needs a non-empty vector")
    return scipy.fft.dct(v, type=2, norm="ortho", axis=axis)


def idct2(coeffs, axis: int = -1) -> np.ndarray:
    """Inverse of :func:`dct2`."""
    c = np.asarray(coeffs, dtype=np.float64)
    if c.size == 0 or c.shape[axis] == 0:
        raise InvalidInputError("idct2 needs a non-empty vector")
    return scipy.fft.idct(c, type=2, norm="ortho", axis=axis)
