"""
Frequency-domain filter banks.

Two kinds of bank are built here:

* a triangular mel bank, sampled on the one-sided bins of a spectrogram row;
* constant-Q banks of analytic band-pass wavelets (Gabor or Battle-Lemarie
  cubic spline), sampled on the full two-sided DFT grid, together with a
  low-pass that completes the Littlewood-Paley sum below the lowest centre.

Wavelet responses are zero-phase and real; analytic means they vanish at DC,
at Nyquist and on every negative-frequency bin.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

from .dsp import is_pow2
from .errors import ConstructionError

FAMILIES = ("gabor", "spline")

# relative level defining a filter's practical support
SUPPORT_LEVEL = 1e-3


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True)
class FilterBank:
    """An ordered bank of frequency responses.

    ``filters`` has one row per filter. Mel banks are sampled on the
    ``n_fft // 2 + 1`` one-sided bins; wavelet banks on all ``n_fft`` bins.
    Centre frequencies decrease with the filter index.
    """

    filters: np.ndarray
    center_freqs: np.ndarray
    sample_rate: float
    n_fft: int
    kind: str = "custom"
    lowpass: np.ndarray | None = None
    q_factor: int = 0
    j_max: int = 0
    family: str = ""
    bandwidths: np.ndarray | None = None
    gain: float = 1.0
    f_top: float = 0.0
    covered_band: tuple | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.filters.shape[0]

    @property
    def one_sided(self) -> bool:
        return self.filters.shape[1] != self.n_fft

    def freqs(self) -> np.ndarray:
        """Signed frequency (Hz) of every column of ``filters``."""
        if self.one_sided:
            return np.arange(self.filters.shape[1]) * self.sample_rate / self.n_fft
        return np.fft.fftfreq(self.n_fft, d=1.0 / self.sample_rate)

    def config(self) -> dict:
        """JSON-serialisable parameters from which the bank is rebuilt exactly."""
        if self.kind == "mel":
            return dict(self.meta, kind="mel", sample_rate=self.sample_rate, n_fft=self.n_fft)
        return {
            "kind": self.kind,
            "q": self.q_factor,
            "j_octaves": self.j_max,
            "family": self.family,
            "n_fft": self.n_fft,
            "sample_rate": self.sample_rate,
            "f_top": self.f_top,
        }

    def response(self, freqs_hz, index=None) -> np.ndarray:
        """Band-pass responses (gain applied) at arbitrary frequencies.

        ``index`` selects a subset of filters (int, slice or array); by
        default all filters are evaluated.
        """
        if self.kind != "wavelet":
            raise ConstructionError("continuous responses exist only for wavelet banks")
        sel = slice(None) if index is None else index
        centers = np.atleast_1d(self.center_freqs[sel])
        sigmas = np.atleast_1d(self.bandwidths[sel])
        out = self.gain * _unit_responses(self.family, centers, sigmas,
                                          np.asarray(freqs_hz, dtype=np.float64))
        return out[0] if np.ndim(self.center_freqs[sel]) == 0 else out

    def support_edges(self, level: float = SUPPORT_LEVEL) -> np.ndarray:
        """(lo, hi) frequencies in Hz outside which each response is below ``level`` of its peak."""
        return _support_edges(self.family, self.center_freqs, self.bandwidths, level)

    def at(self, n_fft: int, sample_rate: float | None = None) -> "FilterBank":
        """The same bank sampled on another DFT grid."""
        cfg = self.config()
        cfg.pop("kind")
        cfg["n_fft"] = n_fft
        if sample_rate is not None:
            cfg["sample_rate"] = sample_rate
        return build_wavelet_bank(**cfg, _gain=self.gain, _check_bins=False)


# ---------------------------------------------------------------------------
# mel bank
# ---------------------------------------------------------------------------


def mel_centers(n_filters: int, f_min: float, f_max: float) -> np.ndarray:
    """Band edges and centres in Hz, ascending: ``n_filters + 2`` points."""
    m = np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_filters + 2)
    return mel_to_hz(m)


def build_mel_bank(n_filters: int, sample_rate: float, n_fft: int,
                   f_min: float = 0.0, f_max: float | None = None) -> FilterBank:
    """Triangular mel filters on the one-sided DFT bins.

    Filter ``j`` (counted from the top) rises linearly from the point below
    its centre and falls to the point above it, so neighbours cross at half
    height. Rows are ordered by decreasing centre frequency.
    """
    if f_max is None:
        f_max = sample_rate / 2.0
    if n_filters < 1:
        raise ConstructionError("n_filters must be >= 1")
    if not (0.0 <= f_min < f_max <= sample_rate / 2.0):
        raise ConstructionError(
            f"need 0 <= f_min < f_max <= sample_rate/2, got f_min={f_min}, f_max={f_max}"
        )
    pts = mel_centers(n_filters, f_min, f_max)
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = pts[:-2, None], pts[1:-1, None], pts[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    tri = np.clip(np.minimum(rising, falling), 0.0, None)
    if np.any(tri.sum(axis=1) <= 0):
        empty = int(np.sum(tri.sum(axis=1) <= 0))
        raise ConstructionError(
            f"{empty} of {n_filters} mel filters fall between DFT bins; "
            f"reduce n_filters or increase n_fft ({n_fft})"
        )
    return FilterBank(
        filters=tri[::-1].copy(),
        center_freqs=pts[1:-1][::-1].copy(),
        sample_rate=sample_rate,
        n_fft=n_fft,
        kind="mel",
        covered_band=(f_min, f_max),
        meta={"n_filters": n_filters, "f_min": f_min, "f_max": f_max},
    )


# ---------------------------------------------------------------------------
# wavelet families
# ---------------------------------------------------------------------------


def _bl_numerator(w):
    c2 = np.cos(w) ** 2
    s2 = np.sin(w) ** 2
    return 5 + 30 * c2 + 30 * s2 * c2 + 70 * c2 ** 2 + 2 * s2 ** 2 * c2 + (2.0 / 3.0) * s2 ** 3


def battle_lemarie_psi(omega) -> np.ndarray:
    """|psi_hat(omega)| of the cubic-spline Battle-Lemarie wavelet (unnormalised).

    Closed form of ``omega^-4 * sqrt(S8(omega/2 + pi) / (S8(omega) S8(omega/2)))``
    with ``S8(t) = sum_k (t + 2k pi)^-8`` rewritten without removable
    singularities.
    """
    w = np.abs(np.asarray(omega, dtype=np.float64))
    out = np.zeros_like(w)
    nz = w > 0
    w = w[nz]
    q = w / 4.0
    ratio = _bl_numerator(q + np.pi / 2) / (_bl_numerator(w / 2) * _bl_numerator(q))
    out[nz] = np.sin(q) ** 8 / w ** 4 * np.sqrt(ratio)
    return out


def _spline_constants():
    # peak location and support edges of the mother wavelet
    grid = np.linspace(1e-3, 60.0, 600001)
    resp = battle_lemarie_psi(grid)
    k = int(np.argmax(resp))
    res = minimize_scalar(lambda w: -battle_lemarie_psi(np.array([w]))[0],
                          bounds=(grid[k - 1], grid[k + 1]), method="bounded",
                          options={"xatol": 1e-12})
    w0 = float(res.x)
    peak = float(battle_lemarie_psi(np.array([w0]))[0])
    rel = resp / peak
    above = np.nonzero(rel >= SUPPORT_LEVEL)[0]
    top = np.nonzero(rel >= 10 * SUPPORT_LEVEL)[0]
    return w0, peak, grid[above[0]] / w0, grid[above[-1]] / w0, grid[top[-1]] / w0


_SPLINE = None


def _spline():
    global _SPLINE
    if _SPLINE is None:
        _SPLINE = _spline_constants()
    return _SPLINE


def _gabor_ratio(q: int) -> float:
    """sigma / centre of a Gabor filter.

    The base value makes neighbouring squared responses cross at 1/2; the 1.2
    widening keeps the normalised Littlewood-Paley minimum near 0.65 at q=1
    and 0.88 at q=8.
    """
    return 1.2 * (1.0 - 2.0 ** (-1.0 / q)) / (2.0 * np.sqrt(np.log(2.0)))


def _unit_responses(family, centers, sigmas, f) -> np.ndarray:
    """Unit-peak analytic responses, shape (len(centers), len(f))."""
    pos = f > 0
    out = np.zeros((len(centers), f.size))
    fp = f[pos]
    if family == "gabor":
        out[:, pos] = np.exp(-0.5 * ((fp[None, :] - centers[:, None]) / sigmas[:, None]) ** 2)
    else:
        w0, peak, *_ = _spline()
        out[:, pos] = battle_lemarie_psi(w0 * fp[None, :] / centers[:, None]) / peak
    return out


def _support_edges(family, centers, sigmas, level=SUPPORT_LEVEL) -> np.ndarray:
    if family == "gabor":
        half = sigmas * np.sqrt(2.0 * np.log(1.0 / level))
        return np.stack([np.maximum(centers - half, 0.0), centers + half], axis=1)
    if level == SUPPORT_LEVEL:
        _, _, lo, hi, _ = _spline()
    else:
        # |psi| ~ w^4 near 0 and ~ w^-4 far above the peak
        lo, hi = level ** 0.25 * 0.5, level ** -0.25 * 2.0
    return np.stack([centers * lo, centers * hi], axis=1)


def _lp_peak(family, centers, sigmas, f_hi) -> float:
    """Maximum over (0, f_hi] of the sum of squared unit responses."""

    def lp(f):
        return np.sum(_unit_responses(family, centers, sigmas, np.atleast_1d(f)) ** 2, axis=0)

    lo = max(float(np.min(centers)) * 1e-3, 1e-9)
    grid = np.geomspace(lo, f_hi, 20000)
    vals = lp(grid)
    best = float(vals.max())
    # refine every interior local maximum of the sampled sum
    idx = np.nonzero((vals[1:-1] >= vals[:-2]) & (vals[1:-1] >= vals[2:]))[0] + 1
    for i in idx:
        res = minimize_scalar(lambda f: -lp(f)[0], bounds=(grid[i - 1], grid[i + 1]),
                              method="bounded", options={"xatol": 1e-10 * grid[i]})
        best = max(best, -float(res.fun))
    return max(best, float(lp(np.array([f_hi]))[0]))


@lru_cache(maxsize=64)
def _bank_gain(family, q, j_octaves, sample_rate, f_top) -> float:
    centers = f_top * 2.0 ** (-np.arange(q * j_octaves) / q)
    sigmas = _gabor_ratio(q) * centers if family == "gabor" else centers
    peak = _lp_peak(family, centers, sigmas, sample_rate / 2.0)
    return 1.0 / np.sqrt(max(peak, 1.0) * (1.0 + 1e-12))


def default_f_top(family: str, q: int, sample_rate: float) -> float:
    """Highest centre frequency: the top filter's support stays below Nyquist."""
    nyq = sample_rate / 2.0
    if family == "gabor":
        return nyq / (1.0 + 3.0 * _gabor_ratio(q))
    # polynomial decay: the spline top filter is bounded at the 1e-2 level
    return nyq / _spline()[4]


def octaves_for_lowest(q: int, sample_rate: float, f_lowest: float, family: str = "gabor") -> int:
    """Number of octaves whose lowest centre lands closest (in log) to ``f_lowest``."""
    f_top = default_f_top(family, q, sample_rate)
    n = np.log2(f_top / f_lowest) * q + 1
    return max(1, int(round(n / q)))


def build_wavelet_bank(q: int, j_octaves: int, sample_rate: float, n_fft: int,
                       family: str = "gabor", f_top: float | None = None,
                       _gain: float | None = None, _check_bins: bool = True) -> FilterBank:
    """Constant-Q bank of ``q * j_octaves`` analytic band-pass filters plus a low-pass.

    Centres are ``f_top * 2**(-i/q)``. Responses are built with unit peak and
    then scaled by a common gain so that the Littlewood-Paley sum never
    exceeds one. The low-pass is the Littlewood-Paley complement below the
    lowest centre, which makes the sum exactly one on ``[0, lowest centre]``.
    """
    if family not in FAMILIES:
        raise ConstructionError(f"unknown wavelet family {family!r}; expected one of {FAMILIES}")
    if q < 1 or j_octaves < 1:
        raise ConstructionError("q and j_octaves must be >= 1")
    if not is_pow2(int(n_fft)):
        raise ConstructionError(f"n_fft must be a power of two, got {n_fft}")
    if not f_top:
        f_top = default_f_top(family, q, sample_rate)
    if not (0 < f_top < sample_rate / 2.0):
        raise ConstructionError("f_top must lie strictly between 0 and Nyquist")
    n_filt = q * j_octaves
    centers = f_top * 2.0 ** (-np.arange(n_filt) / q)
    if _check_bins and centers[-1] < sample_rate / n_fft:
        raise ConstructionError(
            f"lowest centre {centers[-1]:.3g} Hz is below one DFT bin "
            f"({sample_rate / n_fft:.3g} Hz); reduce j_octaves or increase n_fft"
        )
    if family == "gabor":
        sigmas = _gabor_ratio(q) * centers
    else:
        sigmas = centers.copy()  # unused by the spline family, kept for symmetry
    if _gain is None:
        _gain = _bank_gain(family, q, j_octaves, float(sample_rate), float(f_top))

    f = np.fft.fftfreq(int(n_fft), d=1.0 / sample_rate)
    filters = _gain * _unit_responses(family, centers, sigmas, f)
    filters[:, int(n_fft) // 2] = 0.0
    # Littlewood-Paley complement on |f| <= lowest centre
    lp = np.sum(filters ** 2, axis=0)
    lp_sym = np.maximum(lp, lp[(-np.arange(int(n_fft))) % int(n_fft)])
    lowpass = np.where(np.abs(f) <= centers[-1], np.sqrt(np.clip(1.0 - lp_sym, 0.0, None)), 0.0)
    return FilterBank(
        filters=filters,
        center_freqs=centers,
        sample_rate=sample_rate,
        n_fft=int(n_fft),
        kind="wavelet",
        lowpass=lowpass,
        q_factor=q,
        j_max=j_octaves,
        family=family,
        bandwidths=sigmas,
        gain=float(_gain),
        f_top=float(f_top),
        covered_band=(0.0, float(centers[0])),
    )


def littlewood_paley_bounds(bank: FilterBank) -> tuple[float, float]:
    """(min, max) over the covered band of |lowpass|^2 + sum_j |filter_j|^2.

    Only non-negative frequencies are inspected. The covered band is
    ``bank.covered_band`` when set, otherwise every bin.
    """
    f = bank.freqs()
    total = np.sum(np.abs(bank.filters) ** 2, axis=0)
    if bank.lowpass is not None:
        total = total + np.abs(bank.lowpass) ** 2
    mask = f >= 0
    if bank.covered_band is not None:
        lo, hi = bank.covered_band
        mask &= (f >= lo) & (f <= hi)
    if not np.any(mask):
        mask = f >= 0
    sel = total[mask]
    return float(sel.min()), float(sel.max())
