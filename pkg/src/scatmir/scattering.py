"""
Deep scattering transform (orders 0-2), second-order normalisation,
cosine-log scattering coefficients (CLSC) and PCA reduction.

The cascade works in the frequency domain with circular convolutions over the
signal zero-padded to a power of two. First-order moduli ``|x * psi_j1|`` are
computed on a decimated grid whose rate follows the bandwidth of ``psi_j1``
(``ScatteringConfig.decimate``); with decimation off every layer runs at the
input rate and the result equals direct convolution to rounding error.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft

from .dsp import FeatureMatrix, Signal, dct2, next_pow2
from .errors import InvalidInputError
from .filterbank import FilterBank, build_wavelet_bank, default_f_top, octaves_for_lowest
from .representations import subsampled_ifft

EPS = 1e-10

DEFAULT_T = 2 ** 14 / 44100.0


@dataclass(frozen=True)
class BankConfig:
    q: int
    j_octaves: int | None = None
    family: str = "gabor"
    f_top: float | None = None


@dataclass(frozen=True)
class ScatteringConfig:
    """Scattering parameters.

    ``t_window_seconds`` is the averaging scale T: the low-pass is a Gaussian
    whose time-domain standard deviation equals T. Bank octave counts left as
    ``None`` are derived from the sample rate: the first-order bank reaches
    down to about 50 Hz, the second-order bank to about 1/T.
    """

    sample_rate: int
    t_window_seconds: float = DEFAULT_T
    bank1: BankConfig = BankConfig(q=8)
    bank2: BankConfig = BankConfig(q=1)
    max_order: int = 2
    output_hop_seconds: float | None = None
    decimate: bool = True
    oversampling: int = 1
    lowest_first_order_hz: float = 50.0

    def __post_init__(self):
        if self.max_order not in (1, 2):
            raise InvalidInputError("max_order must be 1 or 2")
        if self.t_window_seconds <= 0:
            raise InvalidInputError("t_window_seconds must be positive")
        if self.hop_samples < 1:
            raise InvalidInputError("output hop is shorter than one sample")

    @property
    def t_samples(self) -> float:
        return self.t_window_seconds * self.sample_rate

    @property
    def hop_samples(self) -> int:
        if self.output_hop_seconds is None:
            # largest power of two not above T/2
            return 1 << max(0, int(np.floor(np.log2(max(self.t_samples / 2.0, 1.0)))))
        return int(round(self.output_hop_seconds * self.sample_rate))

    def resolved_banks(self) -> tuple[BankConfig, BankConfig]:
        b1, b2 = self.bank1, self.bank2
        if b1.j_octaves is None:
            b1 = BankConfig(b1.q, octaves_for_lowest(b1.q, self.sample_rate,
                                                     self.lowest_first_order_hz, b1.family),
                            b1.family, b1.f_top)
        if b2.j_octaves is None:
            b2 = BankConfig(b2.q, octaves_for_lowest(b2.q, self.sample_rate,
                                                     1.0 / self.t_window_seconds, b2.family),
                            b2.family, b2.f_top)
        return b1, b2

    def to_dict(self) -> dict:
        d = asdict(self)
        b1, b2 = self.resolved_banks()
        d["bank1"], d["bank2"] = asdict(b1), asdict(b2)
        d["hop_samples"] = self.hop_samples
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScatteringConfig":
        d = dict(d)
        d.pop("hop_samples", None)
        d["bank1"] = BankConfig(**d["bank1"])
        d["bank2"] = BankConfig(**d["bank2"])
        return cls(**d)

    def bank(self, which: int, n_fft: int = 256) -> FilterBank:
        """Bank ``which`` (1 or 2); the cascade only uses its continuous responses."""
        b = self.resolved_banks()[which - 1]
        return build_wavelet_bank(b.q, b.j_octaves, self.sample_rate, n_fft, b.family,
                                  b.f_top, _check_bins=False)


@dataclass(frozen=True)
class ScatteringCoeffs:
    """Scattering output, one row per output frame.

    ``paths1[i]`` is the first-order filter index of column ``i`` of
    ``order1``; ``paths2[k]`` is the ``(j1, j2)`` pair of column ``k`` of
    ``order2``. ``normalized`` tells whether ``order2`` has been divided by
    its first-order parent.
    """

    order0: FeatureMatrix
    order1: FeatureMatrix
    order2: FeatureMatrix | None
    paths1: tuple
    paths2: tuple
    centers1: np.ndarray
    centers2: np.ndarray
    normalized: bool = False
    config: dict = field(default_factory=dict)

    @property
    def path_index(self) -> list:
        return [(j1,) for j1 in self.paths1] + [tuple(p) for p in self.paths2]

    def to_matrix(self, orders=(1, 2)) -> FeatureMatrix:
        """Concatenate the requested orders column-wise."""
        blocks, labels = [], []
        if 0 in orders:
            blocks.append(self.order0.rows)
            labels.append("phi")
        if 1 in orders:
            blocks.append(self.order1.rows)
            labels.extend(f"{j1}" for j1 in self.paths1)
        if 2 in orders and self.order2 is not None:
            blocks.append(self.order2.rows)
            labels.extend(f"{j1}-{j2}" for j1, j2 in self.paths2)
        return FeatureMatrix(
            rows=np.hstack(blocks),
            hop_seconds=self.order1.hop_seconds,
            kind="scattering",
            labels=tuple(labels),
            params={"scattering": self.config, "orders": list(orders)},
        )

    def energy(self) -> float:
        """Sum of squared coefficients over all orders, scaled by the hop (full-rate units)."""
        hop = self.config.get("hop_samples", 1)
        total = np.sum(self.order0.rows ** 2) + np.sum(self.order1.rows ** 2)
        if self.order2 is not None:
            total += np.sum(self.order2.rows ** 2)
        return float(hop * total)


# ---------------------------------------------------------------------------
# low-level helpers
# ---------------------------------------------------------------------------


def gaussian_lowpass(n: int, sample_rate: float, t_std_seconds: float) -> np.ndarray:
    """Unit-DC Gaussian low-pass on the n-point DFT grid (time std ``t_std_seconds``)."""
    f = np.fft.fftfreq(n, d=1.0 / sample_rate)
    return np.exp(-2.0 * (np.pi * t_std_seconds * f) ** 2)


def _analytic_response(bank: FilterBank, n: int, sample_rate: float) -> np.ndarray:
    f = np.fft.fftfreq(n, d=1.0 / sample_rate)
    resp = bank.response(f)
    resp[:, n // 2] = 0.0
    return resp


def _lowpass_subsample(u: np.ndarray, phi_hat: np.ndarray, step: int) -> np.ndarray:
    """``(u * phi)[::step]`` for real ``u`` (last axis is time)."""
    return subsampled_ifft(scipy.fft.fft(u, axis=-1) * phi_hat, step).real


def _input_array(layer_input, bank: FilterBank, sample_rate):
    if isinstance(layer_input, Signal):
        sample_rate = layer_input.sample_rate
        x = layer_input.samples
    elif isinstance(layer_input, FeatureMatrix):
        if sample_rate is None:
            sample_rate = 1.0 / layer_input.hop_seconds
        x = layer_input.rows.T
    else:
        x = np.asarray(layer_input, dtype=np.float64)
    if sample_rate is None:
        sample_rate = bank.sample_rate
    if not np.isclose(float(sample_rate), float(bank.sample_rate)):
        raise InvalidInputError(
            f"bank sample rate {bank.sample_rate} != input rate {sample_rate}"
        )
    return np.atleast_1d(x)


def wavelet_modulus(layer_input, bank: FilterBank, lowpass: np.ndarray | None = None,
                    sample_rate: float | None = None):
    """One wavelet-modulus layer: ``(x * phi, {|x * psi_l|})`` at the input rate.

    ``layer_input`` is a :class:`Signal`, a 1-D array, a 2-D array of
    channels (time on the last axis) or a :class:`FeatureMatrix` (each
    column is a channel). ``lowpass`` defaults to the bank's own low-pass.
    Returns ``(low, mod)`` with ``low`` shaped like the input and ``mod``
    carrying an extra leading filter axis.
    """
    x = _input_array(layer_input, bank, sample_rate)
    n = x.shape[-1]
    if n > bank.n_fft:
        raise InvalidInputError(f"input length {n} exceeds the bank DFT length {bank.n_fft}")
    phi = bank.lowpass if lowpass is None else lowpass
    if phi is None:
        raise InvalidInputError("bank has no low-pass; pass one explicitly")
    x_hat = scipy.fft.fft(x, n=bank.n_fft, axis=-1)
    low = scipy.fft.ifft(x_hat * phi, axis=-1).real[..., :n]
    mod = np.abs(scipy.fft.ifft(x_hat[None, ...] * bank.filters.reshape(
        (len(bank),) + (1,) * (x.ndim - 1) + (bank.n_fft,)), axis=-1))[..., :n]
    return low, mod


def _decimation(bandwidth_hz: float, sample_rate: float, hop: int, n: int, cfg) -> int:
    if not cfg.decimate:
        return 1
    need = max(2.0 ** cfg.oversampling * bandwidth_hz,
               2.0 * 3.72 / (2.0 * np.pi * cfg.t_window_seconds))
    d = 1
    while 2 * d <= hop and n % (2 * d) == 0 and sample_rate / (2 * d) >= need:
        d *= 2
    return d


def _band_product_folded(x_pos: np.ndarray, n: int, psi_vals: np.ndarray, k_lo: int,
                         d: int) -> np.ndarray:
    """Fold ``X * psi`` (nonzero on bins [k_lo, k_lo+len)) onto the n/d grid."""
    length = n // d
    out = np.zeros(length, dtype=np.complex128)
    idx = (np.arange(k_lo, k_lo + psi_vals.size)) % length
    np.add.at(out, idx, x_pos[k_lo:k_lo + psi_vals.size] * psi_vals)
    return out


# ---------------------------------------------------------------------------
# scattering
# ---------------------------------------------------------------------------


def scatter(signal: Signal, cfg: ScatteringConfig) -> ScatteringCoeffs:
    """Scattering coefficients of orders 0, 1 and (optionally) 2.

    order0 = x * phi; order1 = |x * psi_j1| * phi; order2 =
    ||x * psi_j1| * psi_j2| * phi for every j2 whose centre lies below that
    of j1. All are sampled every ``cfg.hop_samples`` samples, frame ``m``
    sitting at sample ``m * hop``.
    """
    if signal.sample_rate != cfg.sample_rate:
        raise InvalidInputError(
            f"config sample rate {cfg.sample_rate} != signal rate {signal.sample_rate}"
        )
    n_in = len(signal)
    if n_in < cfg.t_samples:
        raise InvalidInputError(
            f"signal ({n_in} samples) is shorter than the averaging window "
            f"({cfg.t_samples:.0f} samples)"
        )
    fs = float(signal.sample_rate)
    hop = cfg.hop_samples
    n = next_pow2(max(n_in, hop))
    n_out = -(-n_in // hop)
    t_std = cfg.t_window_seconds

    bank1 = cfg.bank(1)
    bank2 = cfg.bank(2)
    phi_full = gaussian_lowpass(n, fs, t_std)
    g1 = _layer_gain(bank1, n, fs, t_std)
    g2 = _layer_gain(bank2, n, fs, t_std)

    x_hat = scipy.fft.fft(signal.samples, n=n)
    order0 = subsampled_ifft(x_hat * phi_full, hop).real[:n_out]

    f_pos = np.arange(n // 2) * fs / n
    edges = bank1.support_edges()
    wide = bank1.support_edges(1e-9)
    centers1 = bank1.center_freqs
    centers2 = bank2.center_freqs
    s1_cols, s2_cols, paths2 = [], [], []
    grid_cache: dict = {}
    total_energy = float(np.sum(signal.samples ** 2))

    for j1, (lo, hi) in enumerate(edges):
        k_lo = int(np.searchsorted(f_pos, wide[j1, 0], side="left"))
        k_hi = int(np.searchsorted(f_pos, min(wide[j1, 1], fs / 2.0), side="right"))
        k_lo = max(k_lo, 1)
        k_hi = max(k_hi, k_lo + 1)
        psi_vals = g1 * bank1.response(f_pos[k_lo:k_hi], j1)
        d1 = _decimation(hi - lo, fs, hop, n, cfg)
        length = n // d1
        fs_d = fs / d1
        u1 = np.abs(scipy.fft.ifft(_band_product_folded(x_hat, n, psi_vals, k_lo, d1))) / d1
        if (length, fs_d) not in grid_cache:
            phi_d = gaussian_lowpass(length, fs_d, t_std)
            psi2_d = g2 * _analytic_response(bank2, length, fs_d)
            grid_cache[(length, fs_d)] = (phi_d, psi2_d)
        phi_d, psi2_d = grid_cache[(length, fs_d)]
        step = hop // d1
        u1_hat = scipy.fft.fft(u1)
        s1_cols.append(subsampled_ifft(u1_hat * phi_d, step).real[:n_out])
        if cfg.max_order < 2:
            continue
        children = np.nonzero(centers2 < centers1[j1])[0]
        if children.size == 0:
            continue
        block = np.zeros((children.size, n_out))
        parent_energy = d1 * float(np.sum(u1 ** 2))
        if parent_energy > EPS * max(total_energy, EPS):
            live = children[np.any(psi2_d[children] > 0, axis=1)]
            if live.size:
                u2 = np.abs(scipy.fft.ifft(u1_hat[None, :] * psi2_d[live], axis=1))
                s2 = _lowpass_subsample(u2, phi_d, step)[:, :n_out]
                block[np.searchsorted(children, live)] = s2
        s2_cols.append(block)
        paths2.extend((j1, int(j2)) for j2 in children)

    hop_s = hop / fs
    meta = dict(cfg.to_dict(), n_fft=n, layer_gains=[g1, g2])

    def fm(rows, kind, labels=()):
        return FeatureMatrix(rows=rows, hop_seconds=hop_s, kind=kind, labels=labels,
                             params={"scattering": meta})

    o1 = np.maximum(np.stack(s1_cols, axis=1), 0.0)
    o2 = None
    if cfg.max_order == 2:
        rows2 = np.vstack(s2_cols).T if s2_cols else np.zeros((n_out, 0))
        o2 = fm(np.maximum(rows2, 0.0), "scattering_order2",
                tuple(f"{a}-{b}" for a, b in paths2))
    return ScatteringCoeffs(
        order0=fm(order0[:, None], "scattering_order0", ("phi",)),
        order1=fm(o1, "scattering_order1", tuple(str(j) for j in range(len(bank1)))),
        order2=o2,
        paths1=tuple(range(len(bank1))),
        paths2=tuple(paths2),
        centers1=centers1,
        centers2=centers2,
        config=meta,
    )


def _layer_gain(bank: FilterBank, n: int, fs: float, t_std: float) -> float:
    """Extra band-pass gain keeping ``|phi|^2 + sum |psi|^2 <= 1`` on the n-point grid.

    The bank alone already satisfies the bound, so only bins where the
    Gaussian low-pass is non-negligible need checking. Decimated grids share
    the same bin spacing and are covered too.
    """
    sigma_f = 1.0 / (2.0 * np.pi * t_std)
    k_max = min(n // 2, int(np.ceil(8.0 * sigma_f * n / fs)) + 1)
    f = np.arange(1, k_max + 1) * fs / n
    phi = np.exp(-2.0 * (np.pi * t_std * f) ** 2)
    lp = np.sum(bank.response(f) ** 2, axis=0) + phi ** 2
    peak = float(lp.max()) if lp.size else 0.0
    return 1.0 if peak <= 1.0 else 1.0 / np.sqrt(peak * (1.0 + 1e-12))


def normalize_order2(coeffs: ScatteringCoeffs, eps: float = EPS) -> ScatteringCoeffs:
    """Divide every second-order coefficient by its first-order parent.

    Parents at or below ``eps`` yield 0.
    """
    if coeffs.order2 is None:
        raise InvalidInputError("coefficients carry no second order")
    if coeffs.normalized:
        return coeffs
    parents = np.array([j1 for j1, _ in coeffs.paths2], dtype=int)
    s2 = coeffs.order2.rows
    if parents.size:
        s1 = coeffs.order1.rows[:, parents]
        out = np.where(s1 > eps, s2 / np.where(s1 > eps, s1, 1.0), 0.0)
    else:
        out = s2.copy()
    o2 = FeatureMatrix(rows=out, hop_seconds=coeffs.order2.hop_seconds,
                       kind="scattering_order2_normalized", labels=coeffs.order2.labels,
                       params=coeffs.order2.params)
    return ScatteringCoeffs(coeffs.order0, coeffs.order1, o2, coeffs.paths1, coeffs.paths2,
                            coeffs.centers1, coeffs.centers2, True, coeffs.config)


def default_clsc_keep(n1: int, n2: int, target: int = 346) -> tuple[int, int]:
    """Per-order DCT coefficient counts giving a total width close to ``target``."""
    k1 = min(n1, 40)
    k2 = max(0, min(n2, target - k1))
    return k1, k2


def clsc(coeffs: ScatteringCoeffs, n_keep=None, eps: float = EPS) -> FeatureMatrix:
    """Cosine log scattering coefficients.

    Per frame: floored log of order 1 and of normalised order 2, an
    orthonormal DCT along each order's path index, and the first ``n_keep``
    coefficients of each. ``n_keep`` is an int (same count for both orders)
    or a ``(k1, k2)`` pair; by default the width is close to 346.
    """
    if coeffs.order2 is not None and not coeffs.normalized:
        coeffs = normalize_order2(coeffs, eps)
    n1 = coeffs.order1.width
    n2 = coeffs.order2.width if coeffs.order2 is not None else 0
    if n_keep is None:
        k1, k2 = default_clsc_keep(n1, n2)
    elif np.isscalar(n_keep):
        k1 = k2 = int(n_keep)
        if coeffs.order2 is None:
            k2 = 0
    else:
        k1, k2 = (int(v) for v in n_keep)
    if k1 < 1 or k1 > n1 or k2 < 0 or k2 > n2:
        raise InvalidInputError(
            f"n_keep ({k1}, {k2}) does not fit {n1} first-order and {n2} second-order paths"
        )
    blocks = [dct2(np.log(np.maximum(coeffs.order1.rows, eps)), axis=1)[:, :k1]]
    if k2:
        blocks.append(dct2(np.log(np.maximum(coeffs.order2.rows, eps)), axis=1)[:, :k2])
    return FeatureMatrix(
        rows=np.hstack(blocks),
        hop_seconds=coeffs.order1.hop_seconds,
        kind="clsc",
        params={"scattering": coeffs.config, "n_keep": [k1, k2]},
    )


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    basis: np.ndarray
    explained_variance: np.ndarray
    total_variance: float

    @property
    def out_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def explained_ratio(self) -> np.ndarray:
        return self.explained_variance / self.total_variance

    def save(self, path) -> None:
        path = Path(path)
        np.savez(path.with_suffix(".npz"), mean=self.mean, basis=self.basis,
                 explained_variance=self.explained_variance,
                 total_variance=np.float64(self.total_variance))
        header = {"format": "scatmir-pca", "version": 1, "in_dim": int(self.mean.size),
                  "out_dim": self.out_dim}
        path.with_suffix(".json").write_text(json.dumps(header, sort_keys=True, indent=1))

    @classmethod
    def load(cls, path) -> "PcaModel":
        with np.load(Path(path).with_suffix(".npz")) as z:
            return cls(z["mean"], z["basis"], z["explained_variance"],
                       float(z["total_variance"]))


def pca_fit(frames, out_dim: int) -> PcaModel:
    """Principal directions of mean-centred ``frames``, by decreasing variance."""
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidInputError("pca_fit expects a 2-D collection of vectors")
    n, dim = x.shape
    if out_dim < 1 or out_dim > dim:
        raise InvalidInputError(f"out_dim={out_dim} must lie in [1, {dim}]")
    if n < out_dim:
        raise InvalidInputError(f"need at least {out_dim} frames, got {n}")
    mean = x.mean(axis=0)
    xc = x - mean
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    var = s ** 2 / max(n - 1, 1)
    basis = vt[:out_dim]
    # deterministic sign: largest-magnitude entry of each direction positive
    signs = np.sign(basis[np.arange(out_dim), np.argmax(np.abs(basis), axis=1)])
    signs[signs == 0] = 1.0
    basis = basis * signs[:, None]
    return PcaModel(mean=mean, basis=basis, explained_variance=var[:out_dim],
                    total_variance=float(np.sum(var)))


def pca_project(model: PcaModel, vector) -> np.ndarray:
    """Centred projection onto the model basis; accepts one vector or a 2-D batch."""
    v = np.asarray(vector, dtype=np.float64)
    if v.shape[-1] != model.mean.size:
        raise InvalidInputError(
            f"vector dimension {v.shape[-1]} != model dimension {model.mean.size}"
        )
    return (v - model.mean) @ model.basis.T
