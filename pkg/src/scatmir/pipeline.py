"""
Experiment wiring: representation selection, synthetic corpora, the onset
evaluation loop and the classification protocol.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import onset as od
from .classify import EvaluationReport, Track, cross_validate
from .config import DatasetSettings, FrameSettings, OnsetSettings, ScatteringSettings, SvmSettings
from .dataset import (Score, SyntheticPool, click_track, degrade_snr, enforce_sparsity,
                      random_score, sequence_length, synthesize)
from .dataset.templates import INSTRUMENTS, stable_seed
from .dsp import FeatureMatrix, FrameConfig, Signal, next_pow2
from .errors import InvalidInputError
from .filterbank import build_mel_bank, build_wavelet_bank, octaves_for_lowest
from .representations import cwt, delta_mfcc, mfcc, mfsc, spectrogram
from .scattering import BankConfig, ScatteringConfig, clsc, pca_fit, pca_project, scatter


def substream(seed: int, *names) -> int:
    """Named, reproducible child seed of the experiment seed."""
    return stable_seed(seed, *names)


def scattering_config(s: ScatteringSettings, sample_rate: int) -> ScatteringConfig:
    return ScatteringConfig(
        sample_rate=sample_rate,
        t_window_seconds=s.t_window_seconds,
        bank1=BankConfig(s.q1, family=s.family),
        bank2=BankConfig(s.q2, family=s.family),
        max_order=2 if 2 in s.orders else 1,
        output_hop_seconds=s.output_hop_seconds,
        lowest_first_order_hz=s.lowest_first_order_hz,
    )


def frame_config(f: FrameSettings) -> FrameConfig:
    return FrameConfig(f.window_size_samples, f.hop_samples, f.window_kind)


def features(signal: Signal, kind: str, frames: FrameSettings = FrameSettings(),
             scat: ScatteringSettings = ScatteringSettings()) -> FeatureMatrix:
    """Any of the supported representations of ``signal``."""
    fs = signal.sample_rate
    if kind in ("spectrogram", "mfsc", "mfcc", "delta-mfcc"):
        cfg = frame_config(frames)
        spec = spectrogram(signal, cfg)
        if kind == "spectrogram":
            return spec
        m = mfsc(spec, build_mel_bank(frames.n_mel, fs, cfg.n_fft))
        if kind == "mfsc":
            return m
        c = mfcc(m, frames.n_mfcc)
        return c if kind == "mfcc" else delta_mfcc(c)
    if kind == "cwt":
        j = octaves_for_lowest(frames.cwt_q, fs, frames.cwt_lowest_hz, "gabor")
        bank = build_wavelet_bank(frames.cwt_q, j, fs, next_pow2(len(signal)))
        return cwt(signal, bank, frames.hop_samples)
    if kind in ("scattering", "clsc"):
        coeffs = scatter(signal, scattering_config(scat, fs))
        if kind == "clsc":
            return clsc(coeffs)
        return coeffs.to_matrix(tuple(o for o in scat.orders if o in (0, 1, 2)))
    raise InvalidInputError(f"unknown representation {kind!r}")


# ---------------------------------------------------------------------------
# onset detection
# ---------------------------------------------------------------------------


@dataclass
class OnsetItem:
    name: str
    signal: Signal
    onsets: np.ndarray
    score: Score | None = None


def onset_corpus(ds: DatasetSettings, seed: int, snr_db: float | None = None,
                 pool: SyntheticPool | None = None) -> list[OnsetItem]:
    """Seeded pluck-model sequences, alternating the onset instruments."""
    pool = pool or SyntheticPool(ds.sample_rate)
    items = []
    for i in range(ds.n_sequences):
        inst = ds.onset_instruments[i % len(ds.onset_instruments)]
        s_seed = substream(seed, "score", i)
        score = random_score(s_seed, ds.sequence_seconds, inst, INSTRUMENTS[inst].pitch_range,
                             min_gap=ds.min_gap_seconds, velocity_range=ds.velocity_range,
                             chord_prob=ds.chord_probability)
        if ds.lambda_pol is not None:
            score = enforce_sparsity(score, ds.lambda_pol, substream(seed, "sparsity", i))
        sig, truth = synthesize(score, pool, substream(seed, "synth", i), instrument=inst,
                                n_samples=sequence_length(ds.sample_rate, ds.sequence_seconds),
                                lambda_int=ds.lambda_int)
        if snr_db is not None:
            sig = degrade_snr(sig, snr_db, substream(seed, "noise", i))
        items.append(OnsetItem(f"seq{i:03d}", sig, truth.onsets(), truth))
    return items


def click_corpus(ds: DatasetSettings, seed: int) -> list[OnsetItem]:
    n = sequence_length(ds.sample_rate, ds.sequence_seconds)
    out = []
    for i in range(ds.n_sequences):
        sig, onsets = click_track(substream(seed, "clicks", i), ds.sample_rate, n)
        out.append(OnsetItem(f"clicks{i:03d}", sig, onsets))
    return out


def onset_function(signal: Signal, kind: str, settings: OnsetSettings) -> od.OnsetFunction:
    rep = features(signal, kind, settings.frames, settings.scattering)
    return od.spectral_flux_odf(rep)


def evaluate_onsets(items, kind: str, settings: OnsetSettings, odfs=None,
                    truths=None) -> od.RocCurve:
    """ROC sweep over ``items`` (or over precomputed ``odfs`` and ``truths``)."""
    if odfs is None:
        odfs = [onset_function(it.signal, kind, settings) for it in items]
    if truths is None:
        truths = [it.onsets for it in items]
    return od.roc_sweep(odfs, truths, settings.scales,
                        settings.m_half_window, settings.delta_static_ratio,
                        settings.tolerance_seconds, settings.min_gap_seconds)


# ---------------------------------------------------------------------------
# instrument recognition
# ---------------------------------------------------------------------------


@dataclass
class TrackItem:
    track_id: str
    label: str
    signal: Signal


def class_corpus(ds: DatasetSettings, seed: int, pool: SyntheticPool | None = None,
                 ) -> list[TrackItem]:
    """Short solo phrases, one instrument (and one drawn model) per track."""
    pool = pool or SyntheticPool(ds.sample_rate)
    seconds = ds.track_samples / ds.sample_rate
    items = []
    for inst in ds.class_instruments:
        for k in range(ds.tracks_per_class):
            score = random_score(substream(seed, "track-score", inst, k), seconds, inst,
                                 INSTRUMENTS[inst].pitch_range, min_gap=0.15,
                                 velocity_range=(40, 127), chord_prob=0.0,
                                 note_seconds=(0.1, 0.3))
            sig, _ = synthesize(score, pool, substream(seed, "track", inst, k), instrument=inst,
                                n_samples=ds.track_samples)
            sig = degrade_snr(sig, ds.track_snr_db, substream(seed, "track-noise", inst, k))
            items.append(TrackItem(f"{inst}-{k:03d}", inst, sig))
    return items


def frame_power_db(signal: Signal, centers: np.ndarray, half_width: int) -> np.ndarray:
    """Mean power (dBFS) of the samples within ``half_width`` of each centre."""
    x2 = np.concatenate([[0.0], np.cumsum(signal.samples ** 2)])
    lo = np.clip(centers - half_width, 0, len(signal))
    hi = np.clip(centers + half_width, 0, len(signal))
    p = (x2[hi] - x2[lo]) / np.maximum(hi - lo, 1)
    return 10.0 * np.log10(np.maximum(p, 1e-20))


def _pool_rows(fm: FeatureMatrix, times: np.ndarray, half: float) -> np.ndarray:
    t = fm.times()
    out = np.empty((times.size, fm.width))
    for i, c in enumerate(times):
        sel = np.abs(t - c) <= half
        out[i] = fm.rows[sel].mean(axis=0) if np.any(sel) else fm.rows[np.argmin(np.abs(t - c))]
    return out


def track_frames(signal: Signal, kind: str, svm: SvmSettings) -> np.ndarray:
    """Frame features of one track on the scattering frame grid (T/2 hop).

    ``clsc`` rows come straight from the scattering; ``delta-mfcc`` and
    ``mfcc`` rows are averaged over the frames within T/2 of each
    scattering frame centre. Frames below ``svm.silence_dbfs`` are dropped
    (the loudest frame is always kept).
    """
    cfg = scattering_config(svm.scattering, signal.sample_rate)
    hop = cfg.hop_samples
    n_out = -(-len(signal) // hop)
    centers = np.arange(n_out) * hop
    half = int(round(cfg.t_samples / 2))
    if kind == "clsc":
        rows = clsc(scatter(signal, cfg)).rows
    elif kind in ("delta-mfcc", "mfcc", "mfsc"):
        fm = features(signal, kind, svm.frames)
        rows = _pool_rows(fm, centers / signal.sample_rate, cfg.t_window_seconds / 2)
    elif kind == "scattering":
        rows = scatter(signal, cfg).to_matrix(svm.scattering.orders).rows
    else:
        raise InvalidInputError(f"representation {kind!r} is not supported for classification")
    power = frame_power_db(signal, centers, half)
    keep = power >= svm.silence_dbfs
    keep[np.argmax(power)] = True
    return rows[keep]


def pca_transform(dim: int):
    """Fold-safe PCA: fitted on training frames only, applied to both sides."""

    def apply(train, other):
        x = np.vstack([t.frames for t in train])
        model = pca_fit(x, min(dim, x.shape[1], x.shape[0]))
        proj = lambda ts: [Track(t.track_id, t.label, pca_project(model, t.frames))  # noqa: E731
                           for t in ts]
        return proj(train), proj(other)

    return apply


def classification_tracks(items, kind: str, svm: SvmSettings) -> list[Track]:
    return [Track(it.track_id, it.label, track_frames(it.signal, kind, svm)) for it in items]


def evaluate_classification(tracks, kind: str, svm: SvmSettings, seed: int) -> EvaluationReport:
    transform = pca_transform(svm.pca_dim) if kind == "clsc" else None
    return cross_validate(tracks, substream(seed, "split"), svm.folds, svm.test_fraction,
                          svm.grid_C, svm.grid_gamma, svm.tol, svm.cv_tracks_per_class,
                          standardize=True, transform=transform)
