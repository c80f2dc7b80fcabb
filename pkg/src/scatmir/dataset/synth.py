"""Template-based rendering of scores into fixed-length sequences."""
from __future__ import annotations

import math

import numpy as np

from ..dsp import Signal
from ..errors import SynthesisError
from .degrade import select_by_intermodulation
from .score import NoteEvent, Score

SEQUENCE_SECONDS = 23.8


def sequence_length(sample_rate: int, seconds: float = SEQUENCE_SECONDS) -> int:
    """Power of two closest (in log scale) to ``seconds * sample_rate``."""
    return 1 << int(round(math.log2(seconds * sample_rate)))


def velocity_rank(velocity: int, n_ranks: int) -> int:
    """Amplitude rank ceil(v / 127 * n_ranks), at least 1."""
    return max(1, math.ceil(velocity / 127.0 * n_ranks))


def _place(out: np.ndarray, x: np.ndarray, start: int, gain: float):
    stop = min(out.size, start + x.size)
    if stop > start:
        out[start:stop] += gain * x[:stop - start]


def synthesize(score: Score, pool, seed, instrument: str | None = None, model: int | None = None,
               n_samples: int | None = None, lambda_int: float | None = None,
               ) -> tuple[Signal, Score]:
    """Render ``score`` with templates from ``pool``.

    One instrument model is drawn per sequence (``seed``). Each note uses the
    template whose rank matches its velocity (or, with ``lambda_int``, the
    template nearest that modulation strength), scaled by ``velocity / 127``
    and summed at its onset; the template rings for its full length, as a
    freely decaying string would after the note-off. The output has ``n_samples`` samples
    (default: the power of two nearest 23.8 s); notes that do not end
    before the cut are left out of both audio and ground truth.
    """
    rng = np.random.default_rng(seed)
    fs = pool.sample_rate
    if instrument is None:
        names = {e.instrument for e in score.events if e.instrument}
        instrument = sorted(names)[0] if names else pool.instruments()[0]
    models = pool.models(instrument)
    if not models:
        raise SynthesisError(f"pool has no models for {instrument!r}")
    if model is None:
        model = models[int(rng.integers(len(models)))]
    missing = sorted(score.pitches() - pool.pitches(instrument, model))
    if missing:
        raise SynthesisError(f"pool lacks {instrument} model {model} pitches {missing}")
    n = sequence_length(fs) if n_samples is None else int(n_samples)
    limit = n / fs
    out = np.zeros(n)
    kept = []
    for e in score.events:
        if e.end_seconds > limit:
            continue
        if lambda_int is None:
            cands = pool.candidates(instrument, model, e.pitch)
            tpl = cands[min(velocity_rank(e.velocity, len(cands)), len(cands)) - 1]
        else:
            tpl = select_by_intermodulation(pool.candidates(instrument, model, e.pitch),
                                            lambda_int)
        start = int(round(e.onset_seconds * fs))
        _place(out, tpl.signal.samples, start, e.velocity / 127.0)
        kept.append(NoteEvent(e.onset_seconds, e.duration_seconds, e.pitch, e.velocity,
                              instrument))
    truth = Score(tuple(kept), limit, {"instrument": instrument, "model": int(model),
                                       "dropped_truncated": len(score) - len(kept)})
    return Signal(out, fs), truth
