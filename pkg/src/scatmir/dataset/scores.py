"""Seeded random scores and click tracks for the synthetic corpora."""
from __future__ import annotations

import numpy as np

from ..dsp import Signal
from .score import NoteEvent, Score


def random_score(seed, duration: float, instrument: str = "", pitch_range=(48, 72),
                 min_gap: float = 0.1, mean_gap: float = 0.35, chord_prob: float = 0.15,
                 max_chord: int = 3, velocity_range=(50, 127),
                 note_seconds=(0.3, 1.5)) -> Score:
    """Onsets at least ``min_gap`` apart (shifted exponential gaps), some as chords."""
    rng = np.random.default_rng(seed)
    events = []
    t = float(rng.uniform(0.05, 0.3))
    lo, hi = pitch_range
    while t < duration:
        size = 1 + (int(rng.integers(1, max_chord)) if rng.random() < chord_prob else 0)
        pitches = rng.choice(np.arange(lo, hi + 1), size=min(size, hi - lo + 1), replace=False)
        for p in sorted(int(v) for v in pitches):
            events.append(NoteEvent(
                onset_seconds=round(t, 6),
                duration_seconds=round(float(rng.uniform(*note_seconds)), 6),
                pitch=p,
                velocity=int(rng.integers(velocity_range[0], velocity_range[1] + 1)),
                instrument=instrument,
            ))
        t += min_gap + float(rng.exponential(mean_gap - min_gap))
    return Score(tuple(events), duration)


def click_track(seed, sample_rate: int, n_samples: int, min_gap: float = 0.1,
                max_gap: float = 0.5, click_samples: int = 8) -> tuple[Signal, np.ndarray]:
    """Short rectangular clicks at random instants; returns (signal, onset times)."""
    rng = np.random.default_rng(seed)
    x = np.zeros(n_samples)
    onsets = []
    t = float(rng.uniform(0.1, 0.3))
    while t * sample_rate + click_samples < n_samples:
        i = int(round(t * sample_rate))
        x[i:i + click_samples] = float(rng.uniform(0.5, 1.0))
        onsets.append(i / sample_rate)
        t += float(rng.uniform(min_gap, max_gap))
    return Signal(x, sample_rate), np.array(onsets)
