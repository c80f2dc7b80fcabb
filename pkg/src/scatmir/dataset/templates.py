"""
Note templates and template pools.

The bundled pool renders pseudo-instruments with a damped harmonic pluck
model: inharmonic partials with frequency-dependent exponential decay, a
short noise burst at the attack and an optional sinusoidal amplitude
modulation. Each instrument comes in several models (small parameter
perturbations) and several amplitude ranks (louder ranks are brighter and
noisier at the attack). Templates are peak-normalized.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.signal

from ..dsp import Signal
from ..errors import InvalidInputError, SynthesisError
from .wav import read_wav


FADE_SECONDS = 0.3


@dataclass(frozen=True)
class InstrumentSpec:
    name: str
    pitch_range: tuple = (48, 72)
    rolloff: float = 1.2          # partial k has amplitude k^-rolloff
    even_gain: float = 1.0        # extra gain on even partials
    inharmonicity: float = 1e-4   # f_k = k f0 sqrt(1 + B k^2)
    decay: float = 1.0            # seconds, fundamental at middle C
    decay_slope: float = 0.3      # tau_k = decay / (1 + slope (k - 1))
    attack: float = 0.002         # seconds
    noise_level: float = 0.05
    noise_decay: float = 0.01
    noise_band: tuple = (0.05, 0.45)   # fraction of the sample rate
    am_rate: float = 0.0
    am_depth: float = 0.0
    n_partials: int = 40


# eight pseudo-instruments; several pairs share a spectral envelope and
# differ only in their temporal structure
INSTRUMENTS = {
    "I1": InstrumentSpec("I1", (55, 79), rolloff=1.1, inharmonicity=3e-4, decay=0.4,
                         decay_slope=0.4, noise_level=0.08),
    "I2": InstrumentSpec("I2", (40, 76), rolloff=1.5, inharmonicity=1e-4, decay=0.8,
                         decay_slope=0.15, attack=0.003, noise_level=0.04),
    "I3": InstrumentSpec("I3", (55, 79), rolloff=1.1, inharmonicity=3e-4, decay=0.4,
                         decay_slope=0.4, noise_level=0.08, am_rate=6.0, am_depth=0.5),
    "I4": InstrumentSpec("I4", (45, 72), rolloff=0.9, even_gain=0.3, decay=1.2,
                         decay_slope=0.25, noise_level=0.03),
    "I5": InstrumentSpec("I5", (45, 72), rolloff=0.9, even_gain=0.3, decay=1.2,
                         decay_slope=0.25, noise_level=0.03, am_rate=30.0, am_depth=0.6),
    "I6": InstrumentSpec("I6", (50, 76), rolloff=1.8, inharmonicity=1e-3, decay=0.4,
                         decay_slope=0.6, attack=0.001, noise_level=0.2, noise_decay=0.02),
    "I7": InstrumentSpec("I7", (40, 70), rolloff=1.3, even_gain=1.5, decay=2.5,
                         decay_slope=0.1, attack=0.02, noise_level=0.01),
    "I8": InstrumentSpec("I8", (40, 70), rolloff=1.3, even_gain=1.5, decay=2.5,
                         decay_slope=0.1, attack=0.02, noise_level=0.01, am_rate=12.0,
                         am_depth=0.4),
}


def midi_to_hz(pitch) -> float:
    return 440.0 * 2.0 ** ((np.asarray(pitch, dtype=np.float64) - 69.0) / 12.0)


def stable_seed(*parts) -> int:
    """Seed derived from the text of ``parts`` (independent of PYTHONHASHSEED)."""
    return zlib.crc32("|".join(str(p) for p in parts).encode())


def model_variant(spec: InstrumentSpec, model: int) -> InstrumentSpec:
    """Deterministic perturbation of ``spec`` for instrument model ``model``."""
    if model == 0:
        return spec
    rng = np.random.default_rng(stable_seed("model", spec.name, model))
    j = rng.uniform(-1.0, 1.0, size=4)
    return replace(
        spec,
        rolloff=spec.rolloff * (1.0 + 0.08 * j[0]),
        decay=spec.decay * (1.0 + 0.2 * j[1]),
        inharmonicity=spec.inharmonicity * (1.0 + 0.3 * j[2]),
        noise_level=spec.noise_level * (1.0 + 0.3 * j[3]),
        am_depth=spec.am_depth,
    )


def render_note(spec: InstrumentSpec, pitch: int, rank: int, n_ranks: int, sample_rate: int,
                duration: float, seed: int) -> np.ndarray:
    """Pluck-model waveform of one note, peak-normalized."""
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    f0 = float(midi_to_hz(pitch))
    level = (rank - 1) / max(n_ranks - 1, 1)
    rolloff = spec.rolloff - 0.3 * level
    k = np.arange(1, spec.n_partials + 1)
    fk = k * f0 * np.sqrt(1.0 + spec.inharmonicity * k ** 2)
    keep = fk < 0.45 * sample_rate
    k, fk = k[keep], fk[keep]
    amp = k ** -rolloff * np.where(k % 2 == 0, spec.even_gain, 1.0)
    tau = spec.decay * np.sqrt(261.6 / f0) / (1.0 + spec.decay_slope * (k - 1))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=k.size)
    x = np.zeros(n)
    for a, f, d, p in zip(amp, fk, tau, phase):
        x += a * np.exp(-t / d) * np.sin(2.0 * np.pi * f * t + p)
    x *= 1.0 - np.exp(-t / spec.attack)
    if spec.am_depth > 0:
        x *= 1.0 + spec.am_depth * np.sin(2.0 * np.pi * spec.am_rate * t
                                          + rng.uniform(0.0, 2.0 * np.pi))
    if spec.noise_level > 0:
        lo, hi = spec.noise_band
        sos = scipy.signal.butter(2, [lo * 2.0, hi * 2.0], btype="band", output="sos")
        burst = scipy.signal.sosfilt(sos, rng.standard_normal(n)) * np.exp(-t / spec.noise_decay)
        x += spec.noise_level * (0.5 + level) * burst / max(np.abs(burst).max(), 1e-12) \
            * np.abs(x).max()
    # smooth tail so that the end of the template is not heard as an event
    n_fade = min(n, int(FADE_SECONDS * sample_rate))
    x[n - n_fade:] *= 0.5 * (1.0 + np.cos(np.pi * np.arange(n_fade) / n_fade))
    peak = np.abs(x).max()
    if peak <= 0:
        raise SynthesisError(f"silent template for {spec.name} pitch {pitch}")
    return x / peak


@dataclass(frozen=True)
class Template:
    signal: Signal
    pitch: int
    instrument: str
    rank: int
    model: int = 0

    def __post_init__(self):
        peak = np.abs(self.signal.samples).max()
        if peak <= 0:
            raise InvalidInputError("template is silent")
        if not np.isclose(peak, 1.0):
            object.__setattr__(self, "signal",
                               Signal(self.signal.samples / peak, self.signal.sample_rate))

    @cached_property
    def lambda_int(self) -> float:
        from .degrade import am_descriptor

        return am_descriptor(self)


class TemplatePool:
    """Templates keyed by (instrument, model, pitch, rank)."""

    sample_rate: int
    n_ranks: int

    def get(self, instrument: str, model: int, pitch: int, rank: int) -> Template:
        raise NotImplementedError

    def models(self, instrument: str) -> list:
        raise NotImplementedError

    def pitches(self, instrument: str, model: int) -> set:
        raise NotImplementedError

    def instruments(self) -> list:
        raise NotImplementedError

    def candidates(self, instrument: str, model: int, pitch: int) -> list:
        return [self.get(instrument, model, pitch, r) for r in range(1, self.n_ranks + 1)]


@dataclass
class SyntheticPool(TemplatePool):
    """Lazily rendered pluck-model templates (3 models x 6 ranks per pitch by default)."""

    sample_rate: int
    instruments_spec: dict = field(default_factory=lambda: dict(INSTRUMENTS))
    n_models: int = 3
    n_ranks: int = 6
    duration: float = 2.0
    _cache: dict = field(default_factory=dict, repr=False)

    def instruments(self) -> list:
        return sorted(self.instruments_spec)

    def models(self, instrument: str) -> list:
        self._spec(instrument)
        return list(range(self.n_models))

    def pitches(self, instrument: str, model: int) -> set:
        lo, hi = self._spec(instrument).pitch_range
        return set(range(lo, hi + 1))

    def _spec(self, instrument: str) -> InstrumentSpec:
        try:
            return self.instruments_spec[instrument]
        except KeyError:
            raise SynthesisError(f"unknown instrument {instrument!r}") from None

    def get(self, instrument: str, model: int, pitch: int, rank: int) -> Template:
        key = (instrument, model, pitch, rank)
        if key not in self._cache:
            if pitch not in self.pitches(instrument, model):
                raise SynthesisError(f"{instrument} has no template for pitch {pitch}")
            if not 1 <= rank <= self.n_ranks or not 0 <= model < self.n_models:
                raise SynthesisError(f"no template for model {model}, rank {rank}")
            spec = model_variant(self._spec(instrument), model)
            x = render_note(spec, pitch, rank, self.n_ranks, self.sample_rate, self.duration,
                            stable_seed(*key))
            self._cache[key] = Template(Signal(x, self.sample_rate), pitch, instrument, rank,
                                        model)
        return self._cache[key]


class DirectoryPool(TemplatePool):
    """Templates read from ``root/<instrument>/<pitch>/<rank>.wav``.

    An extra level ``root/<instrument>/<model>/<pitch>/<rank>.wav`` is read
    as distinct instrument models.
    """

    def __init__(self, root):
        self.root = Path(root)
        self._files: dict = {}
        for wav in sorted(self.root.rglob("*.wav")):
            parts = wav.relative_to(self.root).parts
            try:
                if len(parts) == 3:
                    key = (parts[0], 0, int(parts[1]), int(Path(parts[2]).stem))
                elif len(parts) == 4:
                    key = (parts[0], int(parts[1]), int(parts[2]), int(Path(parts[3]).stem))
                else:
                    continue
            except ValueError:
                continue
            self._files[key] = wav
        if not self._files:
            raise SynthesisError(f"no templates found under {self.root}")
        self.n_ranks = max(k[3] for k in self._files)
        self._cache: dict = {}
        first = read_wav(next(iter(self._files.values())))
        self.sample_rate = first.sample_rate

    def instruments(self) -> list:
        return sorted({k[0] for k in self._files})

    def models(self, instrument: str) -> list:
        return sorted({k[1] for k in self._files if k[0] == instrument})

    def pitches(self, instrument: str, model: int) -> set:
        return {k[2] for k in self._files if k[0] == instrument and k[1] == model}

    def candidates(self, instrument: str, model: int, pitch: int) -> list:
        ranks = sorted(k[3] for k in self._files if k[:3] == (instrument, model, pitch))
        return [self.get(instrument, model, pitch, r) for r in ranks]

    def get(self, instrument: str, model: int, pitch: int, rank: int) -> Template:
        key = (instrument, model, pitch, rank)
        if key not in self._files:
            raise SynthesisError(f"no template file for {key}")
        if key not in self._cache:
            sig = read_wav(self._files[key])
            if sig.sample_rate != self.sample_rate:
                raise SynthesisError(f"{self._files[key]} has rate {sig.sample_rate}, "
                                     f"pool rate is {self.sample_rate}")
            self._cache[key] = Template(sig, pitch, instrument, rank, model)
        return self._cache[key]
