"""Experiment configuration (JSON, schema-validated, unknown keys rejected)."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator

from .errors import InvalidInputError

SCHEMA_VERSION = 1

REPRESENTATIONS = ("spectrogram", "mfsc", "mfcc", "delta-mfcc", "cwt", "scattering", "clsc")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class FrameSettings(_Strict):
    window_size_samples: int = Field(2048, ge=1)
    hop_samples: int = Field(256, ge=1)
    window_kind: Literal["hann", "hamming", "rectangular"] = "hann"
    n_mel: int = Field(40, ge=1)
    n_mfcc: int = Field(20, ge=1)
    cwt_q: int = Field(8, ge=1)
    cwt_lowest_hz: float = Field(50.0, gt=0)


class ScatteringSettings(_Strict):
    t_window_seconds: float = Field(2 ** 14 / 44100.0, gt=0)
    output_hop_seconds: float | None = None
    q1: int = Field(8, ge=1)
    q2: int = Field(1, ge=1)
    family: Literal["gabor", "spline"] = "gabor"
    orders: tuple[int, ...] = (1, 2)
    lowest_first_order_hz: float = Field(50.0, gt=0)


class FeatureSettings(_Strict):
    representation: str = "scattering"
    frames: FrameSettings = FrameSettings()
    scattering: ScatteringSettings = ScatteringSettings()

    @field_validator("representation")
    @classmethod
    def _known(cls, v):
        if v not in REPRESENTATIONS:
            raise ValueError(f"unknown representation {v!r}")
        return v


class OnsetSettings(_Strict):
    representations: tuple[str, ...] = ("scattering", "spectrogram")
    frames: FrameSettings = FrameSettings()
    scattering: ScatteringSettings = ScatteringSettings(
        t_window_seconds=768 / 22050.0, output_hop_seconds=256 / 22050.0)
    m_half_window: int = Field(8, ge=1)
    delta_static_ratio: float = Field(0.01, ge=0)
    scales: tuple[float, ...] | None = None
    tolerance_seconds: float = Field(0.040, gt=0)
    min_gap_seconds: float = Field(0.025, ge=0)

    @field_validator("representations")
    @classmethod
    def _known(cls, v):
        bad = [r for r in v if r not in REPRESENTATIONS]
        if bad:
            raise ValueError(f"unknown representations {bad}")
        return v

    @field_validator("scales")
    @classmethod
    def _nonempty(cls, v):
        if v is not None and len(v) == 0:
            raise ValueError("scale grid is empty")
        return v


class SvmSettings(_Strict):
    grid_C: tuple[float, ...] = (0.1, 1.0, 10.0, 100.0)
    grid_gamma: tuple[float, ...] = tuple(4.0 ** k for k in range(-4, 2))
    folds: int = Field(5, ge=2)
    test_fraction: float = Field(0.3, gt=0, lt=1)
    tol: float = Field(1e-3, gt=0)
    silence_dbfs: float = -60.0
    pca_dim: int = Field(50, ge=1)
    cv_tracks_per_class: int | None = None
    frames: FrameSettings = FrameSettings(window_size_samples=512, hop_samples=256)
    scattering: ScatteringSettings = ScatteringSettings()


class DatasetSettings(_Strict):
    sample_rate: int = Field(22050, gt=0)
    onset_instruments: tuple[str, ...] = ("I1", "I2")
    n_sequences: int = Field(20, ge=1)
    sequence_seconds: float = Field(23.8, gt=0)
    min_gap_seconds: float = Field(0.1, gt=0)
    velocity_range: tuple[int, int] = (30, 127)
    chord_probability: float = Field(0.15, ge=0, le=1)
    snr_db: tuple[float, ...] = (30.0,)
    lambda_pol: int | None = None
    lambda_int: float | None = None
    class_instruments: tuple[str, ...] = ("I1", "I2", "I3", "I4", "I5", "I6", "I7", "I8")
    tracks_per_class: int = Field(30, ge=1)
    track_samples: int = Field(2 ** 15, ge=1)
    track_snr_db: float = 30.0
    score_dir: str | None = None
    template_dir: str | None = None


class ExperimentConfig(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    seed: int = 0
    dataset: DatasetSettings = DatasetSettings()
    features: FeatureSettings = FeatureSettings()
    onset: OnsetSettings = OnsetSettings()
    svm: SvmSettings = SvmSettings()

    def with_seed(self, seed: int | None) -> "ExperimentConfig":
        return self if seed is None else self.model_copy(update={"seed": int(seed)})

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def load_config(path=None) -> ExperimentConfig:
    """Read and validate a JSON config; ``None`` gives the defaults."""
    if path is None:
        return ExperimentConfig()
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read config {path}: {exc}") from exc
    return ExperimentConfig.model_validate(doc)
