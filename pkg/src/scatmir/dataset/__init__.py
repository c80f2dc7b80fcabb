"""Dataset ingestion and synthesis: scores, MIDI, WAV, templates, degradations."""
from .degrade import (am_descriptor, degrade_snr, enforce_sparsity, measured_snr,
                      select_by_intermodulation)
from .midi import parse_midi, write_midi
from .score import NoteEvent, Score
from .scores import click_track, random_score
from .synth import sequence_length, synthesize, velocity_rank
from .templates import INSTRUMENTS, DirectoryPool, SyntheticPool, Template, TemplatePool
from .wav import encode_wav, load_wav, read_wav, write_wav

__all__ = [
    "INSTRUMENTS", "DirectoryPool", "NoteEvent", "Score", "SyntheticPool", "Template",
    "TemplatePool", "am_descriptor", "click_track", "degrade_snr", "encode_wav",
    "enforce_sparsity", "load_wav", "measured_snr", "parse_midi", "random_score", "read_wav",
    "select_by_intermodulation", "sequence_length", "synthesize", "velocity_rank", "write_midi",
    "write_wav",
]
