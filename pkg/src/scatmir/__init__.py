"""Scattering-based onset detection and instrument recognition toolkit."""
from .dsp import ComplexSpectrum, FeatureMatrix, FrameConfig, Signal
from .errors import ScatmirError

__version__ = "0.1.0"

__all__ = ["ComplexSpectrum", "FeatureMatrix", "FrameConfig", "Signal", "ScatmirError"]
