"""Numerical laboratory for the one-atom maser repeated-interaction model."""

from .params import ModelParams, DiagonalState, thermal_state
from .state import BandedState
from .channel import KrausSet, SectorOperator, apply_channel, kraus_trace_picture
from .resonance import ResonanceReport, analyze, find_resonances, find_quasi_resonances

__version__ = "0.1.0"

__all__ = ["ModelParams", "DiagonalState", "thermal_state", "BandedState", "KrausSet",
           "SectorOperator", "apply_channel", "kraus_trace_picture", "ResonanceReport",
           "analyze", "find_resonances", "find_quasi_resonances", "__version__"]
