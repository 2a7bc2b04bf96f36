"""Turbulence simulation, shift-model theory and restoration pipeline."""

from .errors import (AccuracyError, CalibrationError, ConfigurationError, CropRangeError,
                     DegeneratePsfError, DivergenceError, NumericalError, ParameterError)

__version__ = "0.1.0"

__all__ = [
    "AccuracyError", "CalibrationError", "ConfigurationError", "CropRangeError",
    "DegeneratePsfError", "DivergenceError", "NumericalError", "ParameterError",
]
