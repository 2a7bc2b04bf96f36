"""Exception hierarchy.

Configuration-type errors map to CLI exit code 2, numerical failures to 3.
"""


class ConfigurationError(ValueError):
    """Inputs are inconsistent with each other (grid mismatch, bad config file)."""


class ParameterError(ConfigurationError):
    """A single physical or algorithmic parameter is out of its valid range."""


class CropRangeError(ConfigurationError, IndexError):
    """A crop window does not fit inside its master screen."""


class NumericalError(RuntimeError):
    """Base class for failures of a numerical procedure."""


class DegeneratePsfError(NumericalError):
    """The pupil field carries no energy, so no PSF can be formed."""


class AccuracyError(NumericalError):
    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class CalibrationError(NumericalError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DivergenceError(NumericalError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])
