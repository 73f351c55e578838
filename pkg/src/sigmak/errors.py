"""Exception types shared across the package."""


class SigmakError(Exception):
    """Base class for library-specific failures."""


class AdmissibilityError(SigmakError):
    """Eigenvalues left the required Garding cone."""


class MetricError(SigmakError):
    """Metric field is not symmetric positive definite."""


class ChartError(SigmakError):
    """Operation requires a different chart kind."""


class UmbilicityError(SigmakError):
    """Boundary is not umbilic where umbilicity is required."""


class HypothesisError(SigmakError):
    """A theorem hypothesis on the coefficients fails; message names it."""


class NormalizationError(SigmakError):
    """Input cannot be normalized (e.g. identically zero test function)."""


class NumericalError(SigmakError):
    """An iterative numerical procedure failed to converge."""


class ManifestError(SigmakError):
    """Experiment manifest failed validation; message names the field."""
