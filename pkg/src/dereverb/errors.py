"""Exception types shared across the package."""


class DereverbError(Exception):
    """Base class for all package errors."""


class ArgumentError(DereverbError, ValueError):
    """Invalid argument values or mismatched shapes/rates."""


class FormatError(DereverbError, ValueError):
    """Unsupported or malformed file content."""


class SingularBandError(DereverbError, RuntimeError):
    """Normal-equation solve failed even after diagonal loading."""

    def __init__(self, message, band=None):
        super().__init__(message)
        self.band = band


class DenoiserError(DereverbError, RuntimeError):
    """External denoiser process failed."""


class ProtocolError(DereverbError, RuntimeError):
    """Malformed spectrogram exchange data."""


class GeometryError(DereverbError, RuntimeError):
    """Scene sampling could not satisfy the geometric constraints."""


class MetricError(DereverbError, RuntimeError):
    """Metric could not be computed (e.g. silent reference)."""


class AlignmentError(DereverbError, RuntimeError):
    """Cross-correlation alignment is degenerate."""
