"""Exception types shared across the package."""


class AlphaMixError(Exception):
    """Base class for package errors."""


class ImageError(AlphaMixError, ValueError):
    """An update left the natural-parameter domain (e.g. lost positive definiteness)."""


class NormalizationError(AlphaMixError, ValueError):
    """A proposal density does not integrate to one on the quadrature grid."""


class ConfigError(AlphaMixError, ValueError):
    """Invalid experiment configuration or input file."""


class NumericalDegeneracyError(AlphaMixError, RuntimeError):
    """A run could not continue, e.g. every component lost all its mass."""
