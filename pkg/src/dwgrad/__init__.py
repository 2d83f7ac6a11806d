"""Two-mode BEC Mach-Zehnder gradiometry: simulation and estimation tools."""

__version__ = "0.1.0"

from .errors import ConfigError, EigensolveError, NumericalError

__all__ = ["ConfigError", "EigensolveError", "NumericalError", "__version__"]
