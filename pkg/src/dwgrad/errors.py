class ConfigError(ValueError):
    """Invalid scenario or input file. Maps to CLI exit code 2."""


class NumericalError(RuntimeError):
    """A numerical routine failed to produce a trustworthy answer (exit code 3)."""


class EigensolveError(NumericalError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (residual norm {residual:.3e})")
        self.residual = residual
