class ValidationError(ValueError):
    """A hypothesis check on the noise or reaction term failed."""

    def __init__(self, message, failures=()):
        super().__init__(message)
        self.failures = list(failures)


class ConfigError(ValueError):
    pass


class BlowUpError(FloatingPointError):
    """Raised when a trajectory leaves the finite range during time stepping."""

    def __init__(self, message, step=None, norm=None):
        super().__init__(message)
        self.step = step
        self.norm = norm


class NumericalError(ArithmeticError):
    pass
