"""Exception hierarchy. Every error carries a short machine-readable ``code``."""


class SnakeError(Exception):
    code = "ERROR"


class BoundsError(SnakeError, IndexError):
    code = "BOUNDS"


class DomainError(SnakeError, ValueError):
    code = "DOMAIN"


class ParseError(SnakeError, ValueError):
    code = "PARSE"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ShapeError(SnakeError, ValueError):
    code = "SHAPE"


class ConfigError(SnakeError, ValueError):
    code = "CONFIG"


class StepError(SnakeError, ValueError):
    code = "STEP"


class InputError(SnakeError, ValueError):
    code = "INPUT"


class FeasibilityError(SnakeError):
    """Raised when an exhaustive computation is refused for being too large."""

    code = "INFEASIBLE"


class DivergenceError(SnakeError, FloatingPointError):
    code = "DIVERGED"

    def __init__(self, message, step=None):
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)
        self.step = step


class LoadError(SnakeError):
    code = "LOAD"

    def __init__(self, message, index=None):
        if index is not None:
            message = f"record {index}: {message}"
        super().__init__(message)
        self.index = index
