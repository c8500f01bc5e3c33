"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class CollisionError(ValueError):
    """Two shaped levels were quantized onto the same grid point."""

    def __init__(self, message: str, indices: list[tuple[int, int]]):
        super().__init__(message)
        self.indices = indices


class NumericalError(RuntimeError):
    """A numerical routine failed to reach its tolerance."""


class ConfigError(ValueError):
    """A simulation or CLI configuration is inconsistent."""


class AlistParseError(ValueError):
    """Malformed alist text; ``line`` is 1-based."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
