"""Exception types shared across the package."""


class GshapeError(Exception):
    """Base class for all package-specific errors."""


class DegenerateInputError(GshapeError, ValueError):
    """Input geometry is degenerate: zero power or (near-)coincident points."""


class UnsupportedOrderError(GshapeError, ValueError):
    """Constellation order outside the supported set for the operation."""


class ParseError(GshapeError):
    """A structured text input failed to parse; carries file and line context."""

    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class ConfigError(GshapeError):
    """Invalid or inconsistent configuration."""


class TrainingError(GshapeError):
    """Training could not produce a usable result."""
