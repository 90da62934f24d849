"""
Exception types shared across the simulator.
"""

from typing import Optional


class MemnetError(Exception):
    """Base class for simulator failures."""


class ConfigError(MemnetError, ValueError):
    """Invalid configuration file or setting."""


class SolverError(MemnetError, RuntimeError):
    """The nodal system could not be solved."""


class NetworkFormatError(MemnetError, ValueError):
    """A saved network file could not be parsed or failed validation."""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field is not None:
            location.append(f"field '{field}'")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
