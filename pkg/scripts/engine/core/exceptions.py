"""
Engine Exceptions

Domain errors raised by the market engine. Each one derives from the builtin
the situation maps to, so callers can keep catching ValueError/RuntimeError.
"""

from typing import List, Optional


class FtapError(RuntimeError):
    """Base class for internal engine failures."""


class InvalidTreeError(ValueError):
    """Scenario tree violates one or more structural invariants."""

    def __init__(self, diagnostics: List[str]):
        self.diagnostics = list(diagnostics)
        summary = "; ".join(self.diagnostics[:3])
        if len(self.diagnostics) > 3:
            summary += f" (+{len(self.diagnostics) - 3} more)"
        super().__init__(f"Invalid scenario tree: {summary}")


class DimensionMismatchError(ValueError):
    """Strategy, claim or measure does not match the tree's shape."""


class TreeFormatError(ValueError):
    """Malformed tree, claim, measure or config file."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.message = message
        self.path = path
        self.line = line
        location = path or "<input>"
        if line is not None:
            location = f"{location}:{line}"
        super().__init__(f"{location}: {message}")


class StrategyError(ValueError):
    """Strategy lacks a property the operation requires."""


class NotAnEMMError(ValueError):
    """Measure fails the martingale check where an EMM is required."""


class ArbitrageMarketError(ValueError):
    """Operation is undefined on a market admitting arbitrage."""


class SolverError(FtapError):
    """Numerical solver failure, distinct from a genuine infeasibility."""

    def __init__(self, message: str, status: Optional[int] = None,
                 gradient_norm: Optional[float] = None):
        self.status = status
        self.gradient_norm = gradient_norm
        details = []
        if status is not None:
            details.append(f"status={status}")
        if gradient_norm is not None:
            details.append(f"gradient_norm={gradient_norm:.3e}")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)


class FTAPViolationError(FtapError):
    """Both or neither certificate, or a certificate failing its own check."""


class AccountingIdentityError(FtapError):
    """Nodewise self-financing holds but the discounted gains identity does not."""
