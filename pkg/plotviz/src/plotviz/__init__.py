"""Post-hoc figures from communication-run CSV outputs."""

__version__ = "0.1.0"

from .figures import KINDS, RunDataError, plot

__all__ = ["KINDS", "RunDataError", "plot"]
