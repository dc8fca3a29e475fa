"""bohmflow - causal-interpretation quantum dynamics and their no-Q counterpart."""

__version__ = "1.0.0"
