"""Counterparty valuation adjustment with a distance-to-default credit model."""
from ._kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
