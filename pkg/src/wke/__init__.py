"""Numerical laboratory for the isotropic four-wave kinetic equation."""
from __future__ import annotations

from ._backend import BACKEND

__all__ = ["BACKEND"]
__version__ = "0.1.0"
