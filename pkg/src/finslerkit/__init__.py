"""Numerical Finsler geometry on coordinate patches.

Metric families with closed-form derivatives, canonical sprays, adaptive
geodesic integration, quasi-distance via shooting, distance-coordinate
charts, and diagnostics for isometries and submetries.
"""
from __future__ import annotations

from ._njit import ENV_FLAG, USING_NUMBA

__version__ = "0.1.0"

__all__ = ["ENV_FLAG", "USING_NUMBA", "__version__"]
