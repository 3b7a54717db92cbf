"""Standard normal quantile, CDF and density helpers.

These back the one-sided decision rule and the QQ/histogram exports.
"""

import math

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import ParameterError

__all__ = ["normal_quantile", "normal_cdf", "normal_sf", "normal_pdf"]


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF, accurate to well below 1e-8.

    Args:
        p: probability, strictly inside (0, 1).

    Raises:
        ParameterError: if p is outside the open unit interval.
    """
    if not (0.0 < p < 1.0) or not math.isfinite(p):
        raise ParameterError(f"quantile level must lie in (0, 1), got {p!r}")
    return float(ndtri(p))


def normal_cdf(x: float) -> float:
    """Standard normal CDF."""
    return float(ndtr(x))


def normal_sf(x: float) -> float:
    """Upper tail probability 1 - Phi(x), computed without cancellation."""
    return float(ndtr(-x))


def normal_pdf(x):
    """Standard normal density; accepts scalars or arrays."""
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return float(out) if out.ndim == 0 else out
