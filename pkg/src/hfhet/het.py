"""Heteroscedasticity test statistics and the one-sided decision rule.

Each variant compares a sequence of spot-variance estimates against the
matching integrated-variance estimate: under constant volatility the
studentized squared discrepancies, summed over blocks and centered,
are asymptotically standard normal; under time-varying volatility the
statistic diverges to +infinity. Rejection is therefore one-sided at
z_{1-alpha}.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import math

import numpy as np

from .errors import ConfigurationError, DegenerateDataError, ParameterError
from .estimators import (
    DerivedWindows,
    TuningParams,
    _preavg_spot_blocks,
    _spot_blocks,
    _truncated_spot_blocks,
    preavg_increments,
    preavg_params,
    preavg_weights,
    refined_threshold,
    window_kn,
)
from .normal import normal_quantile, normal_sf
from .simulate import SamplePath

__all__ = [
    "VARIANTS",
    "spot_profile",
    "TestOutcome",
    "test_continuous",
    "test_truncated",
    "test_preaveraged",
    "run_test",
    "variation_functional",
    "decision",
]

VARIANTS = ("plain", "truncated", "preaveraged")


@dataclass(frozen=True)
class TestOutcome:
    """One test run: statistic, threshold, decision and diagnostics."""

    variant: str
    statistic: float
    alpha: float
    critical: float
    reject: bool
    p_value: float
    n: int
    windows: DerivedWindows
    iv_hat: float
    spot_estimates: np.ndarray
    block_count: int

    def to_json_dict(self) -> dict:
        return {
            "variant": self.variant,
            "n": self.n,
            "statistic": self.statistic,
            "alpha": self.alpha,
            "critical": self.critical,
            "reject": self.reject,
            "p_value": self.p_value,
            "iv_hat": self.iv_hat,
            "block_count": self.block_count,
            "windows": self.windows.to_json_dict(),
        }


def decision(statistic: float, alpha: float) -> bool:
    """One-sided rule: reject constant volatility iff statistic > z_{1-alpha}."""
    if not (0.0 < alpha < 1.0):
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha!r}")
    return bool(statistic > normal_quantile(1.0 - alpha))


def _check_kn(n: int, k_n: int) -> None:
    if k_n < 2 or 2 * k_n > n:
        raise ConfigurationError(f"spot window k_n={k_n} outside [2, n/2] for n={n}")


def _assemble(spots: np.ndarray, iv: float, inner: int, outer: float) -> float:
    """sqrt(outer/2) * sum over blocks of (inner*(spot-iv)^2 / (2*iv^2) - 1)."""
    dev = spots - iv
    summands = inner * dev * dev / (2.0 * iv * iv) - 1.0
    return math.sqrt(outer / 2.0) * float(np.sum(summands))


def _plain_parts(path: SamplePath, tuning: TuningParams) -> Tuple[np.ndarray, float, DerivedWindows]:
    n = path.n
    k_n = window_kn(n, tuning.theta)
    _check_kn(n, k_n)
    d = path.increments()
    iv = float(np.dot(d, d))
    if iv <= 0.0:
        raise DegenerateDataError("zero realized volatility; flat path")
    spots = _spot_blocks(d, n, k_n)
    return spots, iv, DerivedWindows(k_n=k_n)


def _truncated_parts(path: SamplePath, tuning: TuningParams) -> Tuple[np.ndarray, float, DerivedWindows]:
    n = path.n
    k_n = window_kn(n, tuning.theta)
    _check_kn(n, k_n)
    nu_n = refined_threshold(path, tuning.varpi, tuning.trunc_mult, tuning.trunc_passes)
    d = path.increments()
    kept = d[np.abs(d) <= nu_n]
    iv = float(np.dot(kept, kept))
    if iv <= 0.0:
        raise DegenerateDataError("truncated realized volatility is zero")
    spots = _truncated_spot_blocks(d, n, k_n, nu_n)
    return spots, iv, DerivedWindows(k_n=k_n, nu_n=nu_n)


def _preavg_parts(path: SamplePath, tuning: TuningParams) -> Tuple[np.ndarray, float, DerivedWindows]:
    n = path.n
    p_n, l_n = preavg_params(n, tuning.c_pre, tuning.chi, tuning.a_ker, tuning.b_ker)
    _, phi_n = preavg_weights(p_n, tuning.weight)
    vals = preavg_increments(path, p_n, tuning.weight)
    iv = float(np.dot(vals, vals)) / phi_n
    if iv <= 0.0:
        raise DegenerateDataError("pre-averaged realized volatility is zero")
    spots = _preavg_spot_blocks(vals, n, p_n, l_n, phi_n)
    return spots, iv, DerivedWindows(p_n=p_n, l_n=l_n, phi_n=phi_n)


def _outcome(variant, path, spots, iv, windows, inner, outer, alpha) -> TestOutcome:
    if not (0.0 < alpha < 1.0):
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha!r}")
    stat = _assemble(spots, iv, inner, outer)
    critical = normal_quantile(1.0 - alpha)
    return TestOutcome(
        variant=variant,
        statistic=stat,
        alpha=alpha,
        critical=critical,
        reject=bool(stat > critical),
        p_value=normal_sf(stat),
        n=path.n,
        windows=windows,
        iv_hat=iv,
        spot_estimates=spots,
        block_count=spots.shape[0],
    )


def test_continuous(path: SamplePath, tuning: TuningParams = TuningParams(), alpha: float = 0.05) -> TestOutcome:
    """Plain-variant test; assumes no jumps and no observation noise."""
    spots, iv, windows = _plain_parts(path, tuning)
    return _outcome("plain", path, spots, iv, windows, windows.k_n, windows.k_n / path.n, alpha)


def test_truncated(path: SamplePath, tuning: TuningParams = TuningParams(), alpha: float = 0.05) -> TestOutcome:
    """Jump-robust variant: increments above nu_n are dropped from both estimators."""
    spots, iv, windows = _truncated_parts(path, tuning)
    return _outcome("truncated", path, spots, iv, windows, windows.k_n, windows.k_n / path.n, alpha)


def test_preaveraged(path: SamplePath, tuning: TuningParams = TuningParams(), alpha: float = 0.05) -> TestOutcome:
    """Noise-robust variant built on non-overlapping pre-averaged blocks."""
    spots, iv, windows = _preavg_parts(path, tuning)
    inner = windows.l_n
    outer = windows.p_n * windows.l_n / path.n
    return _outcome("preaveraged", path, spots, iv, windows, inner, outer, alpha)


_TESTS = {
    "plain": test_continuous,
    "truncated": test_truncated,
    "preaveraged": test_preaveraged,
}

_PARTS = {
    "plain": _plain_parts,
    "truncated": _truncated_parts,
    "preaveraged": _preavg_parts,
}


def spot_profile(path: SamplePath, variant: str, tuning: TuningParams = TuningParams()):
    """Block start times in [0, 1] and the per-block spot estimates."""
    if variant not in _PARTS:
        raise ParameterError(f"unknown test variant {variant!r}; known: {VARIANTS}")
    spots, _, windows = _PARTS[variant](path, tuning)
    width = windows.k_n if variant in ("plain", "truncated") else windows.p_n * windows.l_n
    taus = np.arange(spots.shape[0]) * (width / path.n)
    return taus, spots


def run_test(path: SamplePath, variant: str, tuning: TuningParams = TuningParams(), alpha: float = 0.05) -> TestOutcome:
    """Dispatch on variant name ('plain', 'truncated', 'preaveraged')."""
    if variant not in _TESTS:
        raise ParameterError(f"unknown test variant {variant!r}; known: {VARIANTS}")
    return _TESTS[variant](path, tuning, alpha)


def variation_functional(path: SamplePath, tuning: TuningParams = TuningParams(), variant: str = "plain") -> float:
    """Empirical heteroscedasticity magnitude.

    Block-weighted sum of squared spot-versus-integrated discrepancies;
    converges to the integral of (spot variance - integrated variance)^2
    and is zero only when every spot estimate equals the IV estimate.
    """
    if variant == "plain":
        spots, iv, windows = _plain_parts(path, tuning)
        weight = windows.k_n / path.n
    elif variant == "truncated":
        spots, iv, windows = _truncated_parts(path, tuning)
        weight = windows.k_n / path.n
    elif variant == "preaveraged":
        spots, iv, windows = _preavg_parts(path, tuning)
        weight = windows.p_n * windows.l_n / path.n
    else:
        raise ParameterError(f"unknown test variant {variant!r}; known: {VARIANTS}")
    dev = spots - iv
    return weight * float(np.dot(dev, dev))
