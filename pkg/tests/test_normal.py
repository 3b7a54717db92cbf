import math

import mpmath
import numpy as np
import pytest

from hfhet.errors import ParameterError
from hfhet.normal import normal_cdf, normal_pdf, normal_quantile, normal_sf


def mp_quantile(p: float) -> float:
    """Independent oracle: sqrt(2) * erfinv(2p - 1) at 50 digits."""
    with mpmath.workdps(50):
        return float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(p) - 1))


def test_median_is_zero():
    assert normal_quantile(0.5) == 0.0


def test_frozen_quantiles_match_mpmath_oracle():
    # values frozen from the mpmath computation below
    assert normal_quantile(0.95) == pytest.approx(1.6448536269514722, abs=1e-10)
    assert normal_quantile(0.99) == pytest.approx(2.3263478740408408, abs=1e-10)
    for p in (0.95, 0.99):
        assert normal_quantile(p) == pytest.approx(mp_quantile(p), abs=1e-10)


def test_quantile_accuracy_across_range():
    for p in (1e-10, 1e-6, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 1 - 1e-6, 1 - 1e-10):
        assert normal_quantile(p) == pytest.approx(mp_quantile(p), abs=1e-8)


def test_quantile_symmetry():
    for p in (0.001, 0.05, 0.25, 0.4999):
        assert abs(normal_quantile(p) + normal_quantile(1 - p)) < 1e-9


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.1, math.nan])
def test_quantile_rejects_bad_levels(p):
    with pytest.raises(ParameterError):
        normal_quantile(p)


def test_cdf_quantile_round_trip():
    for p in (0.01, 0.2, 0.5, 0.8, 0.99):
        assert normal_cdf(normal_quantile(p)) == pytest.approx(p, abs=1e-12)


def test_sf_complements_cdf():
    for x in (-3.0, -0.5, 0.0, 1.7, 4.2):
        assert normal_sf(x) == pytest.approx(1.0 - normal_cdf(x), abs=1e-12)


def test_pdf_matches_closed_form():
    x = np.array([-2.0, 0.0, 1.5])
    expected = np.exp(-0.5 * x**2) / math.sqrt(2 * math.pi)
    assert np.allclose(normal_pdf(x), expected, rtol=1e-14)
    assert normal_pdf(0.0) == pytest.approx(0.3989422804014327, abs=1e-15)
