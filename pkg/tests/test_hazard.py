import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ivtrans.errors import DomainError, ValidationError
from ivtrans.hazard import (
    HazardFamily,
    cumulative_hazard,
    hazard,
    hazard_derivative,
    log_hazard,
    sample_error,
    survival,
)

PH, PO = HazardFamily(0.0), HazardFamily(1.0)
rs = st.sampled_from([0.0, 0.5, 1.0, 2.0, 5.0])


@pytest.mark.parametrize("fam,t,expected", [
    (PH, 0.0, 1.0), (PO, 0.0, 0.5), (HazardFamily(2.0), 0.0, 1 / 3),
])
def test_hazard_values(fam, t, expected):
    assert hazard(fam, t) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("fam,t,expected", [
    (PH, 0.0, 1.0), (PO, 0.0, math.log(2)), (PH, math.log(2), 2.0),
])
def test_cumulative_hazard_values(fam, t, expected):
    assert cumulative_hazard(fam, t) == pytest.approx(expected, rel=1e-14)


def test_hazard_derivative_values():
    assert hazard_derivative(PO, 0.0) == pytest.approx(0.25)
    assert hazard_derivative(PH, 0.0) == pytest.approx(1.0)
    h = 1e-6
    fd = (hazard(PO, 1 + h) - hazard(PO, 1 - h)) / (2 * h)
    assert hazard_derivative(PO, 1.0) == pytest.approx(fd, abs=1e-6)


@pytest.mark.parametrize("fam,u,expected", [
    (PO, 0.5, 0.0), (PH, math.exp(-1), 0.0), (PO, 0.25, math.log(3)),
])
def test_sample_error_values(fam, u, expected):
    assert sample_error(fam, u) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("r", [0.0, 0.3, 1.0, 2.0, 7.5])
def test_cumhaz_derivative_is_hazard_on_grid(r):
    fam = HazardFamily(r)
    t = np.linspace(-10, 5, 151)
    h = 1e-5
    fd = (cumulative_hazard(fam, t + h) - cumulative_hazard(fam, t - h)) / (2 * h)
    np.testing.assert_allclose(fd, hazard(fam, t), rtol=1e-6)


@pytest.mark.parametrize("r", [0.0, 0.5, 1.0, 3.0])
@pytest.mark.parametrize("u", [0.01, 0.1, 0.5, 0.9, 0.99])
def test_sample_survival_round_trip(r, u):
    fam = HazardFamily(r)
    assert math.exp(-cumulative_hazard(fam, sample_error(fam, u))) == pytest.approx(u, abs=1e-10)


@pytest.mark.parametrize("r", [0.0, 1.0, 4.0])
def test_hazard_vanishes_far_left(r):
    assert hazard(HazardFamily(r), -30.0) < 1e-12


@given(r=rs, t=st.floats(-700, 700))
def test_positive_and_finite(r, t):
    fam = HazardFamily(r)
    for fn in (hazard, cumulative_hazard, hazard_derivative):
        v = fn(fam, t)
        assert math.isfinite(v) and v >= 0
    if t > -700:
        assert hazard(fam, t) > 0


@given(r=rs, a=st.floats(-40, 40), b=st.floats(-40, 40))
def test_cumulative_hazard_monotone(r, a, b):
    fam = HazardFamily(r)
    lo, hi = min(a, b), max(a, b)
    assert cumulative_hazard(fam, lo) <= cumulative_hazard(fam, hi)


@given(r=rs.filter(lambda r: r > 0), t=st.floats(30, 700))
def test_large_argument_limits(r, t):
    fam = HazardFamily(r)
    assert hazard(fam, t) == pytest.approx(1 / r, rel=1e-9)
    assert cumulative_hazard(fam, t) == pytest.approx((t + math.log(r)) / r, rel=1e-9)


@settings(max_examples=50)
@given(r=rs, t=st.floats(-30, 30))
def test_log_hazard_matches_hazard(r, t):
    fam = HazardFamily(r)
    assert log_hazard(fam, t) == pytest.approx(math.log(hazard(fam, t)), abs=1e-12)


@given(r=rs, u=st.floats(1e-9, 1 - 1e-9), v=st.floats(1e-9, 1 - 1e-9))
def test_sample_error_decreasing(r, u, v):
    fam = HazardFamily(r)
    if u < v:
        assert sample_error(fam, u) >= sample_error(fam, v)


def test_survival_is_exp_minus_cumhaz():
    t = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(survival(PO, t), np.exp(-cumulative_hazard(PO, t)))


def test_array_input_keeps_shape():
    t = np.zeros((2, 3))
    assert hazard(PH, t).shape == (2, 3)


@pytest.mark.parametrize("t", [math.nan, math.inf, -math.inf])
def test_non_finite_argument_rejected(t):
    with pytest.raises(DomainError):
        hazard(PH, t)
    with pytest.raises(DomainError):
        cumulative_hazard(PO, t)


@pytest.mark.parametrize("u", [0.0, 1.0, -0.1, 1.5, math.nan])
def test_sample_error_domain(u):
    with pytest.raises(DomainError):
        sample_error(PO, u)


def test_family_validation_and_parsing():
    with pytest.raises(ValidationError):
        HazardFamily(-1.0)
    with pytest.raises(ValidationError):
        HazardFamily(math.inf)
    assert HazardFamily.parse("ph").r == 0.0
    assert HazardFamily.parse("PO").r == 1.0
    assert HazardFamily.parse("r=2.5").r == 2.5
    with pytest.raises(ValidationError):
        HazardFamily.parse("weibull")
    assert HazardFamily(0).label == "ph" and HazardFamily(1).label == "po"
