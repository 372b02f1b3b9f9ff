import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weylband.errors import ParamOutOfRange, UnknownFamily, UnknownObservable
from weylband.profile import ObservableSpec, area, make_profile, validate_profile


def test_sphere_basics(sphere):
    assert sphere.L == pytest.approx(math.pi)
    assert sphere.s0 == pytest.approx(math.pi / 2)
    assert sphere.f_max == pytest.approx(1.0)
    assert area(sphere) == pytest.approx(4 * math.pi, rel=1e-13)


@pytest.mark.parametrize("c", [-0.3, -0.1, 0.0, 0.1, 0.15, 1 / 6])
def test_perturbed_family_valid(c):
    prof = make_profile("perturbed_sphere", {"c": c})
    report = validate_profile(prof)
    assert report.ok, report.failures()
    # area of f = sin s (1 + c sin^2 s) is 4 pi (1 + 2c/3)
    assert area(prof) == pytest.approx(4 * math.pi * (1 + 2 * c / 3), rel=1e-12)


def test_perturbed_derivatives_match_finite_differences(perturbed):
    s = np.linspace(0.1, 3.0, 17)
    d = 1e-6
    fd1 = (perturbed.f(s + d) - perturbed.f(s - d)) / (2 * d)
    fd2 = (perturbed.f_prime(s + d) - perturbed.f_prime(s - d)) / (2 * d)
    assert np.allclose(perturbed.f_prime(s), fd1, atol=1e-8)
    assert np.allclose(perturbed.f_double_prime(s), fd2, atol=1e-8)


@pytest.mark.parametrize("c", [-0.34, 0.2, 1.0])
def test_perturbed_out_of_range(c):
    with pytest.raises(ParamOutOfRange):
        make_profile("perturbed_sphere", {"c": c})


def test_unknown_family():
    with pytest.raises(UnknownFamily):
        make_profile("torus")


def test_validation_needs_grid(sphere):
    with pytest.raises(ValueError):
        validate_profile(sphere, grid_n=10)


@given(
    s=st.floats(1e-3, math.pi - 1e-3),
    sigma=st.floats(-10, 10),
    tstar=st.floats(-10, 10),
)
@settings(max_examples=50, deadline=None)
def test_symbol_nonnegative_and_homogeneous(s, sigma, tstar):
    prof = make_profile("perturbed_sphere", {"c": 0.15})
    p = prof.symbol(s, sigma, tstar)
    assert p >= 0.0
    assert prof.symbol(s, 2 * sigma, 2 * tstar) == pytest.approx(4 * p, rel=1e-12, abs=1e-300)


def test_observables():
    s = np.array([0.0, math.pi / 2, math.pi])
    assert np.allclose(ObservableSpec("cos2s")(s), [1, 0, 1])
    assert np.allclose(ObservableSpec("cos_s")(s), [1, 0, -1])
    assert np.allclose(ObservableSpec("constant", {"value": 0.3})(s), 0.3)
    bump = ObservableSpec("bump", {"beta": 2.0, "s1": 1.0})
    assert bump(1.0) == pytest.approx(1.0)
    tc = ObservableSpec("theta_coupled", {"eta": 0.1})
    assert tc.depends_on_theta
    assert tc(0.3, 0.0) == pytest.approx(math.cos(0.3) ** 2 + 0.1 * math.cos(0.3))
    assert not ObservableSpec("theta_coupled", {"eta": 0.0}).depends_on_theta
    assert hash(ObservableSpec("bump", {"beta": 1.0})) == hash(ObservableSpec("bump", {"beta": 1.0}))


def test_unknown_observable():
    with pytest.raises(UnknownObservable):
        ObservableSpec("sin_s")
    with pytest.raises(UnknownObservable):
        ObservableSpec("theta_coupled", {"q1": "theta_coupled"})
