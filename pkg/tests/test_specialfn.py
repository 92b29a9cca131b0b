import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import special

from src.errors import DomainError
from src.specialfn import (
    bessel_combination, bessel_i, bessel_ie, bessel_j_halfint, radial_bessel, theta, theta_inv,
    theta_inv_complement, theta_prime,
)


def test_theta_known_values():
    assert theta(0.0) == 0.0
    assert_allclose(theta(math.pi / 2), math.pi / 2, rtol=1e-15)
    assert_allclose(theta(1e-6), 6.666667e-7, atol=1e-13)


def test_theta_odd_and_increasing():
    y = np.linspace(-3.1, 3.1, 401)
    vals = theta(y)
    assert_allclose(vals, -theta(-y), rtol=0, atol=1e-15)
    assert np.all(np.diff(vals) > 0)


def test_theta_continuous_across_branches():
    for cut in (1e-3, math.pi - 1e-3):
        lo, hi = theta(cut * (1 - 1e-9)), theta(cut * (1 + 1e-9))
        assert_allclose(lo, hi, rtol=1e-6)


def test_theta_rejects_pole():
    with pytest.raises(DomainError):
        theta(math.pi)
    with pytest.raises(DomainError):
        theta(-4.0)


def test_theta_prime_matches_difference_quotient():
    for y in (0.3, 1.0, 2.5):
        h = 1e-5
        fd = (theta(y + h) - theta(y - h)) / (2 * h)
        assert_allclose(theta_prime(y), fd, rtol=1e-8)
    assert_allclose(theta_prime(0.0), 2.0 / 3.0)


@pytest.mark.parametrize("omega", [0.1, 1.0, 10.0, 100.0, 1e4, 1e7])
def test_theta_inv_roundtrip(omega):
    y = theta_inv(omega)
    assert 0.0 <= y < math.pi
    if omega > 1e6:
        eps = theta_inv_complement(omega)
        back = (2 * math.pi - 2 * eps + math.sin(2 * eps)) / (2 * math.sin(eps) ** 2)
    else:
        back = theta(y)
    assert_allclose(back, omega, rtol=1e-12)


def test_theta_inv_edges():
    assert theta_inv(0.0) == 0.0
    assert theta_inv(math.inf) == math.pi
    assert_allclose(theta_inv(math.pi / 2), math.pi / 2, rtol=1e-12)
    with pytest.raises(DomainError):
        theta_inv(-1.0)


def test_theta_inv_monotone():
    ys = [theta_inv(w) for w in np.geomspace(1e-4, 1e5, 60)]
    assert np.all(np.diff(ys) > 0)


def test_bessel_i_against_scipy():
    for nu in (0, 1, 3, 6):
        for kappa in (1e-3, 0.5, 7.0, 30.0, 200.0):
            assert_allclose(bessel_i(nu, kappa), special.iv(nu, kappa), rtol=1e-13)
            assert_allclose(bessel_ie(nu, kappa), special.ive(nu, kappa), rtol=1e-13)


def test_bessel_i_zero_and_overflow():
    assert bessel_i(0, 0.0) == 1.0
    assert bessel_i(2, 0.0) == 0.0
    with pytest.raises(DomainError):
        bessel_i(1, 800.0)
    assert 0.0 < bessel_ie(1, 800.0) < 1.0


@pytest.mark.parametrize("n", range(1, 7))
def test_bessel_combination_identity(n):
    for kappa in np.geomspace(1e-4, 50.0, 25):
        a, b = bessel_i(n - 1, kappa), bessel_i(n, kappa)
        exact = a * a - b * b
        value = bessel_combination(n, kappa)
        assert value >= -1e-11
        assert_allclose(value, exact, rtol=1e-11)


def test_bessel_combination_domain():
    with pytest.raises(DomainError):
        bessel_combination(0, 1.0)
    with pytest.raises(DomainError):
        bessel_combination(1, 0.0)


def test_bessel_j_halfint_closed_forms():
    x = np.array([0.3, 2.0, 17.5])
    assert_allclose(bessel_j_halfint(0.5, x), np.sqrt(2 / (math.pi * x)) * np.sin(x), rtol=1e-13)
    assert_allclose(bessel_j_halfint(-0.5, x), np.sqrt(2 / (math.pi * x)) * np.cos(x), rtol=1e-13)
    assert_allclose(bessel_j_halfint(2.5, x), special.jv(2.5, x), rtol=1e-12)
    with pytest.raises(DomainError):
        bessel_j_halfint(1.0, x)


def test_radial_bessel_origin_and_continuity():
    for mu in (-0.5, 0.0, 0.5, 1.5):
        assert_allclose(radial_bessel(mu, 0.0), 1.0 / (2 ** mu * math.gamma(mu + 1)), rtol=1e-15)
        assert_allclose(radial_bessel(mu, 1.0 - 1e-12), radial_bessel(mu, 1.0 + 1e-12), rtol=1e-10)
    u = np.array([0.2, 3.0, 40.0])
    assert_allclose(radial_bessel(-0.5, u), math.sqrt(2 / math.pi) * np.cos(u), rtol=1e-12, atol=1e-15)
