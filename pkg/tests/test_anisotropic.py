import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import trapezoid

from src.anisotropic import (
    AnisoPoint, AnisoSpec, aniso_distance, aniso_kernel, aniso_phase, aniso_phase_derivative,
    aniso_phase_second, aniso_phase_second_exact, aniso_psi, aniso_R, aniso_w_probe, aniso_y,
    contour_shift_check, expansion_check, leading_log, ray_points,
)
from src.errors import DomainError
from src.geometry import RadialProfile, heisenberg, sr_distance
from src.heatkernel import kernel
from src.specialfn import theta, theta_inv, theta_prime

TWO_BLOCKS = AnisoSpec.from_pairs(((1.0, 2), (2.0, 1)))


def _theta_sum(pt, spec, y):
    return sum(a * b * b * theta(a * y) for a, b in zip(spec.alphas, pt.block_norms))


def test_spec_validation():
    assert TWO_BLOCKS.n == 3
    assert TWO_BLOCKS.k == 2
    with pytest.raises(DomainError):
        AnisoSpec((2.0, 1.0), (1, 1))
    with pytest.raises(DomainError):
        AnisoSpec((1.0,), (0,))
    with pytest.raises(DomainError):
        AnisoSpec((1.0, 2.0), (1,))
    with pytest.raises(DomainError):
        AnisoPoint((-1.0,), 0.0)


def test_y_on_axis_and_degenerate_block():
    assert aniso_y(AnisoPoint((1.0, 1.0), 0.0), TWO_BLOCKS) == 0.0
    with pytest.raises(DomainError):
        aniso_y(AnisoPoint((1.0, 0.0), 1.0), TWO_BLOCKS)
    with pytest.raises(DomainError):
        aniso_y(AnisoPoint((1.0,), 1.0), TWO_BLOCKS)


def test_y_reduces_to_isotropic():
    spec = AnisoSpec((1.0,), (2,))
    pt = AnisoPoint((1.6,), 2.3)
    assert_allclose(aniso_y(pt, spec), theta_inv(4.0 * 2.3 / 1.6 ** 2), rtol=1e-12)


def test_y_residual_random_specs():
    rng = np.random.default_rng(3)
    for _ in range(10):
        alphas = tuple(np.sort(rng.uniform(0.5, 3.0, 3)))
        spec = AnisoSpec(alphas, (1, 2, 1))
        pt = AnisoPoint(tuple(rng.uniform(0.2, 2.0, 3)), rng.uniform(0.0, 20.0))
        y = aniso_y(pt, spec)
        assert 0.0 <= y < math.pi / alphas[-1]
        assert abs(_theta_sum(pt, spec, y) - 4.0 * abs(pt.z)) <= 1e-12 * max(1.0, 4.0 * abs(pt.z))


def test_distance_limits_and_reduction():
    pt = AnisoPoint((1.0, 0.5), 0.0)
    assert_allclose(aniso_distance(pt, TWO_BLOCKS), pt.abs_x, rtol=1e-14)
    spec = AnisoSpec((1.0,), (1,))
    for norm, z in [(1.0, 0.3), (2.0, 5.0), (0.5, 0.01)]:
        iso = sr_distance(RadialProfile(0.25 * norm * norm, z))
        assert_allclose(aniso_distance(AnisoPoint((norm,), z), spec), iso, rtol=1e-12)


def test_distance_homogeneous():
    pt = AnisoPoint((0.7, 1.1), 1.9)
    lam = 2.5
    big = AnisoPoint(tuple(lam * b for b in pt.block_norms), lam * lam * pt.z)
    assert_allclose(aniso_distance(big, TWO_BLOCKS), lam * aniso_distance(pt, TWO_BLOCKS), rtol=1e-12)


def test_psi_limits():
    pt = AnisoPoint((1.0, 0.5), 0.0)
    expected = math.sqrt((1.0 * 1.0 + 4.0 * 0.25) / 12.0)
    assert_allclose(aniso_psi(pt, TWO_BLOCKS), expected, rtol=1e-12)
    spec = AnisoSpec((1.0,), (1,))
    pt = AnisoPoint((6.0,), 40.0)
    y = aniso_y(pt, spec)
    assert_allclose(aniso_psi(pt, spec) ** 2, aniso_R(pt, spec) * theta_prime(y) / 8.0, rtol=1e-13)


def test_psi_positive_near_pole():
    top = math.pi / TWO_BLOCKS.alphas[-1]
    for y in np.linspace(0.0, top - 1e-3, 30):
        assert aniso_psi(AnisoPoint((1.0, 1.0), 0.0), TWO_BLOCKS, y=y) > 0.0


@pytest.mark.parametrize("n, norm, z", [(1, 0.0, 0.0), (1, 1.2, 0.4), (2, 1.7, 0.9), (2, 3.0, 4.0), (3, 0.5, 2.5)])
def test_kernel_reduces_to_isotropic(n, norm, z):
    iso = kernel(RadialProfile(0.25 * norm * norm, z), 1.0, heisenberg(n))
    an = aniso_kernel(AnisoPoint((norm,), z), AnisoSpec((1.0,), (n,)))
    assert_allclose(math.exp(an.log_abs - iso.log_abs), 1.0, rtol=1e-9)


def test_kernel_even_in_z():
    a = aniso_kernel(AnisoPoint((0.8, 0.6), 1.3), TWO_BLOCKS)
    b = aniso_kernel(AnisoPoint((0.8, 0.6), -1.3), TWO_BLOCKS)
    assert_allclose(a.value, b.value, rtol=1e-12)


def test_kernel_at_origin_against_trapezoid():
    spec = AnisoSpec.from_pairs(((1.0, 1), (2.0, 1)))
    s = np.linspace(-60.0, 60.0, 240001)
    with np.errstate(invalid="ignore"):
        amp = np.where(s == 0.0, 1.0, (s / np.sinh(s)) * (2.0 * s / np.sinh(2.0 * s)))
    oracle = 2.0 / (4.0 * math.pi) ** 3 * trapezoid(amp, s)
    ev = aniso_kernel(AnisoPoint((0.0, 0.0), 0.0), spec)
    assert_allclose(ev.value, oracle, rtol=1e-9)


def test_kernel_time_scaling():
    pt = AnisoPoint((0.9, 0.4), 0.7)
    at_t = aniso_kernel(pt, TWO_BLOCKS, t=2.0)
    at_one = aniso_kernel(pt.scaled(2.0), TWO_BLOCKS)
    assert_allclose(at_t.value, 2.0 ** -(TWO_BLOCKS.n + 1) * at_one.value, rtol=1e-12)
    with pytest.raises(DomainError):
        aniso_kernel(pt, TWO_BLOCKS, t=0.0)


@pytest.mark.parametrize("fraction", [0.0, 0.5, 1.0])
def test_contour_shift(fraction):
    pt = AnisoPoint((1.0, 1.2), 1.0)
    y = aniso_y(pt, TWO_BLOCKS)
    assert contour_shift_check(pt, TWO_BLOCKS, fraction * y) <= 1e-8


def test_contour_shift_rejects_pole():
    pt = AnisoPoint((1.0, 1.2), 1.0)
    with pytest.raises(DomainError):
        contour_shift_check(pt, TWO_BLOCKS, math.pi / 2.0 - 1e-4)


def test_phase_is_stationary_at_the_shift():
    pt = AnisoPoint((1.0, 1.2), 3.0)
    y = aniso_y(pt, TWO_BLOCKS)
    assert abs(aniso_phase_derivative(pt, TWO_BLOCKS, y=y)) <= 1e-10
    assert abs(aniso_phase(pt, TWO_BLOCKS, 0.0, y=y)) <= 1e-14
    s = np.array([-3.0, -0.5, -1e-2, 1e-2, 0.5, 3.0])
    assert np.all(aniso_phase(pt, TWO_BLOCKS, s, y=y).imag > 0.0)


def test_phase_second_derivative():
    pt = AnisoPoint((1.0, 1.2), 3.0)
    exact = aniso_phase_second_exact(pt, TWO_BLOCKS)
    assert exact.real == 0.0 and exact.imag > 0.0
    assert abs(aniso_phase_second(pt, TWO_BLOCKS) - exact) <= 1e-7 * abs(exact)


def test_leading_term_matches_isotropic_stationary_phase():
    # k = 1, alpha = 1: the block expansion and p_1 agree to O(1/R)
    spec = AnisoSpec((1.0,), (1,))
    gaps = []
    for R in (25.0, 100.0):
        pt = AnisoPoint((math.sqrt(R),), R)
        gaps.append(abs(aniso_kernel(pt, spec).log_abs - leading_log(pt, spec)))
    assert gaps[1] < gaps[0]
    assert gaps[1] < 0.05


def test_expansion_along_admissible_ray():
    rep = expansion_check(ray_points(TWO_BLOCKS, (25.0, 50.0, 100.0, 200.0), 1.0), TWO_BLOCKS)
    assert np.all(rep.ratio > 0.0)
    assert np.all(np.abs(rep.ratio - 1.0) < 0.5)
    # (ratio - 1) R stays bounded as R doubles
    assert abs(rep.scaled_error[-1]) <= 2.0 * abs(rep.scaled_error[0]) + 1.0


@pytest.mark.slow
def test_w_asymptotics_in_admissible_zone():
    points = ray_points(TWO_BLOCKS, np.geomspace(25.0, 200.0, 6), 1.0)
    rep = aniso_w_probe(5.0, TWO_BLOCKS, points)
    assert_allclose(rep.coefficient, 1.0, rtol=0.3)
