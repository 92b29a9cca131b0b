import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src import potential
from src.errors import DomainError, QuadratureError
from src.geometry import Point, RadialProfile, heisenberg, horizontal_grad_sq, horizontal_laplacian, spec_for
from src.heatkernel import kernel_at
from src.potential import (
    SIGNIFICANCE_LIMIT, TAIL_LAMBDAS, PotentialParams, WComponents, WGrid, boundedness_probe, default_box,
    min_w, ray_lower_bound, ray_verdict, w_components, w_potential, zone_law,
)


def test_params_validation():
    with pytest.raises(DomainError):
        PotentialParams(0.0)
    with pytest.raises(DomainError):
        PotentialParams(5.0, t=-1.0)


def test_affine_in_C(h1):
    prof = RadialProfile(3.0, 2.0)
    w = [w_potential(prof, PotentialParams(C), h1) for C in (4.5, 5.25, 6.0)]
    assert_allclose(w[1], 0.5 * (w[0] + w[2]), atol=1e-10)
    comp = w_components(prof, h1)
    assert_allclose(comp.w(5.25), w[1], rtol=1e-14)


def test_time_scaling(h1):
    prof = RadialProfile(1.2, 0.8)
    t, C = 2.0, 5.0
    lhs = w_potential(prof, PotentialParams(C, t), h1)
    rhs = w_potential(prof.scaled(t), PotentialParams(C / t), h1) - 2.0 * math.log(t)
    assert_allclose(lhs, rhs, rtol=1e-12)


@pytest.mark.parametrize("x, z", [([0.8, -0.3], [0.5]), ([1.5, 1.0], [-2.0]), ([0.2, 2.2], [0.7])])
def test_radial_formula_matches_frame_assembly(h1, x, z):
    """W from radial derivatives against finite differences of log p_1 along the frame."""
    C = 5.0
    g = Point(np.array(x), np.array(z))

    def xi(p):
        return np.log(kernel_at(h1, p))

    grad_sq = horizontal_grad_sq(h1, xi, g, step=1e-2, richardson=True)
    lap = horizontal_laplacian(h1, xi, g, step=1e-2, richardson=True)
    direct = 0.25 * C * grad_sq + 0.5 * C * lap + xi(g)
    assert_allclose(w_potential(g.profile(), PotentialParams(C), h1), direct, atol=1e-5)


def test_w_grid_combination():
    grid = WGrid(np.array([0.0, 1.0]), np.array([0.0]), np.array([[1.0], [2.0]]), np.array([[0.5], [-1.0]]))
    assert_allclose(grid.w(3.0), [[3.5], [5.0]])


def test_default_box_grows_near_four():
    assert default_box(12.0) == (8.0, 8.0 / math.pi)
    assert default_box(4.5)[0] == 64.0


def test_min_w_needs_theta_above_four(h1):
    with pytest.raises(DomainError):
        min_w(4.0, h1)


@pytest.mark.parametrize("spec", [heisenberg(1), heisenberg(2), spec_for(2, 3)], ids=["h1", "h2", "n2m3"])
@pytest.mark.parametrize("R", [0.0, 1.0, 4.0])
def test_w_on_the_centre_plane(spec, R):
    """p_{0,1} vanishes at zeta = 0; that must not read as lost significance."""
    comp = w_components(RadialProfile(R, 0.0), spec)
    assert comp.method != "zone-surrogate"
    assert comp.rel_error < SIGNIFICANCE_LIMIT
    assert math.isfinite(comp.w(5.0))
    near = w_components(RadialProfile(R, 1e-4), spec)
    assert_allclose(comp.w(5.0), near.w(5.0), atol=1e-3)


def test_coarse_min_w_covers_the_centre_plane(h1):
    res = min_w(6.0, h1, box=(4.0, 2.0), nodes=(5, 5), workers=1, grow=0, refine=False)
    W = res.grid.w(6.0)
    assert res.grid.zeta_grid[0] == 0.0
    assert np.all(np.isfinite(W))
    assert res.min_value == res.grid_min == W.min()
    assert 0.0 <= res.argmin.R <= 4.0 and 0.0 <= res.argmin.zeta <= 2.0
    assert res.refine_failures == 0


def test_refinement_survives_quadrature_failures(h1, monkeypatch, caplog):
    def flaky(prof, spec, tol=None, **kwargs):
        if prof.R > 2.5:
            raise QuadratureError("lost significance")
        return WComponents(0.0, (prof.R - 1.0) ** 2 + (prof.zeta - 0.5) ** 2, "reduced-1d", 0.0)

    monkeypatch.setattr(potential, "w_components", flaky)
    grid = WGrid(np.array([0.0, 1.0, 2.0, 3.0]), np.array([0.0, 1.0]), np.zeros((4, 2)),
                 np.array([[5.0, 5.0], [1.0, 1.0], [4.0, 4.0], [0.0, 0.0]]))
    with caplog.at_level("WARNING"):
        value, at, failed = potential._refine(5.0, h1, grid, 1e-10)
    assert failed
    assert "refinement skips" in caplog.text
    assert value < 1e-8
    assert_allclose([at.R, at.zeta], [1.0, 0.5], atol=1e-4)


def test_zone_law_off_and_on_axis(h1):
    law, scale = zone_law(5.0, RadialProfile(4.0, 0.0), h1)
    assert_allclose(law, 16.0 / 16.0 - math.log(4.0))
    assert scale == 0.25
    _, scale = zone_law(5.0, RadialProfile(0.0, 3.0), h1)
    assert scale == pytest.approx(1.0 / 3.0)
    with pytest.raises(DomainError):
        zone_law(5.0, RadialProfile(0.0, 0.0), h1)


def _law_on_ray(theta, spec, base):
    pairs = [zone_law(theta, base.dilated(lam), spec) for lam in TAIL_LAMBDAS]
    return np.array([v for v, _ in pairs]), np.array([e for _, e in pairs])


@pytest.mark.parametrize("base", [RadialProfile(8.0, 2.0), RadialProfile(0.0, 3.0)])
def test_ray_bound_follows_the_zone_law(h1, base):
    law, scale = _law_on_ray(5.0, h1, base)
    W = law + 2.0 + 0.5 * scale
    bound = ray_lower_bound(5.0, h1, base, TAIL_LAMBDAS, W)
    assert bound <= W.min() + 1e-12
    assert_allclose(bound, W[0], atol=1e-6)


def test_ray_bound_refuses_a_dip_the_law_cannot_explain(h1, caplog):
    base = RadialProfile(8.0, 2.0)
    law, scale = _law_on_ray(5.0, h1, base)
    W = law + 2.0
    W[-1] -= 5.0
    with caplog.at_level("WARNING"):
        assert ray_lower_bound(5.0, h1, base, TAIL_LAMBDAS, W) == -math.inf
    assert "zone law misses" in caplog.text


def test_ray_bound_refuses_a_falling_law(h1):
    base = RadialProfile(8.0, 2.0)
    law, _ = _law_on_ray(3.5, h1, base)
    assert ray_lower_bound(3.5, h1, base, TAIL_LAMBDAS, law + 1.0) == -math.inf
    W = law + 1.0
    W[1] = math.nan
    assert ray_lower_bound(5.0, h1, base, TAIL_LAMBDAS, W) == -math.inf


def test_unclosed_tail_leaves_minimum_uncertified(h1, monkeypatch):
    monkeypatch.setattr(potential, "tail_lower_bound", lambda *args, **kwargs: -math.inf)
    res = min_w(6.0, h1, box=(4.0, 2.0), nodes=(5, 5), workers=1, grow=1, refine=False)
    assert not res.certified
    assert res.tail_margin == -math.inf
    assert res.box == (6.0, 3.0)


def test_ray_verdict():
    assert ray_verdict(1.0, 0.01, 1500.0, False) == "stabilizing"
    assert ray_verdict(-0.1, 0.001, 1500.0, True) == "diverges"
    # C = 4.03: small but resolved
    assert ray_verdict(0.03, 0.001, 1500.0, False) == "stabilizing"
    # C = 4: nothing resolved, W still falling
    assert ray_verdict(0.001, 1e-5, 1500.0, True) == "diverges"
    assert ray_verdict(0.03, 0.02, 1500.0, False) == "inconclusive"
    assert ray_verdict(0.03, 0.02, 1500.0, True) == "diverges"


def test_boundedness_needs_three_points(h1):
    with pytest.raises(DomainError):
        boundedness_probe(5.0, h1, points=2)


@pytest.mark.slow
def test_boundedness_threshold(h1):
    assert boundedness_probe(4.0, h1, workers=1).verdict == "diverges"
    assert boundedness_probe(3.9, h1, workers=1).verdict == "diverges"
    above = boundedness_probe(5.0, h1, workers=1)
    assert above.verdict == "stabilizing"
    assert_allclose(above.coefficient, 1.0, rtol=0.2)
    assert above.stderr < 0.1 * above.coefficient


@pytest.mark.slow
def test_min_w_certified(h1):
    res = min_w(5.0, h1, nodes=(60, 60), workers=1)
    assert res.certified
    assert res.tail_margin >= 1.0
    assert res.min_value <= res.grid_min
    assert np.all(res.grid.w(5.0) >= res.min_value - 1e-9)
