import math
from types import SimpleNamespace

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.special import gammaln

from src.certificates import (
    TestFunction, be_lower_bound, dls_verify, elementary_min, entropy_and_dirichlet, eta_certificate,
    eta_from_min, gaussian_like_constants, gaussian_like_mass, gaussian_like_probe, gaussian_like_verify,
    groundstate_check, herbst_bound, herbst_chain, log_form_constant, sobolev_const, sobolev_exponent,
    standard_family, translated_family,
)
from src.errors import CertificationError, DomainError, VerificationError
from src.geometry import Point, heisenberg


def test_sobolev_constant_h1():
    # Q = 4, 2n + m = 3
    log_c = 0.5 * math.log(4.0) - math.log(4.0) - 0.75 * math.log(math.pi) + (gammaln(3.0) - gammaln(1.5)) / 4.0
    assert_allclose(sobolev_const(1, 1), math.exp(log_c), rtol=1e-14)
    assert sobolev_exponent(1, 1) == 4.0
    with pytest.raises(DomainError):
        sobolev_const(0, 1)


def test_be_lower_bound():
    assert_allclose(be_lower_bound(1), math.sqrt(2.0), rtol=1e-15)
    assert be_lower_bound(5) > 1.0
    with pytest.raises(DomainError):
        be_lower_bound(0)


def test_elementary_min_is_a_minimum():
    d0, fmin = elementary_min(0.7, 3.0, 1.5)
    d = np.linspace(0.05, 10.0, 20001)
    values = 0.7 * d ** 2 - 3.0 * np.log(d) + 1.5
    assert_allclose(fmin, values.min(), atol=1e-6)
    assert_allclose(d0, d[np.argmin(values)], atol=1e-3)


def test_log_form_constant():
    tau, n, m = 2.0, 1, 1
    _, fmin = elementary_min(tau, 4.0, 0.0)
    assert_allclose(log_form_constant(tau, n, m), 2.0 * math.log(sobolev_const(1, 1)) - fmin)
    # a larger tau buys a smaller constant
    assert log_form_constant(4.0, 1, 1) < log_form_constant(2.0, 1, 1)


def test_k11_formula(h1):
    K, _, _ = gaussian_like_constants(h1, rho_max=6.0, zeta_max=6.0, tol=1e-8)
    expected = 2.0 * math.log(2.0 * sobolev_const(1, 1) / (2.0 * math.e)) + 5.0
    assert_allclose(K, expected, rtol=1e-14)
    assert_allclose(K, 0.3035754, atol=1e-5)


def test_eta_from_min():
    eta = eta_from_min(5.0, 1, 1, -3.0)
    assert_allclose(eta, 2.0 * math.log(2.0 * sobolev_const(1, 1) / (math.e * 5.0)) + 3.0)
    with pytest.raises(DomainError):
        eta_certificate(4.0, heisenberg(1))


def test_strict_certificate_rejects_uncertified_minimum(h1):
    fake = SimpleNamespace(certified=False, min_value=-3.0)
    with pytest.raises(CertificationError):
        eta_certificate(5.0, h1, min_result=fake, strict=True)
    cert = eta_certificate(5.0, h1, min_result=fake)
    assert not cert.certified
    assert_allclose(cert.eta, eta_from_min(5.0, 1, 1, -3.0))


def test_test_function_validation(h1):
    with pytest.raises(DomainError):
        TestFunction("triangle")
    with pytest.raises(DomainError):
        TestFunction(width=0.0)
    f = TestFunction("ground-state", 1.0, ((1.0, 0.0), (0.0,)))
    with pytest.raises(DomainError):
        f(h1, Point.identity(h1))


def test_families(h1):
    family = standard_family(h1)
    kinds = {f.kind for f in family}
    assert kinds == {"gaussian-bump", "translated-bump", "ground-state", "dilated"}
    assert len(translated_family(h1, (1.0, 2.0))) == 2


def test_dilated_bump_keeps_haar_mass(h1):
    base = entropy_and_dirichlet(TestFunction("gaussian-bump"), "haar", h1)[2]
    dilated = entropy_and_dirichlet(TestFunction("dilated", lam=2.0), "haar", h1)[2]
    assert_allclose(dilated, base, rtol=1e-6)


def test_constant_has_no_entropy_under_heat(h1, h1_table):
    ent, dirichlet, mass = entropy_and_dirichlet(TestFunction("constant"), "heat", h1, table=h1_table)
    assert_allclose(mass, 1.0, atol=1e-3)
    assert abs(ent) < 1e-3
    assert dirichlet == 0.0


def test_groundstate_entropy_identity(h1, h1_table):
    res = groundstate_check(TestFunction("gaussian-bump", 1.0), h1, table=h1_table)
    assert res.entropy < 1e-10


@pytest.mark.slow
def test_groundstate_identities(h1):
    # table fitted to the bump's quadrature box
    res = groundstate_check(TestFunction("gaussian-bump", 1.0), h1)
    assert res.entropy < 1e-10
    assert res.dirichlet < 1e-4
    assert res.ibp < 1e-4


@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_haar_dilation_law(h1, lam):
    ent0, dir0, mass0 = entropy_and_dirichlet(TestFunction("gaussian-bump"), "haar", h1)
    ent, dirichlet, mass = entropy_and_dirichlet(TestFunction("dilated", lam=lam), "haar", h1)
    assert_allclose(mass, mass0, rtol=1e-6)
    assert_allclose(ent, ent0 + h1.Q * math.log(lam) * mass0, rtol=1e-5, atol=1e-8)
    assert_allclose(dirichlet, lam ** 2 * dir0, rtol=1e-5)


def test_log_form_inequality_on_bumps(h1):
    n, m = h1.n, h1.m
    C = sobolev_const(n, m)
    family = [TestFunction("gaussian-bump", w) for w in (0.5, 1.0, 2.0)]
    family += [TestFunction("translated-bump", 1.0, ((2.0, 0.0), (0.0,))), TestFunction("dilated", lam=3.0)]
    for f in family:
        ent, dirichlet, mass = entropy_and_dirichlet(f, "haar", h1)
        ent, dirichlet = ent / mass, dirichlet / mass
        assert ent <= (n + m) * math.log(C * dirichlet) + 1e-8, f.label
        for tau in (0.5, 2.0, 8.0):
            assert ent <= tau * dirichlet + log_form_constant(tau, n, m) + 1e-8, (f.label, tau)


def test_gaussian_like_mass_is_box_stable(h1):
    c, err = gaussian_like_mass(h1)
    wide, _ = gaussian_like_mass(h1, rho_max=24.0, zeta_max=40.0)
    assert 0.0 < c < math.inf
    assert err < 1e-8
    assert abs(wide - c) < 1e-8


def test_strict_verification_raises(h1):
    family = translated_family(h1, (0.0,), kind="translated-bump")
    with pytest.raises(VerificationError):
        dls_verify(5.0, -50.0, 1.0, family, h1, measure="haar", strict=True)
    rows = dls_verify(5.0, -50.0, 1.0, family, h1, measure="haar")
    assert rows[0].margin < 0


def test_herbst_bound_forms():
    bound = herbst_bound(0.5, 5.0, 1.0, 1.2)
    assert_allclose(bound.B, 1.7)
    assert_allclose(bound.moment(1.0), math.exp(1.7 + 1.25))
    assert bound.fernique_alpha_max == 0.25
    ode, closed = bound.envelope(2.0)
    assert ode <= closed + 1e-12

    far = herbst_chain(0.5, 5.0, 1.0, 1.2, 10.0)
    assert far.form == "gaussian"
    assert not far.flagged
    assert_allclose(far.value, math.exp(-(10.0 - 1.7) ** 2 / 5.0))

    near = herbst_chain(0.5, 5.0, 1.0, 1.2, 2.0)
    assert near.flagged
    assert near.value <= 1.0


def test_herbst_tail_decreasing():
    tails = [herbst_chain(0.3, 6.0, 1.0, 0.8, r).value for r in np.linspace(0.0, 15.0, 40)]
    assert np.all(np.diff(tails) <= 1e-15)


def test_herbst_negative_eta_does_not_lower_B():
    assert herbst_bound(-2.0, 5.0, 1.0, 0.4).B == 0.4
    with pytest.raises(DomainError):
        herbst_bound(0.1, 3.0, 1.0, 0.0)


@pytest.mark.slow
def test_eta_certificate_and_verification(h1):
    cert = eta_certificate(5.0, h1, nodes=(60, 60), workers=1)
    assert cert.certified
    rows = dls_verify(5.0, cert.eta, 1.0, standard_family(h1), h1)
    assert min(r.margin for r in rows) >= -1e-6


@pytest.mark.slow
def test_theta_four_translated_margins_decrease(h1):
    cert = eta_certificate(5.0, h1, nodes=(60, 60), workers=1)
    rows = dls_verify(4.0, cert.eta, 1.0, translated_family(h1, (2.0, 4.0, 6.0, 8.0)), h1, tol=math.inf)
    margins = [r.margin for r in rows]
    assert np.all(np.diff(margins) < 0)


@pytest.mark.slow
def test_gaussian_like_below_two_diverges(h1):
    _, margins, slope = gaussian_like_probe(1.5, h1)
    assert slope < 0
    assert margins[-1] < margins[0]


@pytest.mark.slow
def test_gaussian_like_margins_nonnegative(h1):
    rows = gaussian_like_verify(standard_family(h1), h1)
    assert min(r.margin for r in rows) >= -1e-6
