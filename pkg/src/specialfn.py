"""
Scalar special functions used by every other module:
  theta and its inverse, modified Bessel I_nu, half-integer Bessel J_nu,
  the radial Bessel kernel u^{-mu} J_mu(u), and the four-term combination J(kappa).
"""
import math
import numpy as np
from scipy import special
from scipy.optimize import brentq

from src.config import TOL_ROOT
from src.errors import DomainError

SERIES_CUTOFF = 1e-3
POLE_CUTOFF = 1e-3
POLE_BRANCH_OMEGA = 1e6
BESSEL_SERIES_MAX = 15.0


def _flat(y):
    arr = np.asarray(y, dtype=float)
    return np.atleast_1d(arr).astype(float, copy=True), arr.ndim == 0


def _unflat(out, scalar):
    return float(out[0]) if scalar else out


#  THETA AND ITS INVERSE

def theta(y):
    """theta(y) = (2y - sin 2y) / (2 sin^2 y) on (-pi, pi); odd, strictly increasing."""
    a, scalar = _flat(y)
    if not np.all(np.isfinite(a)) or np.any(np.abs(a) >= math.pi):
        raise DomainError(f"theta needs |y| < pi, got {y}")
    s = np.abs(a)
    out = np.empty_like(s)

    small = s < SERIES_CUTOFF
    pole = (math.pi - s) < POLE_CUTOFF
    mid = ~(small | pole)

    u = s[small]
    u2 = u * u
    out[small] = u * (2.0 / 3.0 + u2 * (4.0 / 45.0 + u2 * 4.0 / 315.0))

    v = s[mid]
    out[mid] = (2.0 * v - np.sin(2.0 * v)) / (2.0 * np.sin(v) ** 2)

    # y = pi - eps: sin y = sin eps, so keep eps exact
    eps = math.pi - s[pole]
    out[pole] = (2.0 * math.pi - 2.0 * eps + np.sin(2.0 * eps)) / (2.0 * np.sin(eps) ** 2)

    return _unflat(np.sign(a) * out, scalar)


def theta_prime(y):
    """theta'(y) = 2 (sin y - y cos y) / sin^3 y; even and positive."""
    a, scalar = _flat(y)
    if np.any(np.abs(a) >= math.pi):
        raise DomainError(f"theta_prime needs |y| < pi, got {y}")
    s = np.abs(a)
    out = np.empty_like(s)
    small = s < SERIES_CUTOFF
    u2 = s[small] ** 2
    out[small] = 2.0 / 3.0 + u2 * (4.0 / 15.0 + u2 * 4.0 / 63.0)
    v = s[~small]
    out[~small] = 2.0 * (np.sin(v) - v * np.cos(v)) / np.sin(v) ** 3
    return _unflat(out, scalar)


def theta_inv_complement(omega):
    """eps = pi - theta^{-1}(omega) for large omega, solved in eps to keep sin(y) exact."""
    if not omega >= 1.0:
        raise DomainError(f"pole branch needs omega >= 1, got {omega}")
    if math.isinf(omega):
        return 0.0
    eps0 = math.sqrt(math.pi / omega)

    def f(eps):
        return (2.0 * math.pi - 2.0 * eps + math.sin(2.0 * eps)) / (2.0 * math.sin(eps) ** 2) - omega

    lo, hi = 0.5 * eps0, min(2.0 * eps0, math.pi / 2)
    while f(hi) > 0.0:
        hi = min(2.0 * hi, math.pi - 1e-12)
    while f(lo) < 0.0:
        lo *= 0.5
    return brentq(f, lo, hi, xtol=1e-16 * eps0, rtol=4 * np.finfo(float).eps)


def theta_inv(omega, tol=None):
    """y in [0, pi) with theta(y) = omega. omega = inf maps to pi."""
    tol = TOL_ROOT if tol is None else tol
    omega = float(omega)
    if math.isnan(omega) or omega < 0.0:
        raise DomainError(f"theta_inv needs omega >= 0, got {omega}")
    if math.isinf(omega):
        return math.pi
    if omega == 0.0:
        return 0.0
    if omega > POLE_BRANCH_OMEGA:
        return math.pi - theta_inv_complement(omega)

    if omega < SERIES_CUTOFF:
        y = 1.5 * omega
    else:
        eps = min(1.0, 0.5 * math.sqrt(math.pi / omega))
        while theta(math.pi - eps) < omega:
            eps *= 0.5
        y = brentq(lambda v: theta(v) - omega, 0.0, math.pi - eps, xtol=1e-8)

    # Newton polish; theta is convex on [0, pi) so iterates stay in range
    for _ in range(8):
        r = theta(y) - omega
        if abs(r) <= tol * max(1.0, omega):
            break
        y = min(max(y - r / theta_prime(y), 0.0), math.pi - 1e-15)
    return y


#  MODIFIED BESSEL I_nu

def _bessel_i_series(nu, kappa):
    half = 0.5 * kappa
    term = math.exp(nu * math.log(half) - special.gammaln(nu + 1.0))
    total = term
    q = half * half
    k = 0
    while term > 1e-17 * total and k < 500:
        k += 1
        term *= q / (k * (k + nu))
        total += term
    return total


def bessel_i(nu, kappa):
    """Modified Bessel function of the first kind, I_nu(kappa), nu >= 0, kappa >= 0."""
    if nu < 0 or kappa < 0:
        raise DomainError(f"bessel_i needs nu, kappa >= 0, got ({nu}, {kappa})")
    if kappa == 0.0:
        return 1.0 if nu == 0 else 0.0
    if kappa <= BESSEL_SERIES_MAX:
        return _bessel_i_series(nu, kappa)
    if kappa > 700.0:
        raise DomainError(f"I_{nu}({kappa}) overflows double precision; use bessel_ie")
    return float(special.ive(nu, kappa)) * math.exp(kappa)


def bessel_ie(nu, kappa):
    """Exponentially scaled e^{-kappa} I_nu(kappa); finite for every kappa."""
    if nu < 0 or kappa < 0:
        raise DomainError(f"bessel_ie needs nu, kappa >= 0, got ({nu}, {kappa})")
    if kappa == 0.0:
        return 1.0 if nu == 0 else 0.0
    if kappa <= BESSEL_SERIES_MAX:
        return _bessel_i_series(nu, kappa) * math.exp(-kappa)
    return float(special.ive(nu, kappa))


def bessel_combination(n, kappa):
    """2 I_{n-1} I_{n+1} - I_n^2 + (4n/kappa) I_{n-1} I_n - I_{n-1}^2, which equals I_{n-1}^2 - I_n^2."""
    if n < 1 or not kappa > 0:
        raise DomainError(f"bessel_combination needs n >= 1 and kappa > 0, got ({n}, {kappa})")
    a = bessel_i(n - 1, kappa)
    b = bessel_i(n, kappa)
    c = bessel_i(n + 1, kappa)
    return 2.0 * a * c - b * b + (4.0 * n / kappa) * a * b - a * a


#  BESSEL J OF HALF-INTEGER ORDER, RADIAL KERNEL

def _is_half_integer(nu):
    return abs(2.0 * nu - round(2.0 * nu)) < 1e-12 and int(round(2.0 * nu)) % 2 != 0


def bessel_j_halfint(nu, x):
    """J_nu(x) for nu in {-1/2, 1/2, 3/2, ...} through spherical Bessel closed forms."""
    if not _is_half_integer(nu) or nu < -0.5:
        raise DomainError(f"bessel_j_halfint needs a half-integer order >= -1/2, got {nu}")
    xs, scalar = _flat(x)
    if np.any(xs < 0):
        raise DomainError("bessel_j_halfint needs x >= 0")
    out = np.empty_like(xs)
    zero = xs == 0.0
    pos = ~zero
    if nu == -0.5:
        out[zero] = math.inf
        out[pos] = np.sqrt(2.0 / (math.pi * xs[pos])) * np.cos(xs[pos])
    else:
        ell = int(round(nu - 0.5))
        out[zero] = 0.0
        out[pos] = np.sqrt(2.0 * xs[pos] / math.pi) * special.spherical_jn(ell, xs[pos])
    return _unflat(out, scalar)


def radial_bessel(mu, u):
    """Lambda_mu(u) = u^{-mu} J_mu(u), entire in u; Lambda_mu(0) = 1 / (2^mu Gamma(mu+1))."""
    us, scalar = _flat(u)
    out = np.empty_like(us)
    small = us <= 1.0
    if np.any(small):
        q = (0.5 * us[small]) ** 2
        k = np.arange(18)[:, None]
        terms = (-q[None, :]) ** k * special.rgamma(k + 1.0) * special.rgamma(k + mu + 1.0)
        out[small] = terms.sum(axis=0) / 2.0 ** mu
    big = ~small
    if np.any(big):
        ub = us[big]
        if _is_half_integer(mu):
            j = bessel_j_halfint(mu, ub)
        else:
            j = special.jv(mu, ub)
        out[big] = j * ub ** (-mu)
    return _unflat(out, scalar)
