"""
Non-isotropic Heisenberg groups: first layer split into blocks P_j with weights
0 < alpha_1 < ... < alpha_k and multiplicities n_j, one-dimensional centre.

    p_1(x, z) = 2 / (4 pi)^{n+1} int_R exp(i z s - sum_j (alpha_j |P_j x|^2 / 4) s coth(alpha_j s))
                                   prod_j (alpha_j s / sinh(alpha_j s))^{n_j} ds

Every quantity depends on x only through the block norms |P_j x|.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from src.config import TOL_QUAD, TOL_ROOT
from src.errors import DomainError
from src.heatkernel import KernelEval, _from_mantissa, _panel_edges, _rcoth, _rsinh
from src.quadrature import adaptive_panels, truncation_point
from src.specialfn import theta, theta_prime

log = logging.getLogger(__name__)

POLE_GUARD = 1e-3
IMAG_TOL = 1e-10


@dataclass(frozen=True)
class AnisoSpec:
    alphas: tuple
    multiplicities: tuple

    def __post_init__(self):
        a, nj = self.alphas, self.multiplicities
        if len(a) < 1 or len(a) != len(nj):
            raise DomainError("need one multiplicity per weight")
        if any(x <= 0 for x in a) or any(b <= a0 for a0, b in zip(a, a[1:])):
            raise DomainError(f"weights must be positive and strictly increasing, got {a}")
        if any(int(k) != k or k < 1 for k in nj):
            raise DomainError(f"multiplicities must be positive integers, got {nj}")

    @classmethod
    def from_pairs(cls, pairs):
        """((alpha_1, n_1), (alpha_2, n_2), ...)"""
        return cls(tuple(float(a) for a, _ in pairs), tuple(int(k) for _, k in pairs))

    @property
    def k(self):
        return len(self.alphas)

    @property
    def n(self):
        return sum(self.multiplicities)


@dataclass(frozen=True)
class AnisoPoint:
    block_norms: tuple
    z: float

    def __post_init__(self):
        if any(b < 0 for b in self.block_norms):
            raise DomainError("block norms must be nonnegative")

    @property
    def abs_x(self):
        return math.sqrt(sum(b * b for b in self.block_norms))

    def scaled(self, t):
        """Point (x / sqrt(t), z / t)."""
        s = math.sqrt(t)
        return AnisoPoint(tuple(b / s for b in self.block_norms), self.z / t)


def _check(pt, spec):
    if len(pt.block_norms) != spec.k:
        raise DomainError(f"expected {spec.k} block norms, got {len(pt.block_norms)}")


def aniso_R(pt, spec):
    return sum(a * b * b for a, b in zip(spec.alphas, pt.block_norms))


def _weights(pt, spec):
    """c_j = alpha_j |P_j x|^2 / 4."""
    return [0.25 * a * b * b for a, b in zip(spec.alphas, pt.block_norms)]


#  STATIONARY POINT, DISTANCE, AMPLITUDE

def aniso_y(pt, spec, tol=None):
    """Root y in [0, pi/alpha_k) of sum_j alpha_j |P_j x|^2 theta(alpha_j y) = 4|z|."""
    _check(pt, spec)
    tol = TOL_ROOT if tol is None else tol
    if pt.block_norms[-1] == 0.0:
        raise DomainError("degenerate block: |P_k x| = 0 leaves the stationary point undefined")
    target = 4.0 * abs(pt.z)
    if target == 0.0:
        return 0.0
    A = [a * b * b for a, b in zip(spec.alphas, pt.block_norms)]

    def F(y):
        return sum(Aj * theta(a * y) for Aj, a in zip(A, spec.alphas)) - target

    def dF(y):
        return sum(Aj * a * theta_prime(a * y) for Aj, a in zip(A, spec.alphas))

    top = math.pi / spec.alphas[-1]
    eps = 0.5 * top
    while F(top - eps) <= 0.0:
        eps *= 0.5
        if eps < 1e-300:
            raise DomainError("stationary point too close to the pole")
    y = brentq(F, 0.0, top - eps, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    for _ in range(4):
        r = F(y)
        if abs(r) <= tol * max(1.0, target):
            break
        y = min(max(y - r / dF(y), 0.0), top * (1.0 - 1e-16))
    return y


def _ycot(u):
    if u < 1e-8:
        return 1.0
    return u * math.cos(u) / math.sin(u)


def _usin(u):
    if u < 1e-8:
        return 1.0
    return u / math.sin(u)


def aniso_distance_sq(pt, spec, y=None):
    y = aniso_y(pt, spec) if y is None else y
    quarter = abs(pt.z) * y + sum(c * _ycot(a * y) / a for c, a in zip(_weights(pt, spec), spec.alphas))
    return 4.0 * quarter


def aniso_distance(pt, spec):
    return math.sqrt(aniso_distance_sq(pt, spec))


def aniso_psi(pt, spec, y=None):
    """Amplitude Psi of the stationary-phase expansion; strictly positive."""
    y = aniso_y(pt, spec) if y is None else y
    total = sum(a * a * b * b * theta_prime(a * y) / 8.0 for a, b in zip(spec.alphas, pt.block_norms))
    return math.sqrt(total)


#  PHASE ON THE SHIFTED CONTOUR

def _phase(pt, spec, w):
    """i z w - sum_j c_j w coth(alpha_j w), the log-integrand without the amplitude."""
    w = np.asarray(w, dtype=complex)
    out = 1j * abs(pt.z) * w
    for c, a in zip(_weights(pt, spec), spec.alphas):
        if c:
            out = out - (c / a) * _rcoth(a * w)
    return out


def _amplitude(spec, w):
    out = np.ones_like(np.asarray(w, dtype=complex))
    for a, nj in zip(spec.alphas, spec.multiplicities):
        out = out * _rsinh(a * w) ** nj
    return out


def _phase_on_axis(pt, spec, y):
    """Phase at w = i y, which is real."""
    return -abs(pt.z) * y - sum(c * _ycot(a * y) / a for c, a in zip(_weights(pt, spec), spec.alphas))


def aniso_phase(pt, spec, s, y=None):
    """psi(s) = phi(s + i y) - phi(i y) with i R phi(w) the phase; returns psi."""
    y = aniso_y(pt, spec) if y is None else y
    R = aniso_R(pt, spec)
    # i R psi = phase(s + i y) - phase(i y)
    return (_phase(pt, spec, np.asarray(s) + 1j * y) - _phase_on_axis(pt, spec, y)) / (1j * R)


def aniso_phase_derivative(pt, spec, y=None):
    """psi'(0) = phi'(i y) from the closed-form derivative of w coth(alpha w)."""
    y = aniso_y(pt, spec) if y is None else y
    R = aniso_R(pt, spec)
    w = 1j * y
    total = abs(pt.z) / R + 0j
    for c, a in zip(_weights(pt, spec), spec.alphas):
        u = a * w
        if abs(u) < 1e-8:
            deriv = 0j
        else:
            deriv = 1.0 / np.tanh(u) - u / np.sinh(u) ** 2
        total += 1j * (c / R) * deriv
    return complex(total)


def aniso_phase_second(pt, spec, y=None, step=1e-3):
    """psi''(0) by Richardson-extrapolated central differences along the real direction."""
    y = aniso_y(pt, spec) if y is None else y

    def d2(h):
        vals = aniso_phase(pt, spec, np.array([-h, 0.0, h]), y=y)
        return (vals[0] - 2.0 * vals[1] + vals[2]) / (h * h)

    return complex((4.0 * d2(0.5 * step) - d2(step)) / 3.0)


def aniso_phase_second_exact(pt, spec, y=None):
    """i sum_j (alpha_j^2 |P_j x|^2 / 2R) (sin u - u cos u) / sin^3 u, u = alpha_j y."""
    y = aniso_y(pt, spec) if y is None else y
    R = aniso_R(pt, spec)
    total = sum(a * a * b * b * theta_prime(a * y) / (4.0 * R) for a, b in zip(spec.alphas, pt.block_norms))
    return 1j * total


#  KERNEL

def _kernel_on_line(pt, spec, y_shift, tol):
    """p_1 on the contour R + i y_shift as a KernelEval, plus the imaginary residual."""
    n = spec.n
    top = math.pi / spec.alphas[-1]
    if y_shift < 0.0 or y_shift > top - POLE_GUARD:
        raise DomainError(f"contour shift {y_shift} is within {POLE_GUARD} of the pole at {top}")
    E0 = _phase_on_axis(pt, spec, y_shift)

    def fun(s, magnitude=False):
        s = np.asarray(s, dtype=float)
        plus = np.exp(_phase(pt, spec, s + 1j * y_shift) - E0) * _amplitude(spec, s + 1j * y_shift)
        minus = np.exp(_phase(pt, spec, -s + 1j * y_shift) - E0) * _amplitude(spec, -s + 1j * y_shift)
        if magnitude:
            return np.array([np.abs(plus)])
        total = plus + minus
        return np.array([total.real, total.imag])

    upper = truncation_point(lambda s: float(fun(np.array([s]), magnitude=True)[0]), start=2.0,
                             threshold=1e-2 * tol)
    zeta = abs(pt.z)
    period = 2.0 * math.pi / zeta if zeta > 0 else 2.0
    R = aniso_R(pt, spec)
    first = min(0.25, 1.0 / (1.0 + zeta), 1.0 / math.sqrt(1.0 + R))
    vals, err = adaptive_panels(fun, _panel_edges(first, period, upper), tol=tol)
    log_norm = math.log(2.0) - (n + 1) * math.log(4.0 * math.pi) + E0
    return _from_mantissa(vals[0], err, log_norm, "shifted-1d"), float(abs(vals[1]))


def aniso_kernel(pt, spec, t=1.0, tol=None, y_shift=None):
    """
    p_t at a block point, computed on the contour through the stationary point
    (y_shift=None) or any admissible shift; the real line is y_shift=0.
    """
    _check(pt, spec)
    if not t > 0:
        raise DomainError(f"time must be positive, got {t}")
    tol = TOL_QUAD if tol is None else tol
    p = pt.scaled(t)
    if y_shift is None:
        y_shift = aniso_y(p, spec) if p.block_norms[-1] > 0.0 else 0.0
    ev, imag = _kernel_on_line(p, spec, y_shift, tol)
    if imag > max(IMAG_TOL, 10.0 * ev.abs_error):
        log.warning("imaginary residual %.2e on contour y=%.4g", imag, y_shift)
    if t == 1.0:
        return ev
    return ev.rescaled(-(spec.n + 1) * math.log(t))


def contour_shift_check(pt, spec, y_shift, tol=None):
    """Relative difference between p_1 on the real line and on R + i y_shift."""
    _check(pt, spec)
    top = math.pi / spec.alphas[-1]
    if top - y_shift < POLE_GUARD:
        raise DomainError(f"contour shift {y_shift} is within {POLE_GUARD} of the pole at {top}")
    tol = TOL_QUAD if tol is None else tol
    real, _ = _kernel_on_line(pt, spec, 0.0, tol)
    if y_shift == 0.0:
        return 0.0
    shifted, _ = _kernel_on_line(pt, spec, y_shift, tol)
    return abs(math.exp(shifted.log_abs - real.log_abs) * shifted.sign * real.sign - 1.0)


#  EXPANSION

def leading_log(pt, spec):
    """log of 2 sqrt(pi) e^{-d^2/4} / ((4 pi)^{n+1} Psi) prod_j (alpha_j y / sin(alpha_j y))^{n_j}."""
    y = aniso_y(pt, spec)
    d2 = aniso_distance_sq(pt, spec, y=y)
    amp = sum(nj * math.log(_usin(a * y)) for a, nj in zip(spec.alphas, spec.multiplicities))
    return math.log(2.0 * math.sqrt(math.pi)) - 0.25 * d2 - (spec.n + 1) * math.log(4.0 * math.pi) \
        - math.log(aniso_psi(pt, spec, y=y)) + amp


def ray_points(spec, R_values, omega, fractions=None):
    """Points with aniso R given, alpha_j |P_j x|^2 = fraction_j R and |z| = omega R."""
    fractions = fractions or [1.0 / spec.k] * spec.k
    points = []
    for R in R_values:
        norms = tuple(math.sqrt(f * R / a) for f, a in zip(fractions, spec.alphas))
        points.append(AnisoPoint(norms, omega * R))
    return points


@dataclass
class ExpansionReport:
    R: np.ndarray
    ratio: np.ndarray
    scaled_error: np.ndarray

    @property
    def bound(self):
        return float(np.max(np.abs(self.scaled_error)))


def expansion_check(points, spec, C=10.0, tol=None):
    """Ratio of p_1 to the stationary-phase leading term along a sequence of points."""
    R, ratios = [], []
    for pt in points:
        Rv = aniso_R(pt, spec)
        if abs(pt.z) / Rv > C or pt.block_norms[-1] ** 2 / Rv < 1.0 / C:
            log.warning("point with R=%.4g leaves the admissible zone", Rv)
        ev = aniso_kernel(pt, spec, tol=tol)
        R.append(Rv)
        ratios.append(ev.sign * math.exp(ev.log_abs - leading_log(pt, spec)))
    R = np.array(R)
    ratios = np.array(ratios)
    return ExpansionReport(R, ratios, (ratios - 1.0) * R)


#  POTENTIAL ALONG A RAY

def _log_p(norms, z, spec, tol):
    return aniso_kernel(AnisoPoint(tuple(norms), z), spec, tol=tol).log_abs


def aniso_log_terms(pt, spec, step=1e-2, tol=None):
    """
    (xi, |grad xi|^2, Delta xi) at a block point from finite differences of xi = log p_1 in
    (|P_j x|, z), using for block-radial functions

        |grad f|^2 = sum_j f_j^2 + (alpha_j^2 rho_j^2 / 4) f_z^2
        Delta f   = sum_j f_jj + ((2 n_j - 1) / rho_j) f_j + (alpha_j^2 rho_j^2 / 4) f_zz
    """
    rho = np.array(pt.block_norms, dtype=float)
    if np.any(rho <= 0.0):
        raise DomainError("aniso_log_terms needs every block norm positive")
    z = abs(pt.z)
    xi0 = _log_p(rho, z, spec, tol)

    def first_second(shift_fn, h):
        plus = _log_p(*shift_fn(h), spec, tol)
        minus = _log_p(*shift_fn(-h), spec, tol)
        return (plus - minus) / (2.0 * h), (plus - 2.0 * xi0 + minus) / (h * h)

    def extrapolated(shift_fn, h):
        d1a, d2a = first_second(shift_fn, h)
        d1b, d2b = first_second(shift_fn, 0.5 * h)
        return (4.0 * d1b - d1a) / 3.0, (4.0 * d2b - d2a) / 3.0

    def z_shift(h):
        # xi is even in z, so reflect through 0
        return rho, abs(z + h)

    fz, fzz = extrapolated(z_shift, step)
    grad_sq, lap = 0.0, 0.0
    zfac = sum(a * a * r * r / 4.0 for a, r in zip(spec.alphas, rho))
    for j, (nj, r) in enumerate(zip(spec.multiplicities, rho)):
        def rho_shift(h, j=j):
            shifted = rho.copy()
            shifted[j] += h
            return shifted, z

        h = min(step, 0.25 * r)
        fj, fjj = extrapolated(rho_shift, h)
        grad_sq += fj * fj
        lap += fjj + (2 * nj - 1) / r * fj
    grad_sq += zfac * fz * fz
    lap += zfac * fzz
    return xi0, grad_sq, lap


@dataclass
class AnisoWReport:
    C: float
    R: np.ndarray
    distance: np.ndarray
    W: np.ndarray
    coefficient: float
    intercept: float


def aniso_w_probe(C, spec, points, tol=None):
    """
    W_{1,C} along block points; fits W + log|x| = s d^2 + c and reports 16 s,
    expected to approach C - 4 in the admissible zone.
    """
    R, d, W, absx = [], [], [], []
    for pt in points:
        xi, grad_sq, lap = aniso_log_terms(pt, spec, tol=tol)
        W.append(0.25 * C * grad_sq + 0.5 * C * lap + xi)
        R.append(aniso_R(pt, spec))
        d.append(aniso_distance(pt, spec))
        absx.append(pt.abs_x)
    R, d, W, absx = map(np.array, (R, d, W, absx))
    design = np.column_stack([d * d, np.ones_like(d)])
    (s, c), *_ = np.linalg.lstsq(design, W + np.log(absx), rcond=None)
    return AnisoWReport(C, R, d, W, 16.0 * float(s), float(c))
