"""
Heat kernel p_t of an H-type group on radial profiles (R, |z|), R = |x|^2 / 4.

    p_t(x, z) = t^{-n-m} h(R/t, |z|/t)

h and its mixed derivatives d_R^k1 d_zeta^k2 h are computed along two routes:

  reduced-1d   the m-dimensional Fourier integral collapsed to one radial integral
               with the kernel Lambda_nu(u) = u^{-nu} J_nu(u), nu = m/2 - 1
  shifted-1d   odd m only: the m = 1 line integral moved onto R + i*y, y the saddle
               of the log-integrand, with odd m >= 3 reached through
               f_{m+2} = -(2 pi / zeta) f_m'

Both return a mantissa and a log scale, so e^{-d^2/4} never underflows.
"""
import logging
import math
import time
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.optimize import brentq
from scipy.special import comb, gammaln

from src import db
from src.config import GRID, TOL_QUAD
from src.errors import DomainError
from src.geometry import RadialProfile, radial_coordinates, sr_distance, structure_matrices
from src.quadrature import adaptive_panels, parallel_map, tensor_rule, truncation_point
from src.specialfn import bessel_ie, radial_bessel, theta, theta_inv

log = logging.getLogger(__name__)

METHODS = ("auto", "reduced-1d", "shifted-1d", "finite-difference-fallback")
ZONES = ("Z1", "Z2", "Z3", "Z4")
LINE_SWITCH = 1.0
FD_STEP = 1e-2


@dataclass(frozen=True)
class DerivOrder:
    k1: int = 0
    k2: int = 0

    def __post_init__(self):
        if self.k1 < 0 or self.k2 < 0 or self.k1 + self.k2 > 4:
            raise DomainError(f"derivative order needs k1, k2 >= 0 and k1 + k2 <= 4, got ({self.k1}, {self.k2})")

    @property
    def total(self):
        return self.k1 + self.k2


def as_order(order):
    if isinstance(order, DerivOrder):
        return order
    k1, k2 = order
    return DerivOrder(int(k1), int(k2))


@dataclass(frozen=True)
class KernelEval:
    """Value of p_t or one of its radial derivatives.

    log_abs and sign stay meaningful when value underflows to 0.0.
    """
    value: float
    abs_error: float
    method: str
    log_abs: float
    sign: float
    rel_error: float

    @classmethod
    def from_value(cls, value, abs_error, method):
        value = float(value)
        log_abs = math.log(abs(value)) if value != 0.0 else -math.inf
        rel = abs_error / abs(value) if value != 0.0 else math.inf
        return cls(value, float(abs_error), method, log_abs, math.copysign(1.0, value) if value else 0.0, rel)

    def rescaled(self, log_factor):
        """self * e^{log_factor}, exact in log scale."""
        log_abs = self.log_abs + log_factor
        return KernelEval(
            self.sign * math.exp(log_abs) if math.isfinite(log_abs) else 0.0,
            self.abs_error * math.exp(log_factor),
            self.method, log_abs, self.sign, self.rel_error,
        )


def ratio(num, den):
    """num / den computed from log magnitudes."""
    if den.sign == 0.0:
        raise DomainError("ratio against a vanishing kernel value")
    if num.sign == 0.0:
        return 0.0
    return num.sign * den.sign * math.exp(num.log_abs - den.log_abs)


def _from_mantissa(mant, merr, log_norm, method):
    mant = float(mant)
    if mant == 0.0:
        return KernelEval(0.0, merr * math.exp(log_norm), method, -math.inf, 0.0, math.inf)
    log_abs = math.log(abs(mant)) + log_norm
    sign = math.copysign(1.0, mant)
    return KernelEval(
        sign * math.exp(log_abs), merr * math.exp(log_norm), method,
        log_abs, sign, merr / abs(mant),
    )


#  ELEMENTARY FACTORS (real or complex argument)

def _rcoth(w):
    w = np.asarray(w)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = w / np.tanh(w)
    return np.where(np.abs(w) < 1e-6, 1.0 + w * w / 3.0, out)


def _rsinh(w):
    w = np.asarray(w)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = w / np.sinh(w)
    return np.where(np.abs(w) < 1e-6, 1.0 - w * w / 6.0, out)


def _inv_minus_cot(y):
    """1/y - cot y on [0, pi)."""
    if y < 1e-4:
        return y / 3.0 + y ** 3 / 45.0
    return 1.0 / y - math.cos(y) / math.sin(y)


def _ycot(y):
    if y < 1e-8:
        return 1.0
    return y * math.cos(y) / math.sin(y)


def _log_ysin(y):
    if y < 1e-8:
        return 0.0
    return math.log(y / math.sin(y))


#  DERIVATIVE OPERATORS

def _acc(terms, key, c):
    terms[key] = terms.get(key, 0.0) + c


@lru_cache(maxsize=None)
def _radial_operator(k2):
    """d^k2/dzeta^k2 Lambda_nu(r zeta) = sum c zeta^a r^{2j} Lambda_{nu+j}(r zeta)."""
    terms = {(0, 0): 1.0}
    for _ in range(k2):
        nxt = {}
        for (a, j), c in terms.items():
            if a:
                _acc(nxt, (a - 1, j), c * a)
            _acc(nxt, (a + 1, j + 1), -c)
        terms = nxt
    return tuple((a, j, c) for (a, j), c in sorted(terms.items()) if c != 0.0)


@lru_cache(maxsize=None)
def _line_operator(m, k2):
    """
    d^k2/dzeta^k2 of the odd-m transform as sum c zeta^p f^{(j)}, where
    f^{(j)} is the j-th zeta-derivative of the m = 1 line integral.
    """
    q = (m - 1) // 2
    terms = {(0, 0): (-2.0 * math.pi) ** q}
    for _ in range(q):
        nxt = {}
        for (p, j), c in terms.items():
            if p:
                _acc(nxt, (p - 2, j), c * p)
            _acc(nxt, (p - 1, j + 1), c)
        terms = nxt
    for _ in range(k2):
        nxt = {}
        for (p, j), c in terms.items():
            if p:
                _acc(nxt, (p - 1, j), c * p)
            _acc(nxt, (p, j + 1), c)
        terms = nxt
    return tuple((p, j, c) for (p, j), c in sorted(terms.items()) if c != 0.0)


def _panel_edges(first, period, upper):
    edges = [0.0]
    w = first
    while edges[-1] < upper:
        edges.append(min(edges[-1] + w, upper))
        w = min(1.5 * w, period, 2.0)
    return np.array(edges)


#  REDUCED RADIAL ROUTE

def _radial_terms(R, zeta, orders, spec, tol):
    n, m = spec.n, spec.m
    nu = 0.5 * m - 1.0
    ops = [_radial_operator(o.k2) for o in orders]
    shifts = sorted({j for op in ops for (_, j, _) in op})
    lam0 = {j: radial_bessel(nu + j, 0.0) for j in shifts}

    def fun(r, bound=False):
        r = np.asarray(r, dtype=float)
        rc = _rcoth(r)
        base = np.exp(-R * (rc - 1.0)) * _rsinh(r) ** n * r ** (m - 1)
        lam = {j: (lam0[j] if bound else radial_bessel(nu + j, r * zeta)) for j in shifts}
        rows = []
        for o, op in zip(orders, ops):
            if bound:
                zpart = sum(abs(c) * zeta ** a * r ** (2 * j) * lam[j] for a, j, c in op)
                rows.append(base * rc ** o.k1 * zpart)
            else:
                zpart = sum(c * zeta ** a * r ** (2 * j) * lam[j] for a, j, c in op)
                rows.append(base * (-rc) ** o.k1 * zpart)
        return np.array(rows)

    upper = truncation_point(lambda r: float(np.max(fun(np.array([r]), bound=True))), threshold=1e-2 * tol)
    period = 2.0 * math.pi / zeta if zeta > 0.0 else 2.0
    edges = _panel_edges(min(0.25, 1.0 / math.sqrt(1.0 + R)), period, upper)
    vals, err = adaptive_panels(fun, edges, tol=tol)
    log_norm = -R - 0.5 * m * math.log(2.0 * math.pi) - n * math.log(4.0 * math.pi)
    out = []
    for i in range(len(orders)):
        ev = _from_mantissa(vals[i], err, log_norm, "reduced-1d")
        if ev.rel_error > 1e-3:
            log.warning("loss of significance at (R=%.4g, zeta=%.4g): rel err %.2e", R, zeta, ev.rel_error)
        out.append(ev)
    return out


#  SHIFTED LINE ROUTE (odd m)

def saddle(R, zeta, n):
    """Root y in [0, pi) of -zeta + R theta(y) + n (1/y - cot y); y = 0 when zeta = 0."""
    if zeta == 0.0:
        return 0.0

    def dg(y):
        return -zeta + R * theta(y) + n * _inv_minus_cot(y)

    eps = 0.5
    while dg(math.pi - eps) <= 0.0 and eps > 1e-15:
        eps *= 0.5
    return brentq(dg, 0.0, math.pi - eps, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def _log_peak(R, zeta, n, y):
    return -zeta * y - R * _ycot(y) + n * _log_ysin(y)


def _line_terms(R, zeta, orders, spec, tol):
    n, m = spec.n, spec.m
    y = saddle(R, zeta, n)
    g0 = _log_peak(R, zeta, n, y)
    ops = [_line_operator(m, o.k2) for o in orders]
    pairs = sorted({(o.k1, j) for o, op in zip(orders, ops) for (_, j, _) in op})

    def fun(s, magnitude=False):
        w = np.asarray(s, dtype=float) + 1j * y
        rc = _rcoth(w)
        base = np.exp(1j * zeta * w - R * rc - g0) * _rsinh(w) ** n
        rows = []
        for k1, j in pairs:
            v = base
            if j:
                v = v * (1j * w) ** j
            if k1:
                v = v * (-rc) ** k1
            rows.append(np.abs(v) if magnitude else 2.0 * v.real)
        return np.array(rows)

    upper = truncation_point(
        lambda s: float(np.max(fun(np.array([s]), magnitude=True))), start=2.0, threshold=1e-2 * tol,
    )
    period = 2.0 * math.pi / zeta if zeta > 0.0 else 2.0
    first = min(0.25, 1.0 / (1.0 + zeta), 1.0 / math.sqrt(1.0 + R))
    vals, err = adaptive_panels(fun, _panel_edges(first, period, upper), tol=tol)
    index = {p: i for i, p in enumerate(pairs)}
    log_norm = g0 - m * math.log(2.0 * math.pi) - n * math.log(4.0 * math.pi)

    out = []
    for o, op in zip(orders, ops):
        mant, merr = 0.0, 0.0
        for p, j, c in op:
            weight = c * zeta ** p
            mant += weight * vals[index[(o.k1, j)]]
            merr += abs(weight) * err
        out.append(_from_mantissa(mant, merr, log_norm, "shifted-1d"))
    return out


#  FINITE-DIFFERENCE FALLBACK

def _stencil(k, step, forward):
    if forward:
        return [(i * step, (-1) ** (k - i) * comb(k, i) / step ** k) for i in range(k + 1)]
    return [((0.5 * k - i) * step, (-1) ** i * comb(k, i) / step ** k) for i in range(k + 1)]


def _fd_once(R, zeta, order, spec, tol, step, forward):
    total = 0.0
    for dR, wR in _stencil(order.k1, step, forward):
        for dz, wz in _stencil(order.k2, step, False):
            # h is even in zeta
            prof = RadialProfile(R + dR, abs(zeta + dz))
            total += wR * wz * _route_terms(prof, [DerivOrder()], spec, "auto", tol)[0].value
    return total


def _fd_derivative(profile, order, spec, tol, step=FD_STEP):
    if order.total == 0:
        ev = _route_terms(profile, [order], spec, "auto", tol)[0]
        return KernelEval.from_value(ev.value, ev.abs_error, "finite-difference-fallback")
    forward = profile.R < 0.5 * order.k1 * step
    coarse = _fd_once(profile.R, profile.zeta, order, spec, tol, step, forward)
    fine = _fd_once(profile.R, profile.zeta, order, spec, tol, 0.5 * step, forward)
    # central stencils are O(h^2), forward ones O(h)
    value = (4.0 * fine - coarse) / 3.0 if not forward else 2.0 * fine - coarse
    return KernelEval.from_value(value, abs(fine - coarse), "finite-difference-fallback")


#  PUBLIC EVALUATION

def _route(profile, spec, method):
    if method not in METHODS:
        raise DomainError(f"unknown kernel method: {method}")
    if method != "auto":
        if method == "shifted-1d":
            if spec.m % 2 == 0:
                raise DomainError("shifted-1d route needs an odd centre dimension")
            if spec.m > 1 and profile.zeta == 0.0:
                raise DomainError("shifted-1d route for m >= 3 needs zeta > 0")
        return method
    if spec.m % 2 == 1 and (spec.m == 1 or profile.zeta >= LINE_SWITCH):
        return "shifted-1d"
    return "reduced-1d"


def _route_terms(profile, orders, spec, method, tol):
    route = _route(profile, spec, method)
    if route == "finite-difference-fallback":
        return [_fd_derivative(profile, o, spec, tol) for o in orders]
    if route == "shifted-1d":
        return _line_terms(profile.R, profile.zeta, orders, spec, tol)
    return _radial_terms(profile.R, profile.zeta, orders, spec, tol)


def kernel_terms(profile, orders, spec, t=1.0, method="auto", tol=None):
    """
    p_{t,k1,k2} at the profile for every order in one pass; the integrand is shared
    between orders, so this is much cheaper than calling kernel_deriv repeatedly.
    """
    if not t > 0:
        raise DomainError(f"time must be positive, got {t}")
    tol = TOL_QUAD if tol is None else tol
    orders = [as_order(o) for o in orders]
    evals = _route_terms(profile.scaled(t), orders, spec, method, tol)
    if t == 1.0:
        return evals
    log_t = math.log(t)
    return [ev.rescaled(-(spec.n + spec.m + o.total) * log_t) for ev, o in zip(evals, orders)]


def kernel(profile, t, spec, method="auto", tol=None):
    return kernel_terms(profile, [DerivOrder()], spec, t=t, method=method, tol=tol)[0]


def kernel_deriv(profile, order, spec, t=1.0, method="auto", tol=None):
    return kernel_terms(profile, [order], spec, t=t, method=method, tol=tol)[0]


def kernel_at(spec, g, t=1.0, tol=None):
    """p_t at a point or batch of points of a concrete model."""
    R, zeta = radial_coordinates(g)
    if np.ndim(R) == 0:
        return kernel(RadialProfile(float(R), float(zeta)), t, spec, tol=tol).value
    flat = [kernel(RadialProfile(float(r), float(s)), t, spec, tol=tol).value
            for r, s in zip(np.ravel(R), np.ravel(zeta))]
    return np.array(flat).reshape(np.shape(R))


#  ZONES

def classify_zone(profile, C=4.0, small=0.2, large=5.0):
    """Nominal zone of a profile: Z1 when omega <= C, otherwise by kappa."""
    if profile.zeta == 0.0 or profile.omega <= C:
        return "Z1"
    kappa = profile.kappa
    if kappa < small:
        return "Z4"
    if kappa > large:
        return "Z2"
    return "Z3"


def zone_ratio_z1(profile, order):
    """Leading term of p_{1,k1,k2} / p_{1,0,0} for omega bounded."""
    order = as_order(order)
    y = theta_inv(profile.omega) if profile.R > 0.0 else 0.0
    return (-1.0) ** order.total * _ycot(y) ** order.k1 * y ** order.k2


def zone_leading_log(zone, profile, order, spec):
    """(log |leading term|, sign) of p_{1,k1,k2} in zones Z2, Z3, Z4."""
    order = as_order(order)
    if zone not in ("Z2", "Z3", "Z4"):
        raise DomainError(f"absolute leading term only exists for Z2, Z3, Z4, got {zone}")
    if profile.zeta == 0.0:
        raise DomainError("zones Z2-Z4 need zeta > 0")
    n, m = spec.n, spec.m
    k1, k2 = order.k1, order.k2
    d2 = sr_distance(profile) ** 2
    sign = (-1.0) ** k2
    if zone == "Z4":
        val = (k1 + k2) * math.log(math.pi) - (2 * n + 0.5 * (m - 1)) * math.log(2.0) \
            - gammaln(n + k1) + (n + k1 - 1 - 0.5 * (m - 1)) * math.log(profile.zeta) - 0.25 * d2
        return val, sign
    if profile.R == 0.0:
        raise DomainError(f"zone {zone} needs R > 0")
    delta, kappa = profile.delta, profile.kappa
    head = (k1 + k2) * math.log(math.pi) - n * math.log(4.0) \
        - (n + k1 - 0.5 * (m + 1)) * math.log(math.pi * delta) - 0.25 * d2
    if zone == "Z2":
        return head - 0.5 * math.log(2.0 * math.pi * kappa ** m), sign
    return head - 0.5 * (m - 1) * math.log(kappa) + math.log(bessel_ie(n + k1 - 1, kappa)), sign


def zone_leading(zone, profile, order, spec, C=4.0):
    """
    Leading asymptotic term. Z1 returns the ratio to p_{1,0,0}; Z2-Z4 the absolute
    term (may underflow; use zone_leading_log in the deep tail).
    """
    nominal = classify_zone(profile, C=C)
    if nominal != zone:
        log.warning("profile (R=%.4g, zeta=%.4g) is nominally %s, not %s", profile.R, profile.zeta, nominal, zone)
    if zone == "Z1":
        return zone_ratio_z1(profile, order)
    val, sign = zone_leading_log(zone, profile, order, spec)
    return sign * math.exp(val)


#  LOG-DERIVATIVE TERMS OF xi = log p_1

TABLE_ORDERS = (DerivOrder(0, 0), DerivOrder(1, 0), DerivOrder(0, 1), DerivOrder(2, 0), DerivOrder(0, 2))


@dataclass(frozen=True)
class LogTerms:
    """xi = log p_1 and its radial ingredients at one profile (t = 1)."""
    xi: float
    d_R: float
    d_zeta: float
    grad_sq: float
    lap: float
    rel_error: float
    method: str


def log_terms(profile, spec, method="auto", tol=None, zeta_limit="analytic"):
    """
    |grad xi|^2 = R (r10^2 + r01^2) and
    Delta p / p = R (r20 + r02) + n r10 + R (m - 1) r01 / zeta,
    with r_ij = d_R^i d_zeta^j p / p and r01 / zeta -> r02 as zeta -> 0.
    """
    evals = kernel_terms(profile, TABLE_ORDERS, spec, method=method, tol=tol)
    p00 = evals[0]
    ratios = [ratio(ev, p00) for ev in evals[1:]]
    limit = None
    if profile.zeta == 0.0 and spec.m > 1 and zeta_limit == "richardson":
        limit = _r01_over_zeta_extrapolated(profile.R, spec, method, tol)
    rel = _terms_rel_error(p00, evals[1:], ratios)
    return log_terms_from_ratios(profile, spec, p00.log_abs, *ratios, rel_error=rel, method=p00.method,
                                 r01_over_zeta=limit)


def _terms_rel_error(p00, derivs, ratios):
    """
    Error of each ratio r = p_k / p_00 on the scale max(1, |r|). Orders that
    vanish by symmetry (zeta = 0) are measured against p_00 instead of themselves.
    """
    rel = p00.rel_error
    for ev, r in zip(derivs, ratios):
        if ev.sign == 0.0:
            err = 0.0 if ev.abs_error <= 0.0 else math.exp(math.log(ev.abs_error) - p00.log_abs)
        else:
            err = ev.rel_error * abs(r) / max(1.0, abs(r))
        rel = max(rel, err)
    return rel


def log_terms_from_ratios(profile, spec, log_p, r10, r01, r20, r02, rel_error=0.0, method="reduced-1d",
                          r01_over_zeta=None):
    n, m = spec.n, spec.m
    R, zeta = profile.R, profile.zeta
    if zeta > 0.0:
        r01_over_zeta = r01 / zeta
    else:
        r01 = 0.0
        if m == 1:
            r01_over_zeta = 0.0
        elif r01_over_zeta is None:
            r01_over_zeta = r02
    grad_sq = R * (r10 * r10 + r01 * r01)
    lap_p = R * (r20 + r02) + n * r10 + (m - 1) * R * r01_over_zeta
    return LogTerms(log_p, r10, r01, grad_sq, lap_p - grad_sq, rel_error, method)


def _r01_over_zeta_extrapolated(R, spec, method, tol, step=1e-2):
    def q(s):
        p00, p01 = kernel_terms(RadialProfile(R, s), [(0, 0), (0, 1)], spec, method=method, tol=tol)
        return ratio(p01, p00) / s
    # r01 / zeta is even in zeta
    return (4.0 * q(0.5 * step) - q(step)) / 3.0


def _log_terms_job(args):
    R, zeta, spec, tol = args
    lt = log_terms(RadialProfile(R, zeta), spec, tol=tol)
    return lt.xi, lt.d_R, lt.d_zeta, lt.lap


#  TABULATED xi

TABLE_CACHE = {}


class HeatTable:
    """
    xi = log p_1 with d_R xi, d_zeta xi and Delta xi tabulated on a rectangle in
    (R, zeta) and interpolated by bicubic splines. Built once, queried at many points
    (quadrature nodes of the certificate integrals).
    """

    FIELDS = ("xi", "d_R", "d_zeta", "lap")

    def __init__(self, spec, R_grid, zeta_grid, values):
        self.spec = spec
        self.R_grid = np.asarray(R_grid, dtype=float)
        self.zeta_grid = np.asarray(zeta_grid, dtype=float)
        self.values = values
        self.splines = {
            name: RectBivariateSpline(self.R_grid, self.zeta_grid, values[name], kx=3, ky=3, s=0)
            for name in self.FIELDS
        }

    @staticmethod
    def key(spec, R_max, zeta_max, nodes):
        return f"{spec.n}:{spec.m}:{R_max:.6g}:{zeta_max:.6g}:{nodes[0]}x{nodes[1]}"

    @classmethod
    def build(cls, spec, R_max=40.0, zeta_max=20.0, nodes=None, workers=None, tol=None, use_db=False):
        nodes = nodes or (GRID // 2, GRID // 2)
        key = cls.key(spec, R_max, zeta_max, nodes)
        if key in TABLE_CACHE:
            return TABLE_CACHE[key]
        if use_db:
            conn = db.init_db()
            payload = db.get_kernel_table(conn, key)
            conn.close()
            if payload is not None:
                table = cls._from_payload(spec, payload, nodes)
                TABLE_CACHE[key] = table
                return table

        R_grid = np.linspace(0.0, R_max, nodes[0])
        zeta_grid = np.linspace(0.0, zeta_max, nodes[1])
        jobs = [(float(r), float(s), spec, tol) for r in R_grid for s in zeta_grid]
        log.info("tabulating xi on %dx%d grid", nodes[0], nodes[1])
        start = time.time()
        rows = np.array(parallel_map(_log_terms_job, jobs, workers=workers))
        log.info("grid %dx%d evaluated in %.1fs", nodes[0], nodes[1], time.time() - start)

        values = {name: rows[:, i].reshape(nodes) for i, name in enumerate(cls.FIELDS)}
        table = cls(spec, R_grid, zeta_grid, values)
        TABLE_CACHE[key] = table
        if use_db:
            conn = db.init_db()
            db.insert_kernel_table(conn, key, spec.n, spec.m, table._payload())
            conn.close()
        return table

    def _payload(self):
        return np.concatenate([self.R_grid, self.zeta_grid] + [self.values[f].ravel() for f in self.FIELDS])

    @classmethod
    def _from_payload(cls, spec, payload, nodes):
        nR, nz = nodes
        R_grid, zeta_grid = payload[:nR], payload[nR:nR + nz]
        rest = payload[nR + nz:].reshape(len(cls.FIELDS), nR, nz)
        return cls(spec, R_grid, zeta_grid, {f: rest[i] for i, f in enumerate(cls.FIELDS)})

    def _clip(self, R, zeta):
        R = np.asarray(R, dtype=float)
        zeta = np.asarray(zeta, dtype=float)
        outside = (R > self.R_grid[-1]) | (zeta > self.zeta_grid[-1])
        if np.any(outside):
            log.warning("%d points outside the tabulated range were clipped", int(np.sum(outside)))
        return np.minimum(R, self.R_grid[-1]), np.minimum(zeta, self.zeta_grid[-1])

    def evaluate(self, R, zeta, t=1.0):
        """(xi_t, d_R xi_t, d_zeta xi_t, Delta xi_t) at matching arrays of R and zeta."""
        R, zeta = self._clip(np.asarray(R, dtype=float) / t, np.asarray(zeta, dtype=float) / t)
        xi, dR, dz, lap = (self.splines[f].ev(R, zeta) for f in self.FIELDS)
        log_t = math.log(t)
        return xi - (self.spec.n + self.spec.m) * log_t, dR / t, dz / t, lap / t

    def at(self, g, t=1.0):
        """xi_t, its horizontal gradient (..., 2n) and Delta xi_t at points of a concrete model."""
        J = structure_matrices(self.spec)
        R, zeta = radial_coordinates(g)
        xi, dR, dz, lap = self.evaluate(R, zeta, t=t)
        with np.errstate(invalid="ignore", divide="ignore"):
            u = np.where(zeta[..., None] > 0.0, g.z / zeta[..., None], 0.0)
        # X_j |z| = 1/2 sum_k u_k (J_k x)_j and X_j R = x_j / 2
        Jx = np.einsum("kij,...j->...ki", J, g.x)
        grad_zeta = 0.5 * np.einsum("...k,...ki->...i", u, Jx)
        grad = 0.5 * g.x * dR[..., None] + grad_zeta * dz[..., None]
        return xi, grad, lap


#  MASS

def _sphere_area(k):
    return 2.0 * math.pi ** (0.5 * k) / math.gamma(0.5 * k)


def _mass_job(args):
    R, zeta, t, spec, tol = args
    return kernel(RadialProfile(R, zeta), t, spec, tol=tol).value


def _mass_once(spec, t, nodes, workers, tol):
    n, m = spec.n, spec.m
    rho_max = math.sqrt(160.0 * t)
    zeta_max = 13.0 * t
    pts, wts = tensor_rule([(0.0, rho_max), (0.0, zeta_max)], nodes)
    jobs = [(0.25 * r * r, s, t, spec, tol) for r, s in pts]
    vals = np.array(parallel_map(_mass_job, jobs, workers=workers))
    density = pts[:, 0] ** (2 * n - 1) * pts[:, 1] ** (m - 1)
    return _sphere_area(2 * n) * _sphere_area(m) * float(np.sum(wts * density * vals))


def total_mass(spec, t=1.0, nodes=(48, 48), workers=None, tol=None):
    """Integral of p_t over the group in polar coordinates on both layers; (mass, err)."""
    coarse = _mass_once(spec, t, (nodes[0] // 2, nodes[1] // 2), workers, tol)
    fine = _mass_once(spec, t, nodes, workers, tol)
    return fine, abs(fine - coarse)
