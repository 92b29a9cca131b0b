"""
Closed-form constants and verifiers for defective log-Sobolev inequalities

    Ent_{mu_t}(f^2) <= eta * ||f||^2 + theta * t * Dir_{mu_t}(f)

together with the ground-state transform identities and the Herbst tail chain.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import gammaln, xlogy

from src.errors import CertificationError, DomainError, VerificationError
from src.geometry import (
    Point, RadialProfile, dilate, distance, group_inv, group_mul, horizontal_grad_sq,
    horizontal_gradient, radial_coordinates, sr_distance,
)
from src.heatkernel import HeatTable
from src.potential import min_w
from src.quadrature import tensor_rule

log = logging.getLogger(__name__)

FAMILY_VERSION = 1
MEASURES = ("haar", "heat", "gaussian-like")
KINDS = ("gaussian-bump", "translated-bump", "ground-state", "dilated", "exponential", "constant")


#  CONSTANTS

def sobolev_const(n, m):
    """C_{n,m} of the Sobolev-to-log-Sobolev step, Q = 2n + 2m."""
    if n < 1 or m < 1:
        raise DomainError(f"need n, m >= 1, got ({n}, {m})")
    Q = 2 * n + 2 * m
    k = 2 * n + m
    log_c = (2.0 * m / Q) * math.log(4.0) - math.log(2.0 * n * (Q - 2)) - (k / Q) * math.log(math.pi) \
        + (gammaln(k) - gammaln(0.5 * k)) / Q
    return math.exp(log_c)


def sobolev_exponent(n, m):
    Q = 2 * n + 2 * m
    return 2.0 * Q / (Q - 2)


def elementary_min(alpha, beta, gamma):
    """Minimiser and minimum of alpha d^2 - beta log d + gamma over d > 0."""
    if not (alpha > 0 and beta > 0):
        raise DomainError(f"elementary_min needs alpha, beta > 0, got ({alpha}, {beta})")
    delta0 = math.sqrt(beta / (2.0 * alpha))
    fmin = 0.5 * beta + gamma + 0.5 * beta * math.log(2.0 * alpha / beta)
    return delta0, fmin


def log_form_constant(tau, n, m):
    """Additive constant K in Ent <= (n+m) log(C Dir) <= tau Dir + K."""
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau}")
    # with alpha = tau Dir and beta = 2(n+m) the Dir-dependence cancels; take Dir = 1
    _, fmin = elementary_min(tau, 2.0 * (n + m), 0.0)
    return (n + m) * math.log(sobolev_const(n, m)) - fmin


def be_lower_bound(n):
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    return math.sqrt((3.0 * n + 5.0) / (3.0 * n + 1.0))


def _sphere_area(k):
    return 2.0 * math.pi ** (0.5 * k) / math.gamma(0.5 * k)


def gaussian_like_mass(spec, rho_max=12.0, zeta_max=20.0, tol=1e-11):
    """c = integral of e^{-d^2/2} over the group in polar coordinates on both layers; (c, err)."""
    n, m = spec.n, spec.m

    def integrand(zeta, rho):
        d = sr_distance(RadialProfile(0.25 * rho * rho, zeta))
        return rho ** (2 * n - 1) * zeta ** (m - 1) * math.exp(-0.5 * d * d)

    value, err = integrate.dblquad(integrand, 0.0, rho_max, 0.0, zeta_max, epsabs=tol, epsrel=tol)
    area = _sphere_area(2 * n) * _sphere_area(m)
    return area * value, area * err


def gaussian_like_constants(spec, **kwargs):
    """(K_{n,m}, c, c_err) for the measure e^{-d^2/2} dmu."""
    n, m = spec.n, spec.m
    K = (n + m) * math.log((n + m) * sobolev_const(n, m) / (2.0 * math.e)) + 2 * n + 3 * m
    c, err = gaussian_like_mass(spec, **kwargs)
    return K, c, err


#  ETA CERTIFICATE

@dataclass
class EtaCertificate:
    theta: float
    n: int
    m: int
    c_nm: float
    min_w: object
    eta: float

    @property
    def certified(self):
        return self.min_w.certified


def eta_from_min(theta, n, m, min_value):
    c_nm = sobolev_const(n, m)
    return (m + n) * math.log((m + n) * c_nm / (math.e * theta)) - min_value


def eta_certificate(theta, spec, min_result=None, strict=False, **min_kwargs):
    if not theta > 4:
        raise DomainError(f"eta certificate needs theta > 4, got {theta}")
    result = min_result or min_w(theta, spec, **min_kwargs)
    if not result.certified:
        if strict:
            raise CertificationError(f"minimum of W_(1,{theta:g}) is not certified")
        log.warning("eta(theta=%.3f) rests on an uncertified minimum", theta)
    eta = eta_from_min(theta, spec.n, spec.m, result.min_value)
    return EtaCertificate(theta, spec.n, spec.m, sobolev_const(spec.n, spec.m), result, eta)


#  TEST FUNCTIONS

@dataclass(frozen=True)
class TestFunction:
    """
    Koranyi bump exp(-(|x|^4 + 16|z|^2) / w^4) and its variants. center is (x, z) as tuples;
    ground-state multiplies the bump by w^{-1/2} of the measure's weight.
    """
    __test__ = False

    kind: str = "gaussian-bump"
    width: float = 1.0
    center: tuple = None
    lam: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown test function kind: {self.kind}")
        if not (self.width > 0 and self.lam > 0):
            raise DomainError("width and lambda must be positive")

    @property
    def label(self):
        if self.center is None:
            return f"{self.kind}(w={self.width:g}, lam={self.lam:g})"
        return f"{self.kind}(w={self.width:g}, |c|={np.linalg.norm(self.center[0]):g})"

    def center_point(self, spec):
        if self.center is None:
            return Point.identity(spec)
        return Point(np.asarray(self.center[0], dtype=float), np.asarray(self.center[1], dtype=float))

    def bump(self, spec, g, center=None):
        if center is not None:
            g = group_mul(spec, group_inv(spec, center), g)
        w4 = self.width ** 4
        r4 = np.sum(g.x * g.x, axis=-1) ** 2
        return np.exp(-(r4 + 16.0 * np.sum(g.z * g.z, axis=-1)) / w4)

    def __call__(self, spec, g, log_weight=None):
        if self.kind == "constant":
            return np.full(np.shape(g.x)[:-1], self.lam)
        if self.kind == "exponential":
            return np.exp(0.5 * self.lam * distance(spec, g))
        if self.kind == "dilated":
            Q = spec.Q
            return self.lam ** (0.5 * Q) * self.bump(spec, dilate(spec, self.lam, g))
        if self.kind == "gaussian-bump":
            return self.bump(spec, g)
        values = self.bump(spec, g, center=self.center_point(spec))
        if self.kind == "ground-state":
            if log_weight is None:
                raise DomainError("ground-state test function needs the measure's weight")
            values = values * np.exp(-0.5 * log_weight(g))
        return values

    def box(self, spec, t=1.0):
        """Half-widths (L_x, L_z) of the quadrature box about center_point."""
        if self.kind in ("exponential", "constant"):
            return 8.0 * math.sqrt(t), 8.0 * t
        L, Lz = 2.2 * self.width, 1.2 * self.width ** 2
        if self.kind == "dilated":
            return L / self.lam, Lz / self.lam ** 2
        return L, Lz


def standard_family(spec, distances=(0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0)):
    """The versioned verification family: bumps, translated bumps, ground-state bumps, dilations."""
    family = [TestFunction("gaussian-bump", w) for w in (0.5, 1.0, 2.0)]
    for d in distances:
        x = np.zeros(2 * spec.n)
        x[0] = d
        center = (tuple(x), tuple(np.zeros(spec.m)))
        family.append(TestFunction("translated-bump", 1.0, center))
        family.append(TestFunction("ground-state", 1.0, center))
    family += [TestFunction("dilated", 1.0, lam=lam) for lam in (0.25, 0.5, 2.0, 4.0)]
    return family


def translated_family(spec, distances, kind="ground-state", width=1.0):
    out = []
    for d in distances:
        x = np.zeros(2 * spec.n)
        x[0] = d
        out.append(TestFunction(kind, width, (tuple(x), tuple(np.zeros(spec.m)))))
    return out


#  QUADRATURE AGAINST A MEASURE

def _default_nodes(spec):
    return 24 if spec.dim <= 3 else 10


def _nodes_for(f, spec, t, nodes):
    nodes = nodes or _default_nodes(spec)
    L, Lz = f.box(spec, t)
    bounds = [(-L, L)] * (2 * spec.n) + [(-Lz, Lz)] * spec.m
    pts, wts = tensor_rule(bounds, [nodes] * spec.dim)
    local = Point(pts[:, :2 * spec.n], pts[:, 2 * spec.n:])
    # left translation preserves Haar measure
    return group_mul(spec, f.center_point(spec), local), wts, min(L, math.sqrt(Lz))


def heat_table_for(spec, g, t=1.0, nodes=(64, 64), margin=1.05, use_db=False):
    R, zeta = radial_coordinates(g)
    R_max = float(np.max(R)) * margin / t + 0.5
    zeta_max = float(np.max(zeta)) * margin / t + 0.5
    return HeatTable.build(spec, round(R_max, 1), round(zeta_max, 1), nodes=nodes, use_db=use_db)


def _log_weight(measure, spec, t, table):
    if measure == "haar":
        return lambda g: np.zeros(np.shape(g.x)[:-1])
    if measure == "gaussian-like":
        return lambda g: -0.5 * distance(spec, g) ** 2
    return lambda g: table.evaluate(*radial_coordinates(g), t=t)[0]


def entropy_and_dirichlet(f, measure, spec, t=1.0, nodes=None, table=None):
    """
    (Ent, Dir, mass) of f against haar, heat(t) or the gaussian-like measure, where
    Ent = int f^2 log f^2 - M log M and M = int f^2.
    """
    if measure not in MEASURES:
        raise DomainError(f"unknown measure: {measure}")
    if not spec.concrete:
        raise DomainError("test-function integrals need a concrete model")
    if spec.dim > 5:
        if measure != "heat":
            raise DomainError(f"direct quadrature is limited to dimension 5, got {spec.dim}")
        return _entropy_and_dirichlet_mc(f, spec, t)

    g, wts, scale = _nodes_for(f, spec, t, nodes)
    if measure == "heat" and table is None:
        table = heat_table_for(spec, g, t=t)
    log_w = _log_weight(measure, spec, t, table)

    def fun(h):
        return f(spec, h, log_weight=log_w)

    lw = log_w(g)
    weight = wts * np.exp(lw)
    f2 = fun(g) ** 2
    grad_sq = horizontal_grad_sq(spec, fun, g, step=1e-3 * scale, richardson=True)
    mass = float(np.sum(weight * f2))
    ent = float(np.sum(weight * xlogy(f2, f2))) - xlogy(mass, mass)
    dirichlet = float(np.sum(weight * grad_sq))
    if f.kind in ("exponential", "constant") and measure == "heat":
        total = float(np.sum(weight))
        if abs(total - 1.0) > 1e-3:
            log.warning("quadrature box holds mass %.6f of heat(%.3g)", total, t)
    return ent, dirichlet, mass


def _entropy_and_dirichlet_mc(f, spec, t, paths=20000):
    from src.sampler import PathConfig, simulate

    batch = simulate(spec, PathConfig(t=t, paths=paths))
    g = batch.points

    def fun(h):
        return f(spec, h)

    f2 = fun(g) ** 2
    grad_sq = horizontal_grad_sq(spec, fun, g, step=1e-4, richardson=True)
    mass = float(np.mean(f2))
    ent = float(np.mean(xlogy(f2, f2))) - xlogy(mass, mass)
    return ent, float(np.mean(grad_sq)), mass


#  VERIFICATION

@dataclass
class MarginRow:
    label: str
    entropy: float
    dirichlet: float
    mass: float
    margin: float


def dls_verify(theta, eta, t, family, spec, measure="heat", tol=1e-6, nodes=None, strict=False, use_db=False):
    """
    Margins eta + theta t Dir - Ent for each f normalised to unit mass against the measure.
    Negative margins beyond tol are violations.
    """
    rows = []
    table = None
    if measure == "heat" and spec.dim <= 5:
        # one table covering every member's quadrature box
        xs, zs = [], []
        for f in family:
            g, _, _ = _nodes_for(f, spec, t, nodes)
            xs.append(g.x)
            zs.append(g.z)
        table = heat_table_for(spec, Point(np.concatenate(xs), np.concatenate(zs)), t=t, use_db=use_db)
    for f in family:
        ent, dirichlet, mass = entropy_and_dirichlet(f, measure, spec, t=t, nodes=nodes, table=table)
        if not mass > 0:
            raise DomainError(f"{f.label} has no mass inside its quadrature box")
        ent_n, dir_n = ent / mass, dirichlet / mass
        margin = eta + theta * t * dir_n - ent_n
        rows.append(MarginRow(f.label, ent_n, dir_n, mass, margin))
        log.info("%s: margin %.6f", f.label, margin)

    bad = [r for r in rows if r.margin < -tol]
    if bad:
        log.warning("%d of %d test functions violate DLS(%.3f, %.4f)", len(bad), len(rows), theta, eta)
        if strict:
            raise VerificationError(f"negative margin {bad[0].margin:.3e} for {bad[0].label}")
    return rows


def gaussian_like_verify(family, spec, theta=2.0, K=None, nodes=None, tol=1e-6, strict=False):
    """Margins K + theta Dir - Ent against e^{-d^2/2} dmu."""
    if K is None:
        K, _, _ = gaussian_like_constants(spec)
    return dls_verify(theta, K, 1.0, family, spec, measure="gaussian-like", tol=tol, nodes=nodes, strict=strict)


def gaussian_like_probe(theta, spec, distances=(2.0, 4.0, 6.0, 8.0), eta=0.0, nodes=None):
    """
    Margins on ground-state translated bumps against e^{-d^2/2} dmu; for theta < 2 they
    fall without bound as the translation grows. Returns (distances, margins, slope in d^2).
    """
    rows = dls_verify(theta, eta, 1.0, translated_family(spec, distances), spec,
                      measure="gaussian-like", tol=math.inf, nodes=nodes)
    margins = np.array([r.margin for r in rows])
    d = np.asarray(distances, dtype=float)
    slope = float(np.polyfit(d * d, margins, 1)[0])
    return d, margins, slope


@dataclass
class GroundStateResidual:
    entropy: float
    dirichlet: float
    ibp: float
    terms: dict = field(default_factory=dict, repr=False)


def groundstate_check(f, spec, nodes=None, table=None):
    """
    Residuals of the ground-state identities with rho = p_1 and g = f rho^{1/2}:

        int g^2 log g^2 = int f^2 log f^2 rho + int g^2 xi
        int |grad g|^2 = int |grad f|^2 rho - 1/4 int g^2 |grad xi|^2 - 1/2 int g^2 Delta xi

    grad xi and Delta xi come from the tabulated kernel derivatives; grad g and grad f
    from finite differences along the frame.
    """
    if not spec.concrete:
        raise DomainError("groundstate_check needs a concrete model")
    pts, wts, scale = _nodes_for(f, spec, 1.0, nodes)
    table = table or heat_table_for(spec, pts)
    xi, grad_xi, lap_xi = table.at(pts)

    def xi_at(h):
        return table.evaluate(*radial_coordinates(h))[0]

    def f_fun(h):
        return f(spec, h, log_weight=xi_at)

    def g_fun(h):
        return f_fun(h) * np.exp(0.5 * xi_at(h))

    rho = np.exp(xi)
    fv = f_fun(pts)
    gv = fv * np.exp(0.5 * xi)
    f2, g2 = fv * fv, gv * gv
    step = 1e-3 * scale
    grad_f_sq = horizontal_grad_sq(spec, f_fun, pts, step=step, richardson=True)
    grad_g = horizontal_gradient(spec, g_fun, pts, step=step, richardson=True)
    grad_xi_sq = np.sum(grad_xi * grad_xi, axis=-1)

    ent_lhs = float(np.sum(wts * xlogy(g2, g2)))
    ent_rhs = float(np.sum(wts * xlogy(f2, f2) * rho) + np.sum(wts * g2 * xi))
    dir_lhs = float(np.sum(wts * np.sum(grad_g * grad_g, axis=-1)))
    lap_term = float(np.sum(wts * g2 * lap_xi))
    dir_rhs = float(np.sum(wts * grad_f_sq * rho) - 0.25 * np.sum(wts * g2 * grad_xi_sq)) - 0.5 * lap_term
    # int grad(g^2) . grad xi = - int g^2 Delta xi
    cross = float(np.sum(wts * np.sum(2.0 * gv[..., None] * grad_g * grad_xi, axis=-1)))

    def rel(a, b):
        return abs(a - b) / max(abs(a), abs(b), 1e-300)

    terms = {"ent_lhs": ent_lhs, "ent_rhs": ent_rhs, "dir_lhs": dir_lhs, "dir_rhs": dir_rhs,
             "lap_term": lap_term, "cross": cross}
    return GroundStateResidual(rel(ent_lhs, ent_rhs), rel(dir_lhs, dir_rhs), rel(-0.5 * lap_term, 0.5 * cross), terms)


#  HERBST CHAIN

@dataclass(frozen=True)
class HerbstBound:
    """Gaussian moment and tail bounds for a 1-Lipschitz g with K(1) = log int e^g dmu_t = K1."""
    B: float
    theta: float
    t: float
    eta: float
    K1: float

    def moment(self, lam):
        """Upper bound on int e^{lam g} dmu_t, valid for lam >= 1."""
        return math.exp(self.B * lam + 0.25 * self.theta * self.t * lam * lam)

    def envelope(self, lam):
        """(lam K(lam) bound from the ODE, B lam + theta t lam^2 / 4)."""
        ode = lam * self.K1 + self.eta * (lam - 1.0) + 0.25 * self.theta * self.t * lam * (lam - 1.0)
        return ode, self.B * lam + 0.25 * self.theta * self.t * lam * lam

    @property
    def tail_threshold(self):
        return self.B + 0.5 * self.theta * self.t

    @property
    def fernique_alpha_max(self):
        return 1.0 / (4.0 * self.t)

    def tail(self, r):
        """(bound on mu_t(g >= r), form, lambda*)."""
        if r >= self.tail_threshold:
            lam = 2.0 * (r - self.B) / (self.theta * self.t)
            return math.exp(-(r - self.B) ** 2 / (self.theta * self.t)), "gaussian", lam
        # Chernoff at lambda = 1, the smallest lambda the moment bound covers
        return min(1.0, math.exp(self.B + 0.25 * self.theta * self.t - r)), "moment", 1.0


@dataclass
class HerbstEvaluation:
    bound: HerbstBound
    r: float
    value: float
    form: str
    lam_star: float

    @property
    def flagged(self):
        return self.form != "gaussian"


def herbst_bound(eta, theta, t, K1):
    if not theta > 4:
        raise DomainError(f"herbst chain needs theta > 4, got {theta}")
    if not t > 0:
        raise DomainError(f"time must be positive, got {t}")
    return HerbstBound(K1 + max(eta, 0.0), theta, t, eta, K1)


def herbst_chain(eta, theta, t, K1, r):
    bound = herbst_bound(eta, theta, t, K1)
    value, form, lam = bound.tail(r)
    if form != "gaussian":
        log.info("r=%.3g below the Gaussian regime %.3g, moment form used", r, bound.tail_threshold)
    return HerbstEvaluation(bound, r, value, form, lam)
