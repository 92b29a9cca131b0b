"""
The potential W_{t,C} = (C/4)|grad xi_t|^2 + (C/2) Delta xi_t + xi_t, xi_t = log p_t.

At t = 1 it splits as W_{1,C} = C * A + xi with A = |grad xi|^2 / 4 + Delta xi / 2,
and every other time follows from

    W_{t,C}(R, zeta) = W_{1,C/t}(R/t, zeta/t) - (n + m) log t
"""
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from src.config import GRID, TOL_QUAD
from src.errors import DomainError, QuadratureError
from src.geometry import RadialProfile, sr_distance
from src.heatkernel import (
    TABLE_ORDERS, classify_zone, log_terms, log_terms_from_ratios, zone_leading_log,
)
from src.quadrature import parallel_map

log = logging.getLogger(__name__)

SIGNIFICANCE_LIMIT = 1e-4
TAIL_LAMBDAS = (1.0, 1.5, 2.0, 3.0)
TAIL_LAMBDA_MAX = 100.0
TAIL_MARGIN = 1.0
REMAINDER_LIMIT = 1.0
VERDICT_SIGMAS = 3.0


@dataclass(frozen=True)
class PotentialParams:
    C: float
    t: float = 1.0

    def __post_init__(self):
        if not (self.C > 0 and self.t > 0):
            raise DomainError(f"potential needs C, t > 0, got ({self.C}, {self.t})")


@dataclass(frozen=True)
class WComponents:
    A: float
    xi: float
    method: str
    rel_error: float

    def w(self, C):
        return C * self.A + self.xi


def _zone_terms(zone, profile, spec):
    logs = [zone_leading_log(zone, profile, o, spec) for o in TABLE_ORDERS]
    log00, _ = logs[0]
    ratios = [sign * math.exp(val - log00) for val, sign in logs[1:]]
    return log_terms_from_ratios(profile, spec, log00, *ratios, method="zone-surrogate")


def _surrogate_terms(profile, spec):
    zone = classify_zone(profile)
    if zone == "Z1":
        raise QuadratureError(
            f"kernel lost significance at (R={profile.R:.4g}, zeta={profile.zeta:.4g}) and Z1 has no absolute surrogate"
        )
    log.warning("zone surrogate %s used at (R=%.4g, zeta=%.4g)", zone, profile.R, profile.zeta)
    return _zone_terms(zone, profile, spec)


def w_components(profile, spec, method="auto", tol=None, zeta_limit="analytic"):
    lt = log_terms(profile, spec, method=method, tol=tol, zeta_limit=zeta_limit)
    if lt.rel_error > SIGNIFICANCE_LIMIT:
        lt = _surrogate_terms(profile, spec)
    return WComponents(0.25 * lt.grad_sq + 0.5 * lt.lap, lt.xi, lt.method, lt.rel_error)


def w_potential(profile, params, spec, method="auto", tol=None, zeta_limit="analytic"):
    """W_{t,C} at a radial profile."""
    t = params.t
    comp = w_components(profile.scaled(t), spec, method=method, tol=tol, zeta_limit=zeta_limit)
    return comp.w(params.C / t) - (spec.n + spec.m) * math.log(t)


def _components_job(args):
    R, zeta, spec, tol = args
    comp = w_components(RadialProfile(R, zeta), spec, tol=tol)
    return comp.A, comp.xi


#  BOUNDEDNESS

@dataclass
class BoundednessReport:
    C: float
    R: np.ndarray
    distance: np.ndarray
    W: np.ndarray
    coefficient: float
    intercept: float
    monotone_decreasing: bool
    verdict: str
    stderr: float = math.nan


def ray_verdict(coefficient, stderr, d2_span, monotone_decreasing):
    """
    A coefficient counts when it is VERDICT_SIGMAS standard errors away from zero
    and moves W by more than one unit across the fitted range of d^2. Otherwise a
    ray on which W keeps falling diverges and anything else is inconclusive.
    """
    resolved = abs(coefficient) > VERDICT_SIGMAS * stderr and abs(coefficient) * d2_span / 16.0 > 1.0
    if resolved:
        return "stabilizing" if coefficient > 0 else "diverges"
    return "diverges" if monotone_decreasing else "inconclusive"


def boundedness_probe(C, spec, omega=0.0, R_range=(25.0, 400.0), points=12, tol=None, workers=None):
    """
    W_{1,C} along the ray zeta = omega * R. Fits W + m log|x| = s d^2 + c and
    reports 16 s, the coefficient of d^2/16 (expected C - 4 on omega-bounded rays).
    """
    if not C > 0:
        raise DomainError(f"C must be positive, got {C}")
    if points < 3:
        raise DomainError(f"need at least 3 points on the ray, got {points}")
    R = np.geomspace(R_range[0], R_range[1], points)
    jobs = [(float(r), float(omega * r), spec, tol) for r in R]
    comps = parallel_map(_components_job, jobs, workers=workers)
    W = np.array([C * a + xi for a, xi in comps])
    d = np.array([sr_distance(RadialProfile(float(r), float(omega * r))) for r in R])
    abs_x = 2.0 * np.sqrt(R)

    design = np.column_stack([d * d, np.ones_like(d)])
    target = W + spec.m * np.log(abs_x)
    (s, c), *_ = np.linalg.lstsq(design, target, rcond=None)
    resid = target - design @ np.array([s, c])
    sigma2 = float(resid @ resid) / (points - 2)
    stderr = 16.0 * math.sqrt(sigma2 * np.linalg.inv(design.T @ design)[0, 0])
    coefficient = 16.0 * float(s)
    monotone = bool(np.all(np.diff(W) < 0))
    verdict = ray_verdict(coefficient, stderr, float(d[-1] ** 2 - d[0] ** 2), monotone)
    report = BoundednessReport(C, R, d, W, coefficient, float(c), monotone, verdict, stderr)
    log.info("C=%.3f ray omega=%.3g: coefficient %.4f +- %.2g -> %s", C, omega, coefficient, stderr, verdict)
    return report


#  GLOBAL MINIMUM OF W_{1,theta}

@dataclass
class WGrid:
    """A and xi on a tensor grid; W_{1,theta} = theta * A + xi for any theta."""
    R_grid: np.ndarray
    zeta_grid: np.ndarray
    A: np.ndarray
    xi: np.ndarray

    def w(self, theta):
        return theta * self.A + self.xi


def w_grid(spec, box, nodes, workers=None, tol=None):
    R_grid = np.linspace(0.0, box[0], nodes[0])
    zeta_grid = np.linspace(0.0, box[1], nodes[1])
    jobs = [(float(r), float(s), spec, tol) for r in R_grid for s in zeta_grid]
    start = time.time()
    rows = np.array(parallel_map(_components_job, jobs, workers=workers))
    log.info("grid %dx%d evaluated in %.1fs", nodes[0], nodes[1], time.time() - start)
    return WGrid(R_grid, zeta_grid, rows[:, 0].reshape(nodes), rows[:, 1].reshape(nodes))


@dataclass
class MinWResult:
    theta: float
    min_value: float
    argmin: RadialProfile
    box: tuple
    grid_resolution: tuple
    tail_margin: float
    certified: bool
    grid_min: float = math.nan
    grid: WGrid = field(default=None, repr=False)
    refine_failures: int = 0


def default_box(theta):
    R_star = max(8.0, 32.0 / (theta - 4.0))
    return R_star, R_star / math.pi


def _boundary_samples(box, per_edge=5):
    R_star, z_star = box
    top = [(float(r), z_star) for r in np.linspace(0.0, R_star, per_edge)]
    right = [(R_star, float(s)) for s in np.linspace(0.0, z_star, per_edge)[:-1]]
    return top + right


def zone_law(theta, profile, spec):
    """
    Leading growth of W_{1,theta} along a dilation ray and the scale of what it drops.

    Off the z-axis the Z1 display (theta - 4) d^2 / 16 - m log|x| holds on every
    ray of fixed omega, up to a ray constant and O(1/R). On the z-axis the Z4
    leading terms are exact up to O(1/|z|).
    """
    if profile.R > 0.0:
        d = sr_distance(profile)
        law = (theta - 4.0) * d * d / 16.0 - spec.m * math.log(2.0 * math.sqrt(profile.R))
        return law, 1.0 / profile.R
    if profile.zeta == 0.0:
        raise DomainError("zone law needs a point away from the origin")
    lt = _zone_terms("Z4", profile, spec)
    return theta * (0.25 * lt.grad_sq + 0.5 * lt.lap) + lt.xi, 1.0 / profile.zeta


def ray_lower_bound(theta, spec, base, lams, W):
    """
    Lower bound of W_{1,theta} on the dilation ray lambda >= 1 through `base`.

    The offset W - law is fitted as c + b * scale over the exact values W at `lams`;
    the bound is law + c + b * scale minus the worst fit residual, taken over
    lambda in [1, TAIL_LAMBDA_MAX]. Returns -inf when the ray cannot be closed:
    non-finite values, a residual above REMAINDER_LIMIT, or a model still falling
    at TAIL_LAMBDA_MAX.
    """
    W = np.asarray(W, dtype=float)
    laws = [zone_law(theta, base.dilated(lam), spec) for lam in lams]
    law = np.array([v for v, _ in laws])
    scale = np.array([e for _, e in laws])
    if not np.all(np.isfinite(W)):
        log.warning("ray through (R=%.4g, zeta=%.4g) has non-finite W", base.R, base.zeta)
        return -math.inf
    design = np.column_stack([np.ones_like(scale), scale])
    coef, *_ = np.linalg.lstsq(design, W - law, rcond=None)
    spread = float(np.max(np.abs(design @ coef - (W - law))))
    if spread > REMAINDER_LIMIT:
        log.warning("zone law misses W by %.3g on the ray through (R=%.4g, zeta=%.4g)", spread, base.R, base.zeta)
        return -math.inf

    far = [zone_law(theta, base.dilated(float(lam)), spec) for lam in np.geomspace(1.0, TAIL_LAMBDA_MAX, 200)]
    model = np.array([v + coef[0] + coef[1] * e for v, e in far]) - spread
    if model[-1] < model[-2]:
        log.warning("zone law still decreasing at lambda=%g on the ray through (R=%.4g, zeta=%.4g)",
                    TAIL_LAMBDA_MAX, base.R, base.zeta)
        return -math.inf
    return min(float(np.min(model)), float(np.min(W)))


def tail_lower_bound(theta, spec, box, tol=None, workers=None):
    """
    Lower bound of W_{1,theta} outside the box. Every outside point is a dilation
    lambda > 1 of a boundary point, so the bound is the smallest ray_lower_bound
    over rays through samples of the top and right faces.
    """
    samples = _boundary_samples(box)
    jobs = []
    for R, zeta in samples:
        for lam in TAIL_LAMBDAS:
            prof = RadialProfile(R, zeta).dilated(lam)
            jobs.append((prof.R, prof.zeta, spec, tol))
    comps = parallel_map(_components_job, jobs, workers=workers)
    W = np.array([theta * a + xi for a, xi in comps]).reshape(len(samples), len(TAIL_LAMBDAS))
    return min(ray_lower_bound(theta, spec, RadialProfile(R, zeta), TAIL_LAMBDAS, w_ray)
               for (R, zeta), w_ray in zip(samples, W))


def _refine(theta, spec, grid, tol, starts=3):
    W = grid.w(theta)
    order = np.argsort(W, axis=None)[:starts]
    bounds = [(0.0, grid.R_grid[-1]), (0.0, grid.zeta_grid[-1])]
    failed = []

    def objective(v):
        prof = RadialProfile(min(max(v[0], 0.0), bounds[0][1]), min(max(v[1], 0.0), bounds[1][1]))
        try:
            return w_components(prof, spec, tol=tol).w(theta)
        except QuadratureError as e:
            failed.append(prof)
            log.warning("refinement skips (R=%.4g, zeta=%.4g): %s", prof.R, prof.zeta, e)
            return math.inf

    best_val, best_x = math.inf, None
    for flat in order:
        i, j = np.unravel_index(flat, W.shape)
        x0 = np.array([grid.R_grid[i], grid.zeta_grid[j]])
        res = minimize(objective, x0, method="Nelder-Mead", bounds=bounds,
                       options={"xatol": 1e-6, "fatol": 1e-12, "maxiter": 2000})
        if res.fun < best_val:
            best_val, best_x = float(res.fun), res.x
    if best_x is None:
        return math.inf, None, failed
    return best_val, RadialProfile(max(float(best_x[0]), 0.0), max(float(best_x[1]), 0.0)), failed


def min_w(theta, spec, box=None, nodes=None, workers=None, tol=None, grow=4, refine=True):
    """
    Global minimum of W_{1,theta} over the group: grid search on a box in (R, zeta),
    Nelder-Mead refinement from the best cells, then a tail check outside the box.
    The box grows by 1.5 until the tail clears the minimum by TAIL_MARGIN.
    """
    if not theta > 4:
        raise DomainError(f"min_w needs theta > 4, got {theta}")
    nodes = nodes or (GRID, GRID)
    box = box or default_box(theta)
    tol = TOL_QUAD if tol is None else tol

    for attempt in range(grow + 1):
        grid = w_grid(spec, box, nodes, workers=workers, tol=tol)
        W = grid.w(theta)
        i, j = np.unravel_index(np.argmin(W), W.shape)
        grid_min = float(W[i, j])
        value, argmin = grid_min, RadialProfile(float(grid.R_grid[i]), float(grid.zeta_grid[j]))
        failed = []
        if refine:
            refined, at, failed = _refine(theta, spec, grid, tol)
            if refined < grid_min:
                value, argmin = refined, at

        margin = tail_lower_bound(theta, spec, box, tol=tol, workers=workers) - value
        certified = margin >= TAIL_MARGIN
        log.info("theta=%.3f box=(%.2f, %.2f): min %.8f, tail margin %.3f", theta, box[0], box[1], value, margin)
        if certified or attempt == grow:
            break
        box = (1.5 * box[0], 1.5 * box[1])

    if not certified:
        log.warning("minimum of W_{1,%.3f} is uncertified: tail margin %.3f", theta, margin)
    return MinWResult(theta, value, argmin, tuple(box), tuple(nodes), float(margin), certified,
                      grid_min=grid_min, grid=grid, refine_failures=len(failed))
