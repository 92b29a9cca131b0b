"""
Quadrature helpers:
  adaptive Gauss-Kronrod on vector-valued integrands (scipy quad_vec),
  truncation search for exponentially decaying tails,
  Gauss-Legendre tensor rules for full-coordinate integrals,
  and a process pool map with deterministic ordering.
"""
import logging
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad_vec

from src.config import TOL_QUAD, WORKERS
from src.errors import QuadratureError

log = logging.getLogger(__name__)


def integrate(fun, a, b, tol=None, points=None, limit=10000):
    """Adaptive GK21 over [a, b] for a vector-valued fun; returns (values, abs_error)."""
    tol = TOL_QUAD if tol is None else tol
    value, err, info = quad_vec(
        fun, a, b,
        epsabs=tol, epsrel=tol, norm="max",
        points=points, limit=limit, full_output=True,
    )
    value = np.atleast_1d(np.asarray(value))
    scale = max(1.0, float(np.max(np.abs(value))))
    if not info.success and err > 1e3 * tol * scale:
        raise QuadratureError(
            f"quad_vec did not converge on [{a}, {b}]: {info.message} (err={err:.3e})",
            value=value, abs_error=err,
        )
    return value, float(err)


_GL_CACHE = {}


def _gl(order):
    if order not in _GL_CACHE:
        _GL_CACHE[order] = leggauss(order)
    return _GL_CACHE[order]


def _panel_sums(fun, a, b, order):
    x, w = _gl(order)
    half = 0.5 * (b - a)
    nodes = (0.5 * (a + b))[:, None] + half[:, None] * x[None, :]
    vals = np.asarray(fun(nodes.ravel()))
    vals = vals.reshape(vals.shape[0], a.size, order)
    return np.einsum("cpk,k->cp", vals, w) * half[None, :]


def adaptive_panels(fun, edges, tol=None, order=20, max_rounds=40, max_panels=400000):
    """
    Adaptive composite Gauss-Legendre for integrands vectorised over nodes.

    fun maps a 1-D array of nodes to an array of shape (components, nodes).
    Each panel is compared against its two halves; panels whose difference exceeds
    their share of tol are split. Returns (values, abs_error).
    """
    tol = TOL_QUAD if tol is None else tol
    edges = np.asarray(edges, dtype=float)
    a, b = edges[:-1], edges[1:]
    length = edges[-1] - edges[0]
    floor = 64.0 * np.finfo(float).eps
    value, err = 0.0, 0.0
    for _ in range(max_rounds):
        mid = 0.5 * (a + b)
        coarse = _panel_sums(fun, a, b, order)
        fine = _panel_sums(fun, a, mid, order) + _panel_sums(fun, mid, b, order)
        perr = np.max(np.abs(fine - coarse), axis=0)
        ok = perr <= np.maximum(tol * (b - a) / length, floor * np.max(np.abs(fine), axis=0))
        value = value + fine[:, ok].sum(axis=1)
        err += float(perr[ok].sum())
        if ok.all():
            return np.atleast_1d(value), err
        bad = ~ok
        a, b = np.concatenate([a[bad], mid[bad]]), np.concatenate([mid[bad], b[bad]])
        if a.size > max_panels:
            break
    value = value + fine[:, ~ok].sum(axis=1)
    err += float(perr[~ok].sum())
    value = np.atleast_1d(value)
    if err > 1e3 * tol * max(1.0, float(np.max(np.abs(value)))):
        raise QuadratureError(f"panel quadrature stalled at err={err:.3e}", value=value, abs_error=err)
    log.warning("panel quadrature stopped early, err=%.3e", err)
    return value, err


def truncation_point(envelope, start=4.0, threshold=1e-16, cap=2000.0):
    """Smallest s >= start on a geometric ladder with envelope(s) * s <= threshold."""
    s = start
    while envelope(s) * s > threshold:
        s *= 1.5
        if s > cap:
            log.warning("tail envelope still %.2e at s=%.1f", envelope(s), s)
            return cap
    return s


def geometric_points(first, last, ratio=2.0):
    pts = []
    s = first
    while s < last:
        pts.append(s)
        s *= ratio
    return pts


def gauss_legendre(n, a, b):
    x, w = leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def tensor_rule(bounds, nodes):
    """Tensor Gauss-Legendre rule on a box; returns points (N, d) and weights (N,)."""
    axes = [gauss_legendre(k, lo, hi) for (lo, hi), k in zip(bounds, nodes)]
    grids = np.meshgrid(*[x for x, _ in axes], indexing="ij")
    wgrids = np.meshgrid(*[w for _, w in axes], indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([w.ravel() for w in wgrids], axis=-1), axis=-1)
    return points, weights


def parallel_map(func, items, workers=None, chunksize=16):
    """Ordered map; a pool is only started when workers > 1."""
    items = list(items)
    workers = WORKERS if workers is None else workers
    if workers <= 1 or len(items) < 2 * chunksize:
        return [func(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items, chunksize=chunksize))
