"""
Monte Carlo paths of the diffusion generated by the sub-Laplacian sum_j X_j^2.

Each step is a right multiplication by (dx, 0) with dx ~ N(0, 2 dt I), so
z picks up 1/2 [x, dx] exactly as the group law prescribes. Paths are drawn in
fixed-size blocks, each block from its own Philox stream spawned off the seed,
so results do not depend on how blocks are spread over workers.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from src.config import SEED, STEPS
from src.errors import DomainError
from src.geometry import Point, bracket, distance
from src.quadrature import parallel_map

log = logging.getLogger(__name__)

BLOCK = 4096
HEAVY_TAIL_RSE = 0.5


@dataclass(frozen=True)
class PathConfig:
    t: float = 1.0
    steps: int = STEPS
    paths: int = 100000
    seed: int = SEED

    def __post_init__(self):
        if not (self.t > 0 and self.steps >= 1 and self.paths >= 1):
            raise DomainError(f"path config needs t > 0, steps >= 1 and paths >= 1, got {self}")


@dataclass
class SampleBatch:
    points: Point
    config: PathConfig

    def __len__(self):
        return self.points.x.shape[0]


def _simulate_block(args):
    spec, config, size, seed_seq = args
    rng = np.random.Generator(np.random.Philox(seed_seq))
    dt = config.t / config.steps
    sd = math.sqrt(2.0 * dt)
    x = np.zeros((size, 2 * spec.n))
    z = np.zeros((size, spec.m))
    for _ in range(config.steps):
        dx = sd * rng.standard_normal((size, 2 * spec.n))
        z += 0.5 * bracket(spec, x, dx)
        x += dx
    return x, z


def simulate(spec, config, workers=None):
    """Endpoints at time config.t of config.paths independent paths from the identity."""
    if not spec.concrete:
        raise DomainError("sampling needs a concrete model")
    n_blocks = -(-config.paths // BLOCK)
    children = np.random.SeedSequence(config.seed).spawn(n_blocks)
    sizes = [min(BLOCK, config.paths - k * BLOCK) for k in range(n_blocks)]
    jobs = [(spec, config, size, child) for size, child in zip(sizes, children)]
    blocks = parallel_map(_simulate_block, jobs, workers=workers, chunksize=1)
    x = np.concatenate([b[0] for b in blocks])
    z = np.concatenate([b[1] for b in blocks])
    log.info("simulated %d paths, %d steps, t=%.3g", config.paths, config.steps, config.t)
    return SampleBatch(Point(x, z), config)


def mean_and_error(values):
    values = np.asarray(values, dtype=float)
    return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(values.size))


def capped_distance(spec, cap=10.0):
    def g(points):
        return np.minimum(distance(spec, points), cap)
    return g


@dataclass
class FerniqueEstimate:
    alpha: float
    estimate: float
    std_error: float
    tails: list
    heavy_tail: bool


def empirical_fernique(samples, spec, g=None, alpha=0.2, radii=(4.0, 5.0, 6.0), values=None):
    """
    Sample mean of e^{alpha g^2} and tail frequencies P(|g| >= r); g defaults to min(d, 10).
    values, when given, are the precomputed g(points).
    """
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if alpha >= 1.0 / (4.0 * samples.config.t):
        log.warning("alpha=%.3g is outside the certified regime alpha < 1/(4t)", alpha)
    if values is None:
        g = g or capped_distance(spec)
        values = g(samples.points)
    values = np.asarray(values, dtype=float)
    est, se = mean_and_error(np.exp(alpha * values * values))
    heavy = se > HEAVY_TAIL_RSE * est
    if heavy:
        log.warning("e^{alpha g^2} estimator has relative standard error %.2f", se / est)
    tails = []
    for r in radii:
        freq, freq_se = mean_and_error(np.abs(values) >= r)
        tails.append((float(r), freq, freq_se))
    return FerniqueEstimate(alpha, est, se, tails, bool(heavy))


def estimate_k1(samples, spec, g=None, values=None):
    """K(1) = log E e^{g} with a delta-method standard error."""
    if values is None:
        g = g or capped_distance(spec)
        values = g(samples.points)
    mean, se = mean_and_error(np.exp(values))
    return math.log(mean), se / mean


def expectation(samples, fun):
    """E fun(X_t) with its standard error; fun maps a batch of points to values."""
    return mean_and_error(fun(samples.points))
