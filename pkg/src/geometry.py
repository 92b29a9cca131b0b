"""
Concrete H-type group models in exponential coordinates (x, z) in R^{2n} x R^m.

    (x, z)(x', z') = (x + x', z + z' + 1/2 [x, x']),   [x, x']_k = <J_k x, x'>

J_k are the structure matrices of the model (symplectic for Heisenberg,
left quaternion multiplication for the quaternionic model).
"""
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from src.errors import DomainError
from src.specialfn import theta_inv, theta_inv_complement, POLE_BRANCH_OMEGA

MODELS = ("heisenberg", "quaternionic", "radial")


@dataclass(frozen=True)
class GroupSpec:
    n: int
    m: int
    model: str = "heisenberg"

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise DomainError(f"need n, m >= 1, got ({self.n}, {self.m})")
        if self.model not in MODELS:
            raise DomainError(f"unknown model: {self.model}")
        if self.model == "heisenberg" and self.m != 1:
            raise DomainError("heisenberg model has a one-dimensional center")
        if self.model == "quaternionic" and (self.m != 3 or self.n % 2):
            raise DomainError("quaternionic model needs m = 3 and n even")

    @property
    def Q(self):
        return 2 * self.n + 2 * self.m

    @property
    def dim(self):
        return 2 * self.n + self.m

    @property
    def concrete(self):
        return self.model != "radial"


def heisenberg(n=1):
    return GroupSpec(n, 1, "heisenberg")


def quaternionic(n=2):
    return GroupSpec(n, 3, "quaternionic")


def radial_only(n, m):
    return GroupSpec(n, m, "radial")


def spec_for(n, m):
    """The concrete model for (n, m) when one exists, otherwise radial-only."""
    if m == 1:
        return heisenberg(n)
    if m == 3 and n % 2 == 0:
        return quaternionic(n)
    return radial_only(n, m)


_QUAT_LEFT = np.array([
    [[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]],   # i
    [[0, 0, -1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, -1, 0, 0]],   # j
    [[0, 0, 0, -1], [0, 0, -1, 0], [0, 1, 0, 0], [1, 0, 0, 0]],   # k
], dtype=float)


@lru_cache(maxsize=None)
def structure_matrices(spec):
    """Array J of shape (m, 2n, 2n); J[k] @ x is J_{u_k} x."""
    if not spec.concrete:
        raise DomainError("radial-only model has no group law")
    n = spec.n
    if spec.model == "heisenberg":
        eye = np.eye(n)
        zero = np.zeros((n, n))
        J = np.block([[zero, eye], [-eye, zero]])[None, :, :]
    else:
        J = np.stack([np.kron(np.eye(n // 2), _QUAT_LEFT[k]) for k in range(3)])
    J.setflags(write=False)
    return J


@dataclass
class Point:
    """Point of the group; x has shape (..., 2n) and z shape (..., m), so batches are allowed."""
    x: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.z = np.asarray(self.z, dtype=float)

    @classmethod
    def identity(cls, spec):
        return cls(np.zeros(2 * spec.n), np.zeros(spec.m))

    def profile(self):
        R, zeta = radial_coordinates(self)
        return RadialProfile(float(R), float(zeta))


@dataclass(frozen=True)
class RadialProfile:
    R: float
    zeta: float

    def __post_init__(self):
        if not (self.R >= 0.0 and self.zeta >= 0.0) or math.isinf(self.R) or math.isinf(self.zeta):
            raise DomainError(f"profile needs finite R, zeta >= 0, got ({self.R}, {self.zeta})")

    @property
    def omega(self):
        if self.R == 0.0:
            return math.inf if self.zeta > 0.0 else 0.0
        return self.zeta / self.R

    @property
    def delta(self):
        if self.zeta == 0.0:
            return math.inf
        return math.sqrt(self.R / (math.pi * self.zeta))

    @property
    def kappa(self):
        return 2.0 * math.sqrt(math.pi * self.zeta * self.R)

    def scaled(self, t):
        """Profile of (x/sqrt(t), z/t)."""
        return RadialProfile(self.R / t, self.zeta / t)

    def dilated(self, lam):
        """Profile of delta_lam(x, z)."""
        return RadialProfile(lam * lam * self.R, lam * lam * self.zeta)


def radial_coordinates(g):
    """(R, |z|) for a point or a batch of points."""
    R = 0.25 * np.sum(g.x * g.x, axis=-1)
    zeta = np.linalg.norm(g.z, axis=-1)
    return R, zeta


#  GROUP LAW

def bracket(spec, x, xp):
    J = structure_matrices(spec)
    return np.einsum("kij,...j,...i->...k", J, x, xp)


def group_mul(spec, g, h):
    x = g.x + h.x
    z = g.z + h.z + 0.5 * bracket(spec, g.x, h.x)
    return Point(x, z)


def group_inv(spec, g):
    if not spec.concrete:
        raise DomainError("radial-only model has no group law")
    return Point(-g.x, -g.z)


def dilate(spec, lam, g):
    if not lam > 0:
        raise DomainError(f"dilation needs lambda > 0, got {lam}")
    return Point(lam * g.x, lam * lam * g.z)


#  HORIZONTAL FRAME
#  X_j f(g) = d/ds f(g . (s e_j, 0)) at s = 0, so differences run along right translates.

def _shifted(spec, g, j, s):
    e = np.zeros(2 * spec.n)
    e[j] = s
    return group_mul(spec, g, Point(e, np.zeros(spec.m)))


def _checked(values):
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise DomainError("non-finite field value in finite-difference stencil")
    return values


def _frame_derivative(spec, f, g, j, step):
    plus = _checked(f(_shifted(spec, g, j, step)))
    minus = _checked(f(_shifted(spec, g, j, -step)))
    return (plus - minus) / (2.0 * step)


def horizontal_gradient(spec, f, g, step=1e-4, richardson=False):
    """(X_1 f, ..., X_2n f) at g by central differences; last axis indexes the frame."""
    if not step > 0:
        raise DomainError("finite-difference step must be positive")
    cols = []
    for j in range(2 * spec.n):
        d = _frame_derivative(spec, f, g, j, step)
        if richardson:
            d = (4.0 * _frame_derivative(spec, f, g, j, step / 2.0) - d) / 3.0
        cols.append(d)
    return np.stack(cols, axis=-1)


def horizontal_grad_sq(spec, f, g, step=1e-4, richardson=False):
    grad = horizontal_gradient(spec, f, g, step=step, richardson=richardson)
    return np.sum(grad * grad, axis=-1)


def _second_difference(spec, f, g, j, step, center):
    plus = _checked(f(_shifted(spec, g, j, step)))
    minus = _checked(f(_shifted(spec, g, j, -step)))
    return (plus - 2.0 * center + minus) / (step * step)


def horizontal_laplacian(spec, f, g, step=1e-3, richardson=True):
    """Sum_j X_j^2 f at g."""
    center = _checked(f(g))
    total = 0.0
    for j in range(2 * spec.n):
        d = _second_difference(spec, f, g, j, step, center)
        if richardson:
            d = (4.0 * _second_difference(spec, f, g, j, step / 2.0, center) - d) / 3.0
        total = total + d
    return total


#  DISTANCE

def sr_distance(profile):
    """d = 2 sqrt(R) y / sin y with y = theta^{-1}(omega); limits at zeta = 0 and R = 0."""
    R, zeta = profile.R, profile.zeta
    if zeta == 0.0:
        return 2.0 * math.sqrt(R)
    if R == 0.0:
        return 2.0 * math.sqrt(math.pi * zeta)
    omega = zeta / R
    if omega > POLE_BRANCH_OMEGA:
        eps = theta_inv_complement(omega)
        return 2.0 * math.sqrt(R) * (math.pi - eps) / math.sin(eps)
    y = theta_inv(omega)
    if y < 1e-8:
        return 2.0 * math.sqrt(R)
    return 2.0 * math.sqrt(R) * y / math.sin(y)


def sr_distance_many(R, zeta):
    """Vectorised sr_distance over matching arrays of R and zeta."""
    R = np.asarray(R, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    flat = np.fromiter(
        (sr_distance(RadialProfile(float(r), float(s))) for r, s in zip(R.ravel(), zeta.ravel())),
        dtype=float, count=R.size,
    )
    return flat.reshape(R.shape)


def distance(spec, g):
    R, zeta = radial_coordinates(g)
    if np.ndim(R) == 0:
        return sr_distance(RadialProfile(float(R), float(zeta)))
    return sr_distance_many(R, zeta)
