"""Cones, subhomogeneous functionals and strictly star-shaped level sets.

Everything lives in R^n: either the closed first quadrant of the plane or
nonnegative functions sampled on a uniform grid of [0, 1]. A star set is
``{x in K : phi(x) < r}``; the ray map ``beta_ray`` pushes a point out to
the level ``phi = r`` and ``retract_rho`` turns that into a retraction of
the closed set onto its relative boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .quadrature import simpson_weights, trapezoid_weights

# Relative tolerance on phi(x) - r when classifying interior / boundary.
BOUNDARY_RTOL = 1e-9
J_NODE_TOL = 1e-12


class DomainError(ValueError):
    """A point is outside the cone or outside the closed star set."""


class BracketError(RuntimeError):
    """The level ``phi = r`` could not be bracketed along a ray."""


@dataclass(frozen=True)
class ConeSpec:
    """A cone in the plane (``ambient='plane'``) or in grid-function space.

    ``constraint`` is ``nonneg``, ``lower-bound`` (x >= c * sup|x| on the
    grid nodes inside ``J``) or ``concave-nonincreasing``.
    """

    ambient: str = "plane"
    n: int = 2
    constraint: str = "nonneg"
    c: float = 0.0
    J: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.ambient not in ("plane", "grid"):
            raise ValueError(f"unknown ambient {self.ambient!r}")
        if self.ambient == "plane" and (self.n != 2 or self.constraint != "nonneg"):
            raise ValueError("the plane cone is the closed first quadrant")
        if self.constraint not in ("nonneg", "lower-bound", "concave-nonincreasing"):
            raise ValueError(f"unknown cone constraint {self.constraint!r}")
        if self.constraint == "lower-bound" and not 0.0 < self.c < 1.0:
            raise ValueError("lower-bound cones need c in (0, 1)")
        if not 0.0 <= self.J[0] <= self.J[1] <= 1.0:
            raise ValueError(f"J={self.J} is not a closed subinterval of [0, 1]")

    @classmethod
    def quadrant(cls) -> "ConeSpec":
        return cls()

    @classmethod
    def grid(cls, n: int, constraint: str = "nonneg", c: float = 0.0,
             J: tuple[float, float] = (0.0, 1.0)) -> "ConeSpec":
        return cls("grid", n, constraint, c, tuple(J))

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n)

    def J_mask(self, J: Optional[tuple[float, float]] = None) -> np.ndarray:
        a, b = self.J if J is None else J
        t = self.nodes
        mask = (t >= a - J_NODE_TOL) & (t <= b + J_NODE_TOL)
        if not mask.any():
            raise ValueError(f"J=[{a}, {b}] contains no grid node")
        return mask

    def norm(self, x: np.ndarray) -> np.ndarray:
        """Euclidean norm in the plane, sup-norm on grids (row-wise)."""
        x = np.asarray(x, dtype=float)
        if self.ambient == "plane":
            return np.linalg.norm(x, axis=-1)
        return np.max(np.abs(x), axis=-1)

    def violation(self, x: np.ndarray) -> np.ndarray:
        """How far ``x`` is from satisfying the cone inequalities (<= 0 inside)."""
        x = np.asarray(x, dtype=float)
        v = -np.min(x, axis=-1)
        if self.constraint == "lower-bound":
            sup = np.max(np.abs(x), axis=-1)
            xj = x[..., self.J_mask()]
            v = np.maximum(v, np.max(self.c * sup[..., None] - xj, axis=-1))
        elif self.constraint == "concave-nonincreasing":
            d1 = np.diff(x, axis=-1)
            d2 = np.diff(x, n=2, axis=-1)
            v = np.maximum(v, np.max(d1, axis=-1))
            if d2.shape[-1]:
                v = np.maximum(v, np.max(d2, axis=-1))
        return v

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        scale = np.maximum(1.0, self.norm(x))
        return self.violation(x) <= tol * scale

    def leq(self, u: np.ndarray, v: np.ndarray, tol: float = 1e-12) -> bool:
        """Cone order: ``u <= v`` iff ``v - u`` is in the cone."""
        return bool(self.contains(np.asarray(v) - np.asarray(u), tol))

    def anchor(self) -> np.ndarray:
        if self.ambient == "plane":
            return np.array([1.0, 1.0]) / math.sqrt(2.0)
        return np.ones(self.n)


@dataclass(frozen=True)
class SamplePlan:
    n: int = 1000
    seed: int = 0
    log10_scale: tuple[float, float] = (-3.0, 1.5)


def _fourier_profiles(rng: np.random.Generator, m: int, t: np.ndarray) -> np.ndarray:
    k = np.arange(1, 6)
    a = rng.normal(size=(m, 5)) / k
    b = rng.normal(size=(m, 5)) / k
    a0 = rng.uniform(0.0, 2.0, size=(m, 1))
    P = a0 + a @ np.cos(np.pi * np.outer(k, t)) + b @ np.sin(np.pi * np.outer(k, t))
    return np.abs(P)


def _concave_profiles(rng: np.random.Generator, m: int, t: np.ndarray) -> np.ndarray:
    # min of nonincreasing affine pieces: nonneg, nonincreasing and concave
    a = rng.uniform(0.0, 1.0, size=(m, 4, 1))
    b = rng.exponential(1.0, size=(m, 4, 1))
    a[:, 0] += 0.05
    return np.min(a + b * (1.0 - t)[None, None, :], axis=1)


def cone_directions(cone: ConeSpec, m: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-norm cone elements; an angle grid in the plane."""
    if cone.ambient == "plane":
        th = np.linspace(0.0, np.pi / 2.0, m)
        return np.column_stack([np.cos(th), np.sin(th)])
    t = cone.nodes
    if cone.constraint == "concave-nonincreasing":
        X = _concave_profiles(rng, m, t)
    else:
        half = m // 2
        X = np.vstack([_fourier_profiles(rng, m - half, t), _concave_profiles(rng, half, t)])
        X = X[rng.permutation(m)]
    X = X / np.max(X, axis=1, keepdims=True)
    if cone.constraint == "lower-bound":
        mask = cone.J_mask()
        X[:, mask] = np.maximum(X[:, mask], cone.c)
    return X


def sample_cone(cone: ConeSpec, plan: SamplePlan = SamplePlan(),
                rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """``plan.n`` cone elements with norms spread log-uniformly over ``plan.log10_scale``."""
    rng = np.random.default_rng(plan.seed) if rng is None else rng
    if cone.ambient == "plane":
        th = rng.uniform(0.0, np.pi / 2.0, plan.n)
        D = np.column_stack([np.cos(th), np.sin(th)])
    else:
        D = cone_directions(cone, plan.n, rng)
    scale = 10.0 ** rng.uniform(*plan.log10_scale, size=(plan.n, 1))
    return D * scale


HOMOGENEOUS_FAMILIES = {
    "weighted-min-sup", "min-on-J", "max-on-J", "half-sum",
    "l1-norm", "sup-norm", "euclidean", "linear-sum",
}


@dataclass(frozen=True)
class FunctionalSpec:
    """A nonnegative functional on a cone.

    ``custom`` functionals carry a callable acting on one cone element and
    an optional ``homogeneous`` declaration; unknown means bisection is used
    for the ray map.
    """

    family: str
    cone: ConeSpec
    alpha: float = 0.0
    beta: float = 1.0
    J: Optional[tuple[float, float]] = None
    fn: Optional[Callable[[np.ndarray], float]] = field(default=None, compare=False)
    homogeneous: Optional[bool] = None
    name: str = ""

    def __post_init__(self):
        fam = self.family
        if fam not in HOMOGENEOUS_FAMILIES and fam != "custom":
            raise ValueError(f"unknown functional family {fam!r}")
        if fam == "custom" and self.fn is None:
            raise ValueError("custom functionals need a callable")
        if fam in ("linear-sum", "euclidean") and self.cone.ambient != "plane":
            raise ValueError(f"{fam} is a plane functional")
        if fam in ("min-on-J", "max-on-J", "half-sum", "weighted-min-sup", "l1-norm"):
            if self.cone.ambient != "grid":
                raise ValueError(f"{fam} acts on grid functions")
            self.cone.J_mask(self.interval)  # raises when J misses the grid
        if fam == "weighted-min-sup" and (self.alpha < 0 or self.beta <= 0):
            raise ValueError("weighted-min-sup needs alpha >= 0 and beta > 0")

    @property
    def interval(self) -> tuple[float, float]:
        return self.J if self.J is not None else self.cone.J

    @property
    def is_homogeneous(self) -> bool:
        if self.family == "custom":
            return bool(self.homogeneous)
        return True

    @property
    def label(self) -> str:
        return self.name or self.family


def evaluate_batch(phi: FunctionalSpec, X: np.ndarray) -> np.ndarray:
    """Row-wise evaluation without the domain check."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    fam = phi.family
    if fam == "custom":
        return np.array([float(phi.fn(x)) for x in X])
    if fam == "linear-sum":
        return X.sum(axis=1)
    if fam == "euclidean":
        return np.linalg.norm(X, axis=1)
    if fam == "sup-norm":
        return np.max(np.abs(X), axis=1)
    if fam == "l1-norm":
        n = X.shape[1]
        w = simpson_weights(n) if n % 2 == 1 else trapezoid_weights(n)
        return np.abs(X) @ w
    mask = phi.cone.J_mask(phi.interval)
    if fam == "min-on-J":
        return np.min(X[:, mask], axis=1)
    if fam == "max-on-J":
        return np.max(X[:, mask], axis=1)
    sup = np.max(np.abs(X), axis=1)
    mn = np.min(np.abs(X[:, mask]), axis=1)
    if fam == "half-sum":
        return 0.5 * (mn + sup)
    return phi.alpha * mn + phi.beta * sup


def functional_eval(phi: FunctionalSpec, x: np.ndarray, tol: float = 1e-9) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (phi.cone.n,):
        raise DomainError(f"expected a point with {phi.cone.n} entries, got shape {x.shape}")
    if not phi.cone.contains(x, tol):
        raise DomainError(f"point violates the cone constraint by {float(phi.cone.violation(x)):.3e}")
    return float(evaluate_batch(phi, x)[0])


@dataclass
class FunctionalAxiomReport:
    functional: str
    c_lower: float
    c_upper: float
    c1_witness: np.ndarray
    c1_pass: bool
    c2_violation: float
    c2_witness: tuple[np.ndarray, float]
    c2_pass: bool
    samples_used: int

    @property
    def passed(self) -> bool:
        return self.c1_pass and self.c2_pass


def verify_functional_axioms(phi: FunctionalSpec, samples: Optional[np.ndarray] = None,
                             plan: SamplePlan = SamplePlan(), tol: float = 1e-10,
                             n_lambda: int = 101) -> FunctionalAxiomReport:
    """Sampled check of ``c||x|| <= phi(x)`` and ``phi(lx) <= l phi(x)`` for l in [0, 1)."""
    cone = phi.cone
    X = sample_cone(cone, plan) if samples is None else np.atleast_2d(np.asarray(samples, float))
    if len(X) < 1000:
        raise ValueError(f"need at least 1000 samples, got {len(X)}")
    inside = cone.contains(X)
    if not inside.all():
        raise DomainError(f"sampler produced {int((~inside).sum())} points outside the cone")
    norms = cone.norm(X)
    X = X[norms > 0]
    norms = norms[norms > 0]
    if np.log10(norms.max() / norms.min()) < 3.0:
        raise ValueError("samples must span at least three orders of magnitude in norm")
    vals = evaluate_batch(phi, X)
    ratio = vals / norms
    k = int(np.argmin(ratio))
    c_lower = float(ratio[k])

    lams = np.linspace(0.0, 1.0, n_lambda)[:-1]
    worst, wx, wl = -np.inf, X[0], 0.0
    for lam in lams:
        gap = (evaluate_batch(phi, lam * X) - lam * vals) / np.maximum(1.0, vals)
        i = int(np.argmax(gap))
        if gap[i] > worst:
            worst, wx, wl = float(gap[i]), X[i], float(lam)
    return FunctionalAxiomReport(
        functional=phi.label, c_lower=c_lower, c_upper=float(ratio.max()),
        c1_witness=X[k], c1_pass=c_lower > tol,
        c2_violation=worst, c2_witness=(wx, wl), c2_pass=worst <= tol,
        samples_used=len(X),
    )


@dataclass(frozen=True)
class StarSet:
    """``{x in K : phi(x) < level}`` with an inner ball radius and an anchor.

    The closed ball ``{||x|| <= inner_radius}`` must sit inside the set; use
    :func:`make_star_set` to get sampled defaults and the inclusion check.
    """

    functional: FunctionalSpec
    level: float
    inner_radius: float
    anchor: np.ndarray = field(compare=False)

    @property
    def cone(self) -> ConeSpec:
        return self.functional.cone

    def value(self, x: np.ndarray) -> float:
        return float(evaluate_batch(self.functional, x)[0])

    def classify(self, x: np.ndarray) -> str:
        """``interior``, ``boundary`` or ``exterior`` at the boundary tolerance."""
        v = self.value(x)
        if abs(v - self.level) <= BOUNDARY_RTOL * self.level:
            return "boundary"
        return "interior" if v < self.level else "exterior"


def norm_bounds(phi: FunctionalSpec, level: float, n: int = 256, seed: int = 0) -> tuple[float, float]:
    """Sampled ``c_lower <= phi(x)/||x|| <= c_upper`` for ``||x||`` up to ``level``-ish scales."""
    rng = np.random.default_rng(seed)
    D = cone_directions(phi.cone, n, rng)
    D = D / phi.cone.norm(D)[:, None]
    ratios = []
    for s in level * np.geomspace(1e-3, 1.0, 7):
        ratios.append(evaluate_batch(phi, s * D) / s)
    R = np.concatenate(ratios)
    return float(R.min()), float(R.max())


def make_star_set(phi: FunctionalSpec, level: float, inner_radius: Optional[float] = None,
                  anchor: Optional[np.ndarray] = None, n_check: int = 512, seed: int = 0) -> StarSet:
    if level <= 0:
        raise ValueError("star set level must be positive")
    cone = phi.cone
    h = cone.anchor() if anchor is None else np.asarray(anchor, dtype=float)
    if cone.norm(h) == 0 or not cone.contains(h):
        raise DomainError("anchor must be a nonzero cone element")
    c_lo, c_hi = norm_bounds(phi, level, seed=seed)
    if c_lo <= 0:
        raise ValueError(f"{phi.label}: no positive lower norm bound on samples")
    r0 = 0.5 * level * c_lo / c_hi if inner_radius is None else float(inner_radius)
    if r0 <= 0:
        raise ValueError("inner radius must be positive")
    # sampled check of the closed inner ball sitting inside the set
    D = cone_directions(cone, n_check, np.random.default_rng(seed + 1))
    D = D / cone.norm(D)[:, None]
    worst = float(evaluate_batch(phi, r0 * D).max())
    if worst >= level * (1.0 - BOUNDARY_RTOL):
        raise DomainError(
            f"inner ball of radius {r0:g} is not inside {{{phi.label} < {level:g}}}: "
            f"found phi = {worst:g} on its sphere"
        )
    return StarSet(phi, float(level), r0, h)


def _check_closure(omega: StarSet, x: np.ndarray, tol: float = 1e-9) -> float:
    x = np.asarray(x, dtype=float)
    if not omega.cone.contains(x, tol):
        raise DomainError("point is not in the cone")
    v = omega.value(x)
    if v > omega.level * (1.0 + BOUNDARY_RTOL):
        raise DomainError(f"point is outside the closed star set ({omega.functional.label} = {v:g} > {omega.level:g})")
    return v


def beta_ray(omega: StarSet, x: np.ndarray, rtol: float = 1e-12, max_doublings: int = 64,
             max_bisections: int = 200) -> float:
    """The unique ``beta >= 1`` with ``phi(beta * x) = level``."""
    x = np.asarray(x, dtype=float)
    if omega.cone.norm(x) == 0.0:
        raise DomainError("beta is unbounded at the origin")
    v = _check_closure(omega, x)
    r = omega.level
    if v >= r:
        return 1.0
    phi = omega.functional
    if phi.is_homogeneous:
        if v <= 0.0:
            raise DomainError("functional vanishes at a nonzero point; no positive norm bound")
        return r / v
    lo, hi = 1.0, 2.0
    for _ in range(max_doublings):
        if omega.value(hi * x) >= r:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise BracketError(f"level {r:g} not reached within {max_doublings} doublings")
    for _ in range(max_bisections):
        if hi - lo <= rtol * hi:
            break
        mid = 0.5 * (lo + hi)
        if omega.value(mid * x) < r:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def boundary_point(omega: StarSet, x: np.ndarray) -> np.ndarray:
    return beta_ray(omega, x) * np.asarray(x, dtype=float)


def retract_rho(omega: StarSet, x: np.ndarray) -> np.ndarray:
    """Retraction of the closed star set onto its relative boundary.

    Points of the inner ball are first pushed off the origin along the
    anchor, renormalised to the inner sphere, then sent out along their ray.
    """
    x = np.asarray(x, dtype=float)
    _check_closure(omega, x)
    cone, r0, h = omega.cone, omega.inner_radius, omega.anchor
    nx = float(cone.norm(x))
    if nx <= r0:
        w = x + (r0 - nx) * h
        y = r0 * w / float(cone.norm(w))
        return beta_ray(omega, y) * y
    return beta_ray(omega, x) * x


def extend_theta(omega: StarSet, x: np.ndarray, outer: Optional[StarSet] = None) -> np.ndarray:
    """Identity off the star set, the retraction inside it."""
    x = np.asarray(x, dtype=float)
    if outer is not None:
        _check_closure(outer, x)
    elif not omega.cone.contains(x):
        raise DomainError("point is not in the cone")
    if omega.value(x) < omega.level * (1.0 - BOUNDARY_RTOL):
        return retract_rho(omega, x)
    return x.copy()
