"""Planar Brouwer degree by boundary winding and the fixed point index on the quadrant.

The index of a self-map ``N`` of the quadrant ``P`` on a relatively open
polygon ``U`` is computed as ``deg(I - N o rho, V)`` where ``rho`` is the
metric projection onto ``P`` and ``V`` is ``U`` with its edges on the
coordinate axes pushed outward. This is the finite-dimensional surrogate
for the index on a cone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .conditions import (
    BoundarySampler,
    ComponentShell,
    ConditionFlags,
    ProductRegion,
    check_norm_conditions,
    predicted_index,
)
from .geometry import ConeSpec, DomainError, FunctionalSpec, make_star_set

PlanarMap = Callable[[np.ndarray], np.ndarray]

ZERO_TOL = 1e-9
MAX_INCREMENT = math.pi / 2
EDGE_BUDGET = 2 ** 20
AXIS_TOL = 1e-14


class BoundaryZeroError(RuntimeError):
    """The field vanishes (numerically) on the boundary; the degree is undefined."""


@dataclass(frozen=True)
class PlanarRegion:
    """A simple polygon with counterclockwise vertices."""

    vertices: np.ndarray

    def __post_init__(self):
        V = np.asarray(self.vertices, dtype=float)
        if V.ndim != 2 or V.shape[1] != 2 or len(V) < 3:
            raise ValueError("a polygon needs at least three planar vertices")
        object.__setattr__(self, "vertices", V)
        if self.area <= 0:
            raise ValueError("polygon vertices must be counterclockwise (positive area)")
        if _self_intersects(V):
            raise ValueError("polygon is not simple")

    @property
    def area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    @property
    def edges(self) -> list[tuple[np.ndarray, np.ndarray]]:
        V = self.vertices
        return [(V[i], V[(i + 1) % len(V)]) for i in range(len(V))]

    def contains(self, p: np.ndarray) -> bool:
        """Strict interior test by ray casting."""
        x, y = float(p[0]), float(p[1])
        inside = False
        for a, b in self.edges:
            if (a[1] > y) != (b[1] > y):
                xc = a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
                if xc > x:
                    inside = not inside
        return inside

    def boundary_distance(self, p: np.ndarray) -> float:
        p = np.asarray(p, float)
        best = np.inf
        for a, b in self.edges:
            d = b - a
            u = np.clip(np.dot(p - a, d) / np.dot(d, d), 0.0, 1.0)
            best = min(best, float(np.linalg.norm(p - a - u * d)))
        return best

    @classmethod
    def rectangle(cls, x0: float, x1: float, y0: float, y1: float) -> "PlanarRegion":
        return cls(np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]]))

    @classmethod
    def circle(cls, center=(0.0, 0.0), radius: float = 1.0, m: int = 64) -> "PlanarRegion":
        th = np.linspace(0.0, 2 * np.pi, m, endpoint=False)
        return cls(np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)]))

    @classmethod
    def quarter_disk(cls, radius: float, m: int = 64) -> "PlanarRegion":
        th = np.linspace(0.0, np.pi / 2, m)
        arc = radius * np.column_stack([np.cos(th), np.sin(th)])
        return cls(np.vstack([[0.0, 0.0], arc]))


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def _self_intersects(V: np.ndarray) -> bool:
    m = len(V)
    if m > 400:
        return False  # too costly; discretised smooth curves are trusted
    for i in range(m):
        a, b = V[i], V[(i + 1) % m]
        for j in range(i + 2, m):
            if i == 0 and j == m - 1:
                continue
            if _segments_cross(a, b, V[j], V[(j + 1) % m]):
                return True
    return False


@dataclass
class DegreeResult:
    degree: int
    total_turning: float
    min_boundary_norm: float
    edge_count: int
    max_increment: float = 0.0
    label: str = "finite-dimensional surrogate"

    def to_dict(self) -> dict:
        return {
            "degree": self.degree, "total_turning": self.total_turning,
            "min_boundary_norm": self.min_boundary_norm, "edge_count": self.edge_count,
            "max_increment": self.max_increment, "label": self.label,
        }


def _eval_field(F: PlanarMap, P: np.ndarray) -> np.ndarray:
    return np.array([np.asarray(F(p), dtype=float) for p in P])


def winding_degree(F: PlanarMap, region: PlanarRegion, initial_per_edge: int = 16,
                   zero_tol: float = ZERO_TOL, budget: int = EDGE_BUDGET) -> DegreeResult:
    """Winding number of ``F`` along the polygon boundary around the origin.

    Every edge is bisected until consecutive field values differ in angle
    by less than pi/2; the signed increments are summed in edge order.
    """
    pts = []
    for a, b in region.edges:
        u = np.linspace(0.0, 1.0, initial_per_edge, endpoint=False)
        pts.append(a + u[:, None] * (b - a))
    P = np.vstack(pts)
    Fv = _eval_field(F, P)
    while True:
        nrm = np.linalg.norm(Fv, axis=1)
        k = int(np.argmin(nrm))
        if nrm[k] < zero_tol:
            raise BoundaryZeroError(f"|F| = {nrm[k]:.3e} at boundary point {P[k].tolist()}")
        ang = np.arctan2(Fv[:, 1], Fv[:, 0])
        inc = np.diff(np.append(ang, ang[0]))
        inc = (inc + np.pi) % (2 * np.pi) - np.pi
        bad = np.nonzero(np.abs(inc) >= MAX_INCREMENT)[0]
        if len(bad) == 0:
            total = float(inc.sum())
            deg = int(round(total / (2 * np.pi)))
            return DegreeResult(deg, total, float(nrm.min()), len(P), float(np.abs(inc).max()))
        if len(P) + len(bad) > budget:
            raise RuntimeError(f"refinement budget of {budget} edges exceeded")
        nxt = (bad + 1) % len(P)
        mids = 0.5 * (P[bad] + P[nxt])
        Fm = _eval_field(F, mids)
        P = np.insert(P, bad + 1, mids, axis=0)
        Fv = np.insert(Fv, bad + 1, Fm, axis=0)


def _axis_of(a: np.ndarray, b: np.ndarray) -> Optional[int]:
    """Coordinate index that vanishes along the edge, if the edge lies on an axis."""
    for k in (1, 0):
        if abs(a[k]) <= AXIS_TOL and abs(b[k]) <= AXIS_TOL:
            return k
    return None


def extrude_polygon(region: PlanarRegion, delta: Optional[float] = None) -> PlanarRegion:
    """Push the edges of ``region`` that lie on the coordinate axes outward by ``delta``."""
    V = region.vertices
    if np.any(V < -AXIS_TOL):
        raise DomainError("region is not inside the quadrant")
    m = len(V)
    if delta is None:
        delta = float(min(np.linalg.norm(b - a) for a, b in region.edges))
    axes = [_axis_of(V[i], V[(i + 1) % m]) for i in range(m)]
    out = []
    for i in range(m):
        prev_ax, next_ax = axes[i - 1], axes[i]
        v = V[i]
        push = np.zeros(2)
        for ax in (prev_ax, next_ax):
            if ax is not None:
                push[ax] = -delta
        if prev_ax is not None and next_ax is not None:
            out.append(v + push)
        elif prev_ax is not None:
            out += [v + push, v]
        elif next_ax is not None:
            out += [v, v + push]
        else:
            out.append(v)
    return PlanarRegion(np.array(out))


def project_quadrant(z: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(z, dtype=float), 0.0)


def cone_fixed_point_index(N: PlanarMap, U: PlanarRegion, delta: Optional[float] = None,
                           collar_check: bool = True, n_map_check: int = 64) -> DegreeResult:
    """``i_P(N, U)`` as ``deg(I - N o rho_P, V)`` with ``V`` the extruded polygon."""
    rng = np.random.default_rng(7)
    V = U.vertices
    lo, hi = V.min(axis=0), V.max(axis=0)
    for z in rng.uniform(lo, hi, size=(n_map_check, 2)):
        w = np.asarray(N(z), dtype=float)
        if np.any(w < -1e-12):
            raise DomainError(f"N does not map into the quadrant: N({z.tolist()}) = {w.tolist()}")

    def G(z):
        return z - np.asarray(N(project_quadrant(z)), dtype=float)

    ext = extrude_polygon(U, delta)
    res = winding_degree(G, ext)
    if collar_check and not np.array_equal(ext.vertices, U.vertices):
        d = 0.5 * (delta if delta is not None else float(min(np.linalg.norm(b - a) for a, b in U.edges)))
        res2 = winding_degree(G, extrude_polygon(U, d))
        if res2.degree != res.degree:
            raise RuntimeError("index depends on the collar width; zeros in the extruded collar")
    return res


# ---------------------------------------------------------------------------
# The planar operator with two rings of fixed points around the segment x + y = 1.

def default_psi(t):
    t = np.asarray(t, dtype=float)
    return (1.0 - t * t) / (1.0 + t * t)


def level_radius(theta):
    """Polar radius of the segment ``x + y = 1`` at angle ``theta``."""
    return 1.0 / (np.cos(theta) + np.sin(theta))


def star_bump_map(z: np.ndarray, eps: float, psi: Callable = default_psi) -> np.ndarray:
    """``lambda(r, theta) * z`` with ``lambda = 1 + psi((r - level_radius(theta)) / eps)``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    z = np.asarray(z, dtype=float)
    r = float(np.hypot(z[0], z[1]))
    if r == 0.0:
        return np.zeros(2)
    th = math.atan2(z[1], z[0])
    lam = 1.0 + float(psi((r - level_radius(th)) / eps))
    return lam * z


def star_annulus_polygon(outer_radius: float = 2.0, m_arc: int = 128) -> PlanarRegion:
    """``{x + y > 1, |z| < outer_radius}`` in the quadrant as a polygon."""
    th = np.linspace(0.0, np.pi / 2, m_arc)
    arc = outer_radius * np.column_stack([np.cos(th), np.sin(th)])
    return PlanarRegion(np.vstack([[1.0, 0.0], arc, [0.0, 1.0]]))


def expanding_sample_map(z: np.ndarray) -> np.ndarray:
    """``0.75 (x + y) z``: shrinks ``x + y = 1`` and grows the circle of radius 2."""
    z = np.asarray(z, dtype=float)
    return 0.75 * float(z[0] + z[1]) * z


@dataclass
class StarBumpReport:
    eps: float
    norm_margins: dict
    norm_pass: bool
    annulus_witnesses: list[dict]
    annulus_fail_everywhere: Optional[bool]
    fixed_points: list[dict]
    fixed_point_error: float
    component_index: int
    degree: dict
    product_checks: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _star_region(outer_radius: float = 2.0) -> ProductRegion:
    P = ConeSpec.quadrant()
    inner = make_star_set(FunctionalSpec("linear-sum", P), 1.0)
    outer = make_star_set(FunctionalSpec("euclidean", P), outer_radius)
    shell = ComponentShell(inner, outer)
    return ProductRegion((shell, shell))


def verify_star_bump_example(eps: float = 0.1, radii: Optional[np.ndarray] = None,
                             n_angles: int = 33, sampler: BoundarySampler = BoundarySampler(n_directions=257, n_other=4),
                             psi: Callable = default_psi) -> StarBumpReport:
    """Norm conditions, annulus counter-witnesses, located fixed points and indices."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    comp = lambda z: star_bump_map(z, eps, psi)
    T = lambda a, b: (comp(a), comp(b))
    region = _star_region()
    margins, ok = {}, True
    for j in (0, 1):
        inner, outer = check_norm_conditions(T, region, j, "compress", sampler)
        margins[f"component{j + 1}"] = {"inner": inner.margin, "outer": outer.margin}
        ok = ok and inner.passed and outer.passed

    witnesses, fail_all = [], None
    if eps < (1.0 - 1.0 / math.sqrt(2.0)) / 2.0:
        radii = np.geomspace(0.1, 10.0, 20) if radii is None else np.asarray(radii, float)
        th = np.linspace(0.0, np.pi / 2, 2049)
        fail_all = True
        for R in radii:
            k = int(np.argmax(np.abs(R - level_radius(th))))
            z = R * np.array([math.cos(th[k]), math.sin(th[k])])
            ratio = float(np.linalg.norm(comp(z)) / R)
            witnesses.append({"R": float(R), "theta": float(th[k]), "gap": float(abs(R - level_radius(th[k]))),
                              "norm_ratio": ratio, "found": ratio <= 1.0})
            fail_all = fail_all and ratio <= 1.0

    fps, err = [], 0.0
    g = lambda r, t: float(psi((r - level_radius(t)) / eps))
    for t in np.linspace(0.0, np.pi / 2, n_angles):
        ph = float(level_radius(t))
        for sign in (+1, -1):
            lo, hi = (ph, ph + 2 * eps) if sign > 0 else (ph - 2 * eps, ph)
            if lo <= 0:
                continue
            r = brentq(lambda s: g(s, t), lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
            z = r * np.array([math.cos(t), math.sin(t)])
            dev = abs(r - ph - sign * eps)
            err = max(err, dev)
            fps.append({"theta": float(t), "r": r, "sign": sign, "deviation": dev,
                        "residual": float(np.linalg.norm(comp(z) - z))})

    U = star_annulus_polygon(2.0)
    deg = cone_fixed_point_index(comp, U)
    products = []
    exp_deg = cone_fixed_point_index(expanding_sample_map, U).degree
    for flags in (("A", "A"), ("A", "B"), ("B", "B")):
        per = [deg.degree if f == "A" else exp_deg for f in flags]
        products.append({"flags": "".join(flags), "winding_product": per[0] * per[1],
                         "predicted": predicted_index(ConditionFlags(flags))})
    return StarBumpReport(eps, margins, ok, witnesses, fail_all, fps, err, deg.degree, deg.to_dict(), products)
