"""Sampled compression/expansion checks on products of conical shells.

Each check draws points ``x = (x1, x2)`` of
``D = (cl O1 minus Omega1) x (cl O2 minus Omega2)`` whose ``j``-th component
lies on one of the two boundaries of its shell, evaluates the operator and
records the worst margin together with the point achieving it. These are
numerical surrogates for statements quantified over whole boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import (
    DomainError,
    FunctionalAxiomReport,
    StarSet,
    beta_ray,
    cone_directions,
    evaluate_batch,
    verify_functional_axioms,
)

Operator = Callable[[np.ndarray, np.ndarray], tuple]

FLAVORS = ("norm", "homotopy", "order", "functional", "two-norm", "index")
PASS_FACTOR = 10.0


@dataclass
class ConditionReport:
    flavor: str
    side: str
    component: int
    margin: float
    witness: Optional[dict]
    samples_used: int
    threshold: float = 0.0
    strict: bool = True
    note: str = ""

    @property
    def passed(self) -> bool:
        if self.strict:
            return self.margin > self.threshold
        return self.margin >= -self.threshold

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def to_dict(self) -> dict:
        w = None
        if self.witness is not None:
            w = {k: (np.asarray(v).tolist() if isinstance(v, np.ndarray) else v)
                 for k, v in self.witness.items()}
        return {
            "flavor": self.flavor, "side": self.side, "component": self.component,
            "verdict": self.verdict, "margin": self.margin, "threshold": self.threshold,
            "strict": self.strict, "witness": w, "samples_used": self.samples_used,
            "note": self.note,
        }


@dataclass(frozen=True)
class ComponentShell:
    """Inner star set ``Omega`` whose closure sits inside the outer set ``O``."""

    inner: StarSet
    outer: StarSet

    @property
    def cone(self):
        return self.inner.cone


@dataclass
class ProductRegion:
    shells: tuple[ComponentShell, ComponentShell]
    validate: bool = True
    n_check: int = 256

    def __post_init__(self):
        if len(self.shells) != 2:
            raise ValueError("a product region has exactly two components")
        if self.validate:
            rng = np.random.default_rng(12345)
            for j, sh in enumerate(self.shells):
                if sh.inner.cone != sh.outer.cone:
                    raise ValueError(f"component {j + 1}: inner and outer sets live in different cones")
                D = cone_directions(sh.cone, self.n_check, rng)
                B = ray_hits(sh.inner, D)[:, None] * D
                worst = float(evaluate_batch(sh.outer.functional, B).max())
                if worst >= sh.outer.level:
                    raise DomainError(
                        f"component {j + 1}: closure of the inner set is not inside the outer set "
                        f"(outer functional reaches {worst:g} >= {sh.outer.level:g})"
                    )

    def __getitem__(self, j: int) -> ComponentShell:
        return self.shells[j]


def ray_hits(star: StarSet, D: np.ndarray) -> np.ndarray:
    """Scalars ``s`` with ``phi(s * d) = level`` for each row ``d`` of ``D``."""
    D = np.atleast_2d(D)
    if star.functional.is_homogeneous:
        return star.level / evaluate_batch(star.functional, D)
    out = np.empty(len(D))
    for k, d in enumerate(D):
        s0 = star.inner_radius / float(star.cone.norm(d))
        out[k] = beta_ray(star, s0 * d) * s0
    return out


@dataclass(frozen=True)
class BoundarySampler:
    """How densely boundaries and the other component's shell are sampled."""

    n_directions: int = 256
    n_other: int = 8
    seed: int = 0

    def refine(self, factor: int = 2) -> "BoundarySampler":
        return BoundarySampler(self.n_directions * factor, self.n_other * factor, self.seed)

    def shell_points(self, shell: ComponentShell, m: int, rng) -> np.ndarray:
        """Points of ``cl O minus Omega`` spread along rays, endpoints included."""
        D = cone_directions(shell.cone, m, rng)
        if shell.cone.ambient == "plane":
            D = D[rng.permutation(m)]
        a = ray_hits(shell.inner, D)
        b = ray_hits(shell.outer, D)
        u = rng.uniform(0.0, 1.0, m)
        u[: min(2, m)] = [0.0, 1.0][: min(2, m)]
        return (a + u * (b - a))[:, None] * D

    def points(self, region: ProductRegion, j: int, side: str) -> list[tuple[np.ndarray, np.ndarray]]:
        """Sample pairs with component ``j`` on ``side`` (``inner``/``outer``/``shell``)."""
        rng = np.random.default_rng([self.seed, j, {"inner": 0, "outer": 1, "shell": 2}[side]])
        sh = region[j]
        if side == "shell":
            Xj = self.shell_points(sh, self.n_directions, rng)
        else:
            star = sh.inner if side == "inner" else sh.outer
            D = cone_directions(sh.cone, self.n_directions, rng)
            Xj = ray_hits(star, D)[:, None] * D
        Xi = self.shell_points(region[1 - j], self.n_other, rng)
        pts = []
        for xj in Xj:
            for xi in Xi:
                pts.append((xj, xi) if j == 0 else (xi, xj))
        return pts


def _evaluate(T: Operator, region: ProductRegion, j: int, pts, tol: float) -> list[np.ndarray]:
    cone = region[j].cone
    out = []
    for x in pts:
        y = np.asarray(T(x[0], x[1])[j], dtype=float)
        if not cone.contains(y, tol=1e-7):
            raise DomainError(
                f"operator component {j + 1} left its cone (violation {float(cone.violation(y)):.3e})"
            )
        out.append(y)
    return out


def _report(flavor: str, side: str, j: int, scores: np.ndarray, pts, extra: Sequence[dict],
            tol: float, note: str = "") -> ConditionReport:
    k = int(np.argmin(scores))
    witness = {"x1": pts[k][0], "x2": pts[k][1], **extra[k]}
    return ConditionReport(flavor, side, j + 1, float(scores[k]), witness, len(pts),
                           threshold=PASS_FACTOR * tol, note=note)


def ray_distance(cone, v: np.ndarray, d: np.ndarray, lo: float = 0.0) -> tuple[float, float]:
    """``min over mu >= lo of ||v - mu d||`` in the cone's ambient norm; returns (dist, mu)."""
    v = np.asarray(v, float)
    d = np.asarray(d, float)
    nd = float(cone.norm(d))
    if nd == 0.0:
        return float(cone.norm(v)), lo
    if cone.ambient == "plane":
        mu = max(lo, float(v @ d) / float(d @ d))
        return float(np.linalg.norm(v - mu * d)), mu
    # sup-norm: convex piecewise linear in mu, minimised by golden section
    f = lambda mu: float(np.max(np.abs(v - mu * d)))
    hi = max(lo, (f(lo) + float(cone.norm(v))) / nd)
    a, b = lo, hi
    g = (np.sqrt(5.0) - 1.0) / 2.0
    c, e = b - g * (b - a), a + g * (b - a)
    fc, fe = f(c), f(e)
    for _ in range(200):
        if b - a <= 1e-14 * max(1.0, hi):
            break
        if fc < fe:
            b, e, fe = e, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, e, fe
            e = a + g * (b - a)
            fe = f(e)
    mu = 0.5 * (a + b)
    best = min((f(lo), lo), (f(mu), mu))
    return best


def _sides(flavor: str) -> tuple[str, str]:
    if flavor not in ("compress", "expand"):
        raise ValueError(f"flavor must be 'compress' or 'expand', got {flavor!r}")
    return ("inner", "outer")


def check_norm_conditions(T: Operator, region: ProductRegion, j: int, flavor: str = "compress",
                          sampler: BoundarySampler = BoundarySampler(), tol: float = 1e-10):
    """``||T_j x|| > ||x_j||`` on one boundary and ``<`` on the other.

    Compression puts ``>`` on the inner boundary; expansion on the outer.
    Returns the (inner, outer) reports.
    """
    _sides(flavor)
    cone = region[j].cone
    reports = []
    for side in ("inner", "outer"):
        pts = sampler.points(region, j, side)
        Y = _evaluate(T, region, j, pts, tol)
        nx = np.array([float(cone.norm(p[j])) for p in pts])
        ny = np.array([float(cone.norm(y)) for y in Y])
        grow = (side == "inner") == (flavor == "compress")
        scores = ny - nx if grow else nx - ny
        extra = [{"norm_x": a, "norm_Tx": b} for a, b in zip(nx, ny)]
        reports.append(_report("norm", side, j, scores, pts, extra, tol))
    return tuple(reports)


def _collinear_scores(cone, pts, Y, j):
    scores, extra = [], []
    for p, y in zip(pts, Y):
        dist, lam = ray_distance(cone, y, p[j], lo=1.0)
        scores.append(dist)
        extra.append({"lambda": lam})
    return np.array(scores), extra


def check_homotopy_conditions(T: Operator, region: ProductRegion, j: int,
                              h: Optional[np.ndarray] = None, flavor: str = "compress",
                              sampler: BoundarySampler = BoundarySampler(), tol: float = 1e-10):
    """``x_j - T_j x != mu h`` (mu >= 0) on one boundary, no ``T_j x = l x_j`` (l >= 1) on the other."""
    _sides(flavor)
    cone = region[j].cone
    h = cone.anchor() if h is None else np.asarray(h, float)
    if float(cone.norm(h)) == 0.0:
        raise ValueError("h must be nonzero")
    ray_side = "inner" if flavor == "compress" else "outer"
    reports = []
    for side in ("inner", "outer"):
        pts = sampler.points(region, j, side)
        Y = _evaluate(T, region, j, pts, tol)
        if side == ray_side:
            scores, extra = [], []
            for p, y in zip(pts, Y):
                dist, mu = ray_distance(cone, p[j] - y, h)
                scores.append(dist)
                extra.append({"mu": mu})
            scores = np.array(scores)
        else:
            scores, extra = _collinear_scores(cone, pts, Y, j)
        reports.append(_report("homotopy", side, j, scores, pts, extra, tol))
    return tuple(reports)


def check_order_conditions(T: Operator, region: ProductRegion, j: int, flavor: str = "compress",
                           sampler: BoundarySampler = BoundarySampler(), tol: float = 1e-10):
    """Classical cone-order conditions.

    Compression: ``T_j x`` not below ``x_j`` on the inner boundary and not
    above it on the outer one. The margin is the smallest cone violation.
    """
    _sides(flavor)
    cone = region[j].cone
    reports = []
    for side in ("inner", "outer"):
        pts = sampler.points(region, j, side)
        Y = _evaluate(T, region, j, pts, tol)
        not_below = (side == "inner") == (flavor == "compress")
        diffs = [(p[j] - y) if not_below else (y - p[j]) for p, y in zip(pts, Y)]
        scores = np.array([float(cone.violation(d)) for d in diffs])
        extra = [{} for _ in pts]
        reports.append(_report("order", side, j, scores, pts, extra, tol))
    return tuple(reports)


def check_functional_conditions(T: Operator, region: ProductRegion, j: int, flavor: str = "compress",
                                sampler: BoundarySampler = BoundarySampler(), tol: float = 1e-10,
                                axioms: Optional[tuple[FunctionalAxiomReport, FunctionalAxiomReport]] = None,
                                label: str = "functional"):
    """``phi_j(T_j x) > r_j`` on ``phi_j = r_j`` and ``psi_j(T_j x) < R_j`` on ``psi_j = R_j``.

    Expansion reverses both inequalities. The functionals must satisfy the
    norm-bound and subhomogeneity axioms; they are verified here unless
    reports are passed in.
    """
    _sides(flavor)
    sh = region[j]
    if axioms is None:
        axioms = (verify_functional_axioms(sh.inner.functional), verify_functional_axioms(sh.outer.functional))
    for rep in axioms:
        if not rep.passed:
            raise ValueError(f"functional {rep.functional} fails the star-shape axioms")
    reports = []
    for side, star in (("inner", sh.inner), ("outer", sh.outer)):
        pts = sampler.points(region, j, side)
        Y = _evaluate(T, region, j, pts, tol)
        vals = evaluate_batch(star.functional, np.array(Y))
        above = (side == "inner") == (flavor == "compress")
        scores = vals - star.level if above else star.level - vals
        extra = [{"value_Tx": float(v), "level": star.level} for v in vals]
        reports.append(_report(label, side, j, scores, pts, extra, tol))
    return tuple(reports)


def check_two_norm_conditions(T: Operator, region: ProductRegion, j: int, flavor: str = "compress",
                              sampler: BoundarySampler = BoundarySampler(), tol: float = 1e-10):
    """Functional conditions where both level functionals are norms."""
    return check_functional_conditions(T, region, j, flavor, sampler, tol, label="two-norm")


def check_index_conditions(T: Operator, region: ProductRegion, j: int, flavor: str = "compress",
                           S: Optional[Operator] = None, sampler: BoundarySampler = BoundarySampler(),
                           tol: float = 1e-10):
    """The general compressive/expansive hypotheses with an auxiliary map ``S``.

    Returns three reports: no ``T_j x = l x_j`` (l >= 1) on the collinearity
    boundary, ``inf ||S_j x|| > 0`` over the shell product, and
    ``x_j - T_j x != mu S_j x`` (mu >= 0) on the other boundary. ``S``
    defaults to ``T`` itself.
    """
    _sides(flavor)
    S = T if S is None else S
    cone = region[j].cone
    col_side, ray_side = ("outer", "inner") if flavor == "compress" else ("inner", "outer")

    pts = sampler.points(region, j, col_side)
    Y = _evaluate(T, region, j, pts, tol)
    scores, extra = _collinear_scores(cone, pts, Y, j)
    rep_a = _report("index", col_side, j, scores, pts, extra, tol, note="no T_j x = lambda x_j, lambda >= 1")

    pts_d = sampler.points(region, j, "shell") + sampler.points(region, j, "inner") + sampler.points(region, j, "outer")
    SY = _evaluate(S, region, j, pts_d, tol)
    s_norms = np.array([float(cone.norm(y)) for y in SY])
    rep_bi = _report("index", "shell", j, s_norms, pts_d, [{} for _ in pts_d], tol, note="inf ||S_j x|| > 0")

    pts = sampler.points(region, j, ray_side)
    Y = _evaluate(T, region, j, pts, tol)
    SY = _evaluate(S, region, j, pts, tol)
    scores, extra = [], []
    for p, y, s in zip(pts, Y, SY):
        dist, mu = ray_distance(cone, p[j] - y, s)
        scores.append(dist)
        extra.append({"mu": mu})
    rep_bii = _report("index", ray_side, j, np.array(scores), pts, extra, tol,
                      note="x_j - T_j x != mu S_j x, mu >= 0")
    return rep_a, rep_bi, rep_bii


def refine_until_stable(check: Callable[[BoundarySampler], tuple], sampler: BoundarySampler,
                        levels: int = 2) -> tuple:
    """Re-run a check on refined samplers; any failure found is kept.

    A side that fails at some resolution stays failed: its witness is the
    worst one found over all resolutions.
    """
    best = list(check(sampler))
    s = sampler
    for _ in range(levels):
        s = s.refine()
        new = check(s)
        for k, rep in enumerate(new):
            if rep.margin < best[k].margin:
                best[k] = rep
    return tuple(best)


@dataclass(frozen=True)
class ConditionFlags:
    """Per-component behaviour: ``A`` compressive, ``B`` expansive."""

    flags: tuple[str, str]

    def __post_init__(self):
        if len(self.flags) != 2 or any(f not in ("A", "B") for f in self.flags):
            raise ValueError(f"flags must be a pair of 'A'/'B', got {self.flags!r}")

    @property
    def k(self) -> int:
        return sum(f == "B" for f in self.flags)


def predicted_index(flags: ConditionFlags) -> int:
    """Index of the operator on the product shell: ``(-1)**k`` with ``k`` expansive components."""
    return (-1) ** flags.k


def flags_from_reports(reports_by_component: Sequence[tuple[str, Sequence[ConditionReport]]]) -> Optional[ConditionFlags]:
    """Flags from (flavor, reports) per component; ``None`` if any report fails."""
    out = []
    for flavor, reps in reports_by_component:
        if not all(r.passed for r in reps):
            return None
        out.append("A" if flavor == "compress" else "B")
    return ConditionFlags(tuple(out))
