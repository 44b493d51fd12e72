"""Phi-Laplacian systems ``(Phi_j(x_j'))' + f_j(x_1, x_2) = 0``, ``x_j'(0) = x_j(1) = 0``.

Solutions are fixed points of
``T_j x(t) = int_t^1 Phi_j^{-1}(int_0^s f_j(x(tau)) dtau) ds`` on the cone of
nonnegative, concave, nonincreasing functions; localization uses the
integral functional ``gamma(x) = int_0^1 x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .geometry import ConeSpec, FunctionalSpec, evaluate_batch
from .hammerstein import (
    Certificate,
    Check,
    ConvergenceError,
    PreconditionError,
    SolverResult,
    anderson_fixed_point,
    box_extremum,
    make_check,
)
from .quadrature import uniform_grid


class SearchError(RuntimeError):
    """No admissible small radius was found, or the asymptotic hypotheses fail."""

    def __init__(self, message: str, evidence: Optional[dict] = None):
        super().__init__(message)
        self.evidence = evidence or {}


@dataclass(frozen=True)
class PhiSpec:
    """An increasing odd homeomorphism ``Phi: (-a, a) -> R``."""

    kind: str = "minkowski"
    p: Optional[float] = None
    a: Optional[float] = None
    phi: Optional[Callable] = field(default=None, compare=False)
    phi_inv: Optional[Callable] = field(default=None, compare=False)
    range_bound: float = math.inf

    def __post_init__(self):
        if self.kind == "p-laplacian":
            if self.p is None or self.p <= 1:
                raise ValueError("p-laplacian needs p > 1")
            object.__setattr__(self, "a", math.inf)
        elif self.kind == "minkowski":
            object.__setattr__(self, "a", 1.0)
        elif self.kind == "custom":
            if self.phi is None:
                raise ValueError("custom Phi needs a callable")
            if self.a is None:
                object.__setattr__(self, "a", math.inf)
        else:
            raise ValueError(f"unknown Phi kind {self.kind!r}")
        if not self.a > 0:
            raise ValueError("domain half-width a must be positive")

    @property
    def singular(self) -> bool:
        return math.isfinite(self.a)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "p-laplacian":
            return np.abs(x) ** (self.p - 2.0) * x if self.p != 2 else x.copy()
        if self.kind == "minkowski":
            with np.errstate(divide="ignore", invalid="ignore"):
                return x / np.sqrt(1.0 - x * x)
        return np.asarray(self.phi(x), dtype=float)


def _bisect_inverse(phi: PhiSpec, y: float, iters: int = 200) -> float:
    if y == 0.0:
        return 0.0
    sign = 1.0 if y > 0 else -1.0
    target = abs(y)
    if phi.singular:
        lo, hi = 0.0, phi.a
    else:
        lo, hi = 0.0, 1.0
        for _ in range(64):
            if float(phi(hi)) >= target:
                break
            lo, hi = hi, 2.0 * hi
        else:
            raise SearchError(f"could not bracket Phi^-1({y:g})")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        v = float(phi(mid))
        if not np.isfinite(v) or v >= target:
            hi = mid
        else:
            lo = mid
    return sign * 0.5 * (lo + hi)


def phi_inverse(phi: PhiSpec, y):
    """``Phi^{-1}(y)``: closed forms for the built-ins, bisection for custom ``Phi``."""
    y = np.asarray(y, dtype=float)
    if phi.kind == "p-laplacian":
        out = np.abs(y) ** (1.0 / (phi.p - 1.0)) * np.sign(y)
    elif phi.kind == "minkowski":
        out = y / np.sqrt(1.0 + y * y)
    elif phi.phi_inv is not None:
        out = np.asarray(phi.phi_inv(y), dtype=float)
    else:
        out = np.vectorize(lambda v: _bisect_inverse(phi, float(v)), otypes=[float])(y)
    return float(out) if out.ndim == 0 else out


@dataclass
class PhiProblem:
    phis: tuple[PhiSpec, PhiSpec]
    f: tuple[Callable, Callable]
    n: int = 513
    nondecreasing: bool = False
    sources: tuple[str, str] = ("", "")

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("need at least 3 grid nodes")
        self.t = uniform_grid(self.n)

    @property
    def cone(self) -> ConeSpec:
        return ConeSpec.grid(self.n, "concave-nonincreasing")

    def gamma(self) -> FunctionalSpec:
        return FunctionalSpec("l1-norm", self.cone, name="gamma")

    def with_grid(self, n: int) -> "PhiProblem":
        return PhiProblem(self.phis, self.f, n, self.nondecreasing, self.sources)


def apply_T_philap(prob: PhiProblem, x1: np.ndarray, x2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Trapezoid cumulative integral, ``Phi^{-1}`` nodewise, then the right-tail integral."""
    x1, x2 = np.asarray(x1, float), np.asarray(x2, float)
    if x1.shape != (prob.n,) or x2.shape != (prob.n,):
        raise ValueError(f"components must live on the {prob.n}-node grid")
    out = []
    for j in (0, 1):
        F = np.asarray(prob.f[j](x1, x2), dtype=float) * np.ones(prob.n)
        C = cumulative_trapezoid(F, prob.t, initial=0.0)
        bound = prob.phis[j].range_bound
        if np.max(np.abs(C)) >= bound:
            raise ValueError(f"component {j + 1}: inner integral {np.max(np.abs(C)):g} exceeds the range of Phi")
        g = phi_inverse(prob.phis[j], C)
        G = cumulative_trapezoid(g, prob.t, initial=0.0)
        out.append(G[-1] - G)
    return out[0], out[1]


def cone_defects(y: np.ndarray) -> dict:
    """Worst violations of the cone properties (all <= 0 when satisfied)."""
    y = np.asarray(y, dtype=float)
    return {
        "nonnegative": float(-y.min()),
        "nonincreasing": float(np.diff(y).max()),
        "concave": float(np.diff(y, 2).max()) if len(y) > 2 else 0.0,
        "terminal_zero": float(abs(y[-1])),
    }


def in_cone(y: np.ndarray, tol: float = 1e-12) -> bool:
    scale = max(1.0, float(np.max(np.abs(y))))
    return all(v <= tol * scale for v in cone_defects(y).values())


# ---------------------------------------------------------------------------
# certificate

def _box_f(fj: Callable) -> Callable:
    return lambda s, x, y: fj(x, y)


def certify_philap(prob: PhiProblem, r: Sequence[float], R: Sequence[float], grid: int = 64) -> Certificate:
    """Both inequalities of the existence theorem for each component.

    ``m_j`` is the minimum of ``f_j`` over ``r_j/2 <= x_j <= 2 r_j``,
    ``r_k/2 <= x_k <= R_k``; ``M_j`` the maximum over ``[0,R1] x [0,R2]``.
    For singular ``Phi_j`` with ``R_j = a_j`` the upper check holds
    automatically and is recorded as such.
    """
    r, R = [float(v) for v in r], [float(v) for v in R]
    for j in (0, 1):
        if not 2.0 * r[j] < R[j]:
            raise PreconditionError(f"component {j + 1}: need 2r < R, got 2r={2 * r[j]:g}, R={R[j]:g}")
    checks = []
    full = ((0.0, R[0]), (0.0, R[1]))
    for j in (0, 1):
        k = 1 - j
        tag, phi, f = f"component {j + 1}", prob.phis[j], _box_f(prob.f[j])
        nn = box_extremum(f, full, "min", 0.0, grid=grid)
        checks.append(make_check(f"{tag}: f >= 0 on [0,R1] x [0,R2]", nn.value, ">=", 0.0,
                                 {"argopt": list(nn.argopt[1:])}))
        box = [None, None]
        box[j] = (0.5 * r[j], 2.0 * r[j])
        box[k] = (0.5 * r[k], R[k])
        m = box_extremum(f, box, "min", 0.0, grid=grid)
        lhs = phi_inverse(phi, 0.5 * m.value)
        checks.append(make_check(f"{tag}: Phi^-1(m/2) > 8r/3", lhs, ">", 8.0 * r[j] / 3.0,
                                 {"m": m.value, "argopt": list(m.argopt[1:]),
                                  "refinement_margin": m.refinement_margin}))
        M = box_extremum(f, full, "max", 0.0, grid=grid)
        upper = phi_inverse(phi, M.value)
        witness = {"M": M.value, "argopt": list(M.argopt[1:])}
        if phi.singular and R[j] == phi.a:
            # Phi^-1 maps onto (-a, a); rounding may still return a itself
            witness["auto_pass"] = True
            checks.append(Check(f"{tag}: Phi^-1(M) < R (singular Phi, R = a)", upper, R[j], "<",
                                R[j] - upper, True, True, witness))
        else:
            checks.append(make_check(f"{tag}: Phi^-1(M) < R", upper, "<", R[j], witness))
    inputs = {"r": r, "R": R, "phi": [p.kind for p in prob.phis], "nonlinearities": list(prob.sources)}
    return Certificate("phi-laplacian", inputs, checks)


# ---------------------------------------------------------------------------
# asymptotic hypotheses

@dataclass
class AsymptoticEvidence:
    name: str
    component: int
    verdict: bool
    max_value: float
    slope: float
    detail: dict = field(default_factory=dict)
    label: str = "numerical evidence"

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _loglog_slope(x: np.ndarray, v: np.ndarray) -> float:
    return float(np.polyfit(np.log(x), np.log(v), 1)[0])


def check_asymptotics(prob: PhiProblem, taus: Sequence[float] = (2.0, 16.0 / 3.0, 10.0),
                      kmax: int = 40, tail: int = 15) -> tuple[list[AsymptoticEvidence], list[AsymptoticEvidence]]:
    """Evidence for ``limsup Phi(tau x)/Phi(x) < inf`` and ``f(x,x)/Phi(x) -> inf`` as ``x -> 0+``.

    Both ratios are sampled at ``x = 2^-k``. The first is judged bounded
    when its log-log slope over the smallest ``tail`` points is near zero;
    the second divergent when it grows monotonically there with a clearly
    negative slope.
    """
    xs = 2.0 ** -np.arange(1, kmax + 1)
    phi_ev, f_ev = [], []
    for j in (0, 1):
        phi = prob.phis[j]
        per_tau = {}
        ok = True
        worst_max, worst_slope = 0.0, 0.0
        for tau in taus:
            xv = xs[tau * xs < phi.a]
            ratio = np.asarray(phi(tau * xv)) / np.asarray(phi(xv))
            tx, tr = xv[-tail:], ratio[-tail:]
            slope = _loglog_slope(tx, tr)
            bounded = bool(np.all(np.isfinite(ratio)) and abs(slope) < 0.05)
            per_tau[f"{tau:g}"] = {"limit_estimate": float(ratio[-1]), "max": float(ratio.max()),
                                   "slope": slope, "bounded": bounded}
            ok = ok and bounded
            worst_max = max(worst_max, float(ratio.max()))
            worst_slope = slope if abs(slope) > abs(worst_slope) else worst_slope
        phi_ev.append(AsymptoticEvidence("Phi(tau x)/Phi(x) bounded", j + 1, ok, worst_max, worst_slope, per_tau))

        xv = xs[xs < phi.a]
        q = np.asarray(prob.f[j](xv, xv), dtype=float) / np.asarray(phi(xv))
        tx, tq = xv[-tail:], q[-tail:]
        positive = bool(np.all(tq > 0) and np.all(np.isfinite(tq)))
        slope = _loglog_slope(tx, tq) if positive else 0.0
        growing = positive and bool(np.all(np.diff(tq) > 0)) and slope < -0.05
        f_ev.append(AsymptoticEvidence("f(x,x)/Phi(x) diverges", j + 1, growing,
                                       float(np.max(q)) if positive else float("nan"), slope,
                                       {"value_at_smallest_x": float(q[-1]), "smallest_x": float(xv[-1])}))
    return phi_ev, f_ev


def search_small_r(prob: PhiProblem, start: Optional[float] = None, ratio: float = 0.5,
                   r_min: float = 2.0 ** -40, grid: int = 64) -> tuple[float, Certificate]:
    """Largest ``r`` on the geometric grid ``start * ratio^k`` whose certificate passes.

    Uses ``r_1 = r_2 = r`` and ``R_j = a_j``. Requires both ``Phi_j``
    singular, ``f_j`` declared nondecreasing and positive asymptotic evidence.
    """
    if not prob.nondecreasing:
        raise SearchError("the nonlinearities must be declared nondecreasing in both arguments")
    if not all(p.singular for p in prob.phis):
        raise SearchError("both Phi must be singular (finite a) for the small-r search")
    phi_ev, f_ev = check_asymptotics(prob)
    evidence = {"phi": [e.to_dict() for e in phi_ev], "f": [e.to_dict() for e in f_ev]}
    bad = [e for e in phi_ev + f_ev if not e.verdict]
    if bad:
        names = ", ".join(f"{e.name} (component {e.component})" for e in bad)
        raise SearchError(f"asymptotic hypotheses not supported numerically: {names}", evidence)
    R = [p.a for p in prob.phis]
    r = R[0] / 4.0 if start is None else float(start)
    last = None
    while r >= r_min:
        if all(2.0 * r < Rj for Rj in R):
            cert = certify_philap(prob, (r, r), R, grid)
            if cert.passed:
                return r, cert
            last = cert
        r *= ratio
    margins = [] if last is None else [(c.name, c.margin) for c in last.failed()]
    raise SearchError(f"no passing r down to {r_min:g}; last failing margins: {margins}", evidence)


# ---------------------------------------------------------------------------
# solver

def default_init_philap(prob: PhiProblem, r: Optional[Sequence[float]] = None) -> tuple[np.ndarray, np.ndarray]:
    """``4 r_j (1 - t)``: gamma equals ``2 r_j``, inside the shell when ``4 r_j < R_j``."""
    if r is None:
        r = [0.125 * min(1.0, p.a) for p in prob.phis]
    return tuple(4.0 * r[j] * (1.0 - prob.t) for j in (0, 1))


def solve_philap(prob: PhiProblem, init: Optional[tuple] = None, tol: float = 1e-10, max_iter: int = 5000,
                 r: Optional[Sequence[float]] = None, R: Optional[Sequence[float]] = None,
                 acceleration: str = "picard") -> SolverResult:
    """Fixed point of the integral operator; flags semi-trivial limits.

    With ``r`` and ``R`` the conclusion ``gamma(x_j) > r_j``,
    ``||x_j|| < R_j`` is checked and stored in ``localization``.
    """
    n = prob.n
    if init is None:
        init = default_init_philap(prob, r)
    x0 = [np.asarray(v, dtype=float) * np.ones(n) for v in init]
    for j, v in enumerate(x0):
        if not in_cone(v, 1e-9):
            raise ValueError(f"initial component {j + 1} is not concave, nonincreasing and nonnegative")

    def G(z):
        return np.concatenate(apply_T_philap(prob, z[:n], z[n:]))

    z, res, its, hist, fb = anderson_fixed_point(
        G, np.concatenate(x0), tol, max_iter, accelerate=acceleration == "anderson",
        admissible=lambda z: bool(np.min(z) >= 0.0))
    x1, x2 = z[:n].copy(), z[n:].copy()
    sup = [float(np.max(np.abs(x1))), float(np.max(np.abs(x2)))]
    trivial = [j + 1 for j in (0, 1) if sup[j] < 1e-8 * max(1.0, sup[1 - j])]
    result = SolverResult(prob.t, x1, x2, res, its, True, acceleration, hist, fb)
    result.flags = {"semi_trivial": bool(trivial), "trivial_components": trivial,
                    "in_cone": [in_cone(x1, 1e-9), in_cone(x2, 1e-9)]}
    if r is not None:
        gam = prob.gamma()
        sup_fn = FunctionalSpec("sup-norm", prob.cone)
        loc = []
        for j, x in enumerate((x1, x2)):
            g = float(evaluate_batch(gam, x)[0])
            loc.append({"component": j + 1, "functional": "gamma", "kind": "lower", "value": g,
                        "bound": float(r[j]), "margin": g - r[j], "pass": bool(g > r[j])})
            if R is not None:
                loc.append({"component": j + 1, "functional": "sup-norm", "kind": "upper", "value": sup[j],
                            "bound": float(R[j]), "margin": R[j] - sup[j], "pass": bool(sup[j] < R[j])})
        result.localization = loc
    return result


def richardson_ratio(prob: PhiProblem, ns: Sequence[int] = (129, 257, 513), **solve_kw) -> dict:
    """Ratio of successive fixed-point differences on nested grids (about 4 for second order)."""
    sols = []
    for n in ns:
        res = solve_philap(prob.with_grid(n), **solve_kw)
        sols.append(np.concatenate([res.x1, res.x2]).reshape(2, n))
    step = [(ns[k + 1] - 1) // (ns[0] - 1) for k in range(len(ns) - 1)]
    coarse = [sols[0]] + [s[:, ::st] for s, st in zip(sols[1:], step)]
    diffs = [float(np.max(np.abs(coarse[k + 1] - coarse[k]))) for k in range(len(coarse) - 1)]
    ratios = [diffs[k] / diffs[k + 1] for k in range(len(diffs) - 1)]
    return {"grids": list(ns), "differences": diffs, "ratios": ratios}
