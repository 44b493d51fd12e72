"""Two-component Hammerstein systems ``x_j(t) = int_0^1 G_j(t, s) f_j(s, x_1(s), x_2(s)) ds``.

Kernel constants, sampled kernel hypotheses, box bounds on the
nonlinearities, certificates for four localization theorems, a Nystrom
discretisation and a Picard/Anderson fixed-point solver.

All bounds here are numerical (grid scan plus local refinement), not
interval-verified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .geometry import ConeSpec, FunctionalSpec, evaluate_batch
from .quadrature import golden_section, simpson_weights, split_weight_matrix, uniform_grid

STRICT_RTOL = 1e-9
NONSTRICT_TOL = 1e-10
CERT_NOTE = "numerical, not interval-verified"

THEOREMS = ("min-on-J", "norm-annulus", "mixed-expansive", "half-sum")


class PreconditionError(ValueError):
    """Radius ordering or parameter constraints of a theorem are violated."""


class ConvergenceError(RuntimeError):
    """A quadrature constant or an iteration did not converge."""


# ---------------------------------------------------------------------------
# kernels

@dataclass(frozen=True)
class KernelSpec:
    """A Green's function with its majorant ``Phi`` and lower constant ``c`` on ``J``."""

    kind: str = "dirichlet"
    J: tuple[float, float] = (0.25, 0.75)
    c: float = 0.25
    fn: Optional[Callable] = field(default=None, compare=False)
    majorant: Optional[Callable] = field(default=None, compare=False)
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("dirichlet", "mixed", "custom"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "custom" and self.fn is None:
            raise ValueError("custom kernels need a callable G(t, s)")
        if not 0.0 < self.c < 1.0:
            raise ValueError("kernel constant c must lie in (0, 1)")
        a, b = self.J
        if not 0.0 <= a < b <= 1.0:
            raise ValueError(f"J={self.J} is not a nondegenerate subinterval of [0, 1]")

    @property
    def label(self) -> str:
        return self.name or self.kind

    def Phi(self, s):
        s = np.asarray(s, dtype=float)
        if self.majorant is not None:
            return np.asarray(self.majorant(s), dtype=float)
        if self.kind == "dirichlet":
            return s * (1.0 - s)
        if self.kind == "mixed":
            return s.copy()
        raise ValueError("custom kernel without a declared majorant")


def _raw_kernel(k: KernelSpec, t, s):
    if k.kind == "dirichlet":
        return np.where(s <= t, s * (1.0 - t), t * (1.0 - s))
    if k.kind == "mixed":
        return np.minimum(s, t)
    return np.asarray(k.fn(t, s), dtype=float)


def kernel_eval(k: KernelSpec, t, s):
    """``G(t, s)``; vectorised, arguments must lie in [0, 1]."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    for name, v in (("t", t), ("s", s)):
        if np.any((v < 0.0) | (v > 1.0)):
            raise ValueError(f"{name} outside [0, 1]")
    out = _raw_kernel(k, t, s)
    return float(out) if out.ndim == 0 else out


@dataclass
class KernelConstants:
    d: float
    D: float
    S: float
    S_c: float
    s_small: float
    s_small_c: float
    n: int
    rel_change: float = 0.0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _interval_integral(k: KernelSpec, t: np.ndarray, lo: float, hi: float, m: int) -> np.ndarray:
    """``int_lo^hi G(t, s) ds`` for every ``t``, split at the diagonal ``s = t``."""
    u = np.linspace(0.0, 1.0, m)
    w = simpson_weights(m)
    out = np.empty(len(t))
    for start in range(0, len(t), 256):
        tb = t[start:start + 256]
        a = np.clip(tb, lo, hi)
        acc = np.zeros(len(tb))
        for p, q in ((np.full_like(a, lo), a), (a, np.full_like(a, hi))):
            S = p[:, None] + (q - p)[:, None] * u[None, :]
            acc += (q - p) * (_raw_kernel(k, tb[:, None], S) @ w)
        out[start:start + 256] = acc
    return out


def _extremum(fun: Callable[[np.ndarray], np.ndarray], grid: np.ndarray, vals: np.ndarray,
              lo: float, hi: float, maximize: bool) -> float:
    """Grid extremum of ``fun`` on [lo, hi] polished by golden section on the neighbouring cells."""
    mask = (grid >= lo - 1e-15) & (grid <= hi + 1e-15)
    g, v = grid[mask], vals[mask]
    k = int(np.argmax(v) if maximize else np.argmin(v))
    best = float(v[k])
    a, b = g[max(k - 1, 0)], g[min(k + 1, len(g) - 1)]
    _, w = golden_section(lambda x: float(fun(np.array([x]))[0]), a, b, maximize=maximize)
    return max(best, w) if maximize else min(best, w)


def _constants_at(k: KernelSpec, n: int) -> KernelConstants:
    a, b = k.J
    t = np.union1d(np.linspace(0.0, 1.0, n), [a, b])
    pa = lambda x: _interval_integral(k, x, 0.0, a, n)
    pj = lambda x: _interval_integral(k, x, a, b, n)
    pb = lambda x: _interval_integral(k, x, b, 1.0, n)
    Ia, IJ, Ib = pa(t), pj(t), pb(t)
    full = lambda x: pa(x) + pj(x) + pb(x)
    off = lambda x: pa(x) + pb(x)
    return KernelConstants(
        d=1.0 / _extremum(full, t, Ia + IJ + Ib, 0.0, 1.0, True),
        D=1.0 / _extremum(pj, t, IJ, a, b, False),
        S=_extremum(pj, t, IJ, 0.0, 1.0, True),
        S_c=_extremum(off, t, Ia + Ib, 0.0, 1.0, True),
        s_small=_extremum(pj, t, IJ, a, b, True),
        s_small_c=_extremum(off, t, Ia + Ib, a, b, True),
        n=n,
    )


def kernel_constants(k: KernelSpec, n: int = 2049, check: bool = True, rtol: float = 1e-6) -> KernelConstants:
    """The six integral constants of a kernel on ``J`` with a refinement check.

    ``d`` and ``D`` are reciprocals of the extremal integrals. With ``check``
    the computation is repeated on ``2n - 1`` nodes and fails when any
    constant moves by more than ``rtol`` relatively.
    """
    if n < 65 or n % 2 == 0:
        raise ValueError(f"node count must be odd and >= 65, got {n}")
    kc = _constants_at(k, n)
    if check:
        fine = _constants_at(k, 2 * n - 1)
        keys = ("d", "D", "S", "S_c", "s_small", "s_small_c")
        change = max(abs(getattr(kc, f) - getattr(fine, f)) / abs(getattr(fine, f)) for f in keys)
        if change > rtol:
            raise ConvergenceError(f"kernel constants changed by {change:.2e} under refinement")
        kc.rel_change = float(change)
    return kc


# ---------------------------------------------------------------------------
# checks and certificates

@dataclass
class Check:
    name: str
    lhs: float
    rhs: float
    relation: str
    margin: float
    passed: bool
    strict: bool
    witness: Optional[dict] = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def make_check(name: str, lhs: float, relation: str, rhs: float, witness: Optional[dict] = None,
               tol: float = NONSTRICT_TOL) -> Check:
    """``lhs relation rhs`` with relation in ``< <= > >=``.

    Strict relations need a margin above ``STRICT_RTOL * scale``; non-strict
    ones tolerate a deficit of ``tol * scale``.
    """
    lhs, rhs = float(lhs), float(rhs)
    margin = rhs - lhs if relation in ("<", "<=") else lhs - rhs
    scale = max(1.0, abs(lhs), abs(rhs))
    strict = relation in ("<", ">")
    passed = margin > STRICT_RTOL * scale if strict else margin >= -tol * scale
    return Check(name, lhs, rhs, relation, float(margin), bool(passed), strict, witness)


@dataclass
class Certificate:
    theorem: str
    inputs: dict
    checks: list[Check]
    note: str = CERT_NOTE

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def failed(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def find(self, fragment: str) -> list[Check]:
        return [c for c in self.checks if fragment in c.name]

    def to_dict(self) -> dict:
        return {"theorem": self.theorem, "verdict": self.verdict, "note": self.note,
                "inputs": self.inputs, "checks": [c.to_dict() for c in self.checks]}


def verify_H2(k: KernelSpec, n: int = 401) -> Certificate:
    """Sampled ``0 <= G <= Phi`` everywhere, ``c Phi <= G`` for ``t`` in ``J`` and ``int_J Phi > 0``."""
    t = uniform_grid(n)
    T, S = np.meshgrid(t, t, indexing="ij")
    G = _raw_kernel(k, T, S)
    Ph = k.Phi(t)[None, :]
    checks = []
    i, j = np.unravel_index(np.argmin(G), G.shape)
    checks.append(make_check("G >= 0", G[i, j], ">=", 0.0, {"t": t[i], "s": t[j]}))
    gap = Ph - G
    i, j = np.unravel_index(np.argmin(gap), gap.shape)
    checks.append(make_check("G(t,s) <= Phi(s)", G[i, j], "<=", Ph[0, j], {"t": t[i], "s": t[j]}))
    a, b = k.J
    rows = (t >= a - 1e-12) & (t <= b + 1e-12)
    low = G[rows] - k.c * Ph
    i, j = np.unravel_index(np.argmin(low), low.shape)
    checks.append(make_check("c Phi(s) <= G(t,s), t in J", k.c * Ph[0, j], "<=", G[rows][i, j],
                             {"t": t[rows][i], "s": t[j]}))
    sJ = np.linspace(a, b, 513)
    checks.append(make_check("int_J Phi > 0", float(simpson_weights(513, a, b) @ k.Phi(sJ)), ">", 0.0))
    return Certificate("H2", {"kernel": k.label, "c": k.c, "J": list(k.J)}, checks)


# ---------------------------------------------------------------------------
# nonlinearities and box bounds

@dataclass(frozen=True)
class NonlinearitySpec:
    """``f_j(s, x1, x2)``; ``fn`` is vectorised over numpy arrays."""

    component: int
    fn: Callable = field(compare=False)
    source: str = ""

    def __call__(self, s, x1, x2):
        return self.fn(s, x1, x2)


@dataclass
class BoundEstimate:
    value: float
    mode: str
    box: tuple[tuple[float, float], tuple[float, float]]
    s_set: str
    argopt: tuple[float, float, float]
    grid: int
    refinement_margin: float

    def to_dict(self) -> dict:
        return {"value": self.value, "mode": self.mode, "box": [list(b) for b in self.box],
                "s_set": self.s_set, "argopt": list(self.argopt), "grid": self.grid,
                "refinement_margin": self.refinement_margin}


def _s_pieces(s_set, J: tuple[float, float]) -> list[tuple[float, float]]:
    a, b = J
    if s_set == "J":
        return [(a, b)]
    if s_set == "Jc":
        return [p for p in ((0.0, a), (b, 1.0)) if p[1] > p[0]] or [(a, a)]
    if s_set == "I":
        return [(0.0, 1.0)]
    s = float(s_set)
    if not 0.0 <= s <= 1.0:
        raise ValueError("s must lie in [0, 1]")
    return [(s, s)]


def _scan(f, pieces, box, grid: int, maximize: bool):
    sgrid = np.unique(np.concatenate([np.linspace(p, q, max(2, grid // len(pieces))) if q > p else [p]
                                      for p, q in pieces]))
    x1 = np.linspace(box[0][0], box[0][1], grid) if box[0][1] > box[0][0] else np.array([box[0][0]])
    x2 = np.linspace(box[1][0], box[1][1], grid) if box[1][1] > box[1][0] else np.array([box[1][0]])
    S, X, Y = np.meshgrid(sgrid, x1, x2, indexing="ij")
    V = np.asarray(f(S, X, Y), dtype=float)
    V = np.where(np.isfinite(V), V, -np.inf if maximize else np.inf)
    k = np.unravel_index(np.argmax(V) if maximize else np.argmin(V), V.shape)
    return float(V[k]), [float(sgrid[k[0]]), float(x1[k[1]]), float(x2[k[2]])], [sgrid, x1, x2]


def _polish(f, point, pieces, box, axes, maximize: bool, sweeps: int = 20):
    sign = 1.0 if maximize else -1.0
    p = list(point)
    val = float(f(*p))
    piece = next((q for q in pieces if q[0] - 1e-15 <= p[0] <= q[1] + 1e-15), pieces[0])
    bounds = [piece, box[0], box[1]]
    for _ in range(sweeps):
        old = val
        for c in range(3):
            lo, hi = bounds[c]
            if hi <= lo:
                continue
            h = (hi - lo) / max(len(axes[c]) - 1, 1)
            a, b = max(lo, p[c] - h), min(hi, p[c] + h)

            def g(z, c=c):
                q = list(p)
                q[c] = z
                return float(f(*q))

            z, v = golden_section(g, a, b, maximize=maximize)
            if sign * v > sign * val:
                p[c], val = z, v
        if sign * (val - old) <= 1e-14 * max(1.0, abs(val)):
            break
    return val, p


def box_extremum(f: Callable, box: Sequence[Sequence[float]], mode: str = "max", s_set="I",
                 J: tuple[float, float] = (0.25, 0.75), grid: int = 64,
                 margin_grid: Optional[int] = None) -> BoundEstimate:
    """Extremum of ``f(s, x1, x2)`` over ``s`` in ``s_set`` and ``(x1, x2)`` in the box.

    Dense grid scan, then coordinate-wise golden-section polishing from the
    best node. The refinement margin compares with a scan on a grid twice as
    fine (also polished).
    """
    if mode not in ("max", "min"):
        raise ValueError("mode must be 'max' or 'min'")
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    for lo, hi in box:
        if hi < lo:
            raise ValueError(f"empty box interval [{lo}, {hi}]")
    maximize = mode == "max"
    pieces = _s_pieces(s_set, J)

    def run(g):
        v, p, axes = _scan(f, pieces, box, g, maximize)
        return _polish(f, p, pieces, box, axes, maximize)

    val, arg = run(grid)
    val2, arg2 = run(margin_grid or 2 * grid)
    if (val2 > val) if maximize else (val2 < val):
        val, arg, margin = val2, arg2, abs(val2 - val)
    else:
        margin = abs(val2 - val)
    label = s_set if isinstance(s_set, str) else f"s={float(s_set):g}"
    return BoundEstimate(float(val), mode, box, label, tuple(arg), grid, float(margin))


# ---------------------------------------------------------------------------
# theorem certificates

def _order_check(theorem: str, j: int, r, R, c) -> None:
    if theorem in ("min-on-J", "mixed-expansive"):
        if not r[j] < c[j] * R[j]:
            raise PreconditionError(f"component {j + 1}: need r < c R, got r={r[j]:g}, c R={c[j] * R[j]:g}")
    elif theorem == "norm-annulus":
        if not r[j] < R[j]:
            raise PreconditionError(f"component {j + 1}: need r < R, got r={r[j]:g}, R={R[j]:g}")
    elif theorem == "half-sum":
        if not 2.0 * r[j] / (c[j] + 1.0) < R[j]:
            raise PreconditionError(
                f"component {j + 1}: need 2r/(c+1) < R, got 2r/(c+1)={2 * r[j] / (c[j] + 1):g}, R={R[j]:g}")
    else:
        raise ValueError(f"unknown theorem {theorem!r} (choose from {', '.join(THEOREMS)})")
    if r[j] <= 0 or R[j] <= 0:
        raise PreconditionError("radii must be positive")


def _boxes(theorem: str, j: int, r, R, c):
    """Boxes (in (x1, x2) order) for the upper bound on J and the lower bound on J."""
    i = 1 - j

    def pair(bj, bi):
        return (bj, bi) if j == 0 else (bi, bj)

    if theorem in ("min-on-J", "mixed-expansive"):
        lo_i = r[i] if theorem == "min-on-J" else c[i] * r[i]
        upper = pair((c[j] * R[j], R[j]), (lo_i, R[i]))
        lower = pair((r[j], r[j] / c[j]), (lo_i, R[i]))
    elif theorem == "norm-annulus":
        upper = pair((c[j] * R[j], R[j]), (c[i] * r[i], R[i]))
        lower = pair((c[j] * r[j], r[j]), (c[i] * r[i], R[i]))
    else:
        q = [2.0 * cc / (cc + 1.0) for cc in c]
        upper = pair((c[j] * R[j], R[j]), (q[i] * r[i], R[i]))
        lower = pair((q[j] * r[j], 2.0 * r[j] / (c[j] + 1.0)), (q[i] * r[i], R[i]))
    return upper, lower


def _bound_check(name: str, est: BoundEstimate, relation: str, rhs: float) -> Check:
    w = {"argopt": list(est.argopt), "box": [list(b) for b in est.box], "s_set": est.s_set,
         "refinement_margin": est.refinement_margin}
    return make_check(name, est.value, relation, rhs, w)


def certify(theorem: str, kernels: Sequence[KernelSpec], nonlinearities: Sequence[NonlinearitySpec],
            r: Sequence[float], R: Sequence[float], A: Sequence[float], B: Sequence[float],
            constants: Optional[Sequence[KernelConstants]] = None, grid: int = 64,
            n_constants: int = 2049) -> Certificate:
    """Evaluate every inequality of the chosen localization theorem.

    ``theorem`` is one of ``min-on-J`` (min over J functional), ``norm-annulus``
    (norm shells), ``mixed-expansive`` (first component compressive, second
    expansive with the max over J functional) or ``half-sum``. Nonnegativity
    of ``f_j`` on ``[0,1] x [0,R1] x [0,R2]`` is recorded as a check.
    """
    if theorem not in THEOREMS:
        raise ValueError(f"unknown theorem {theorem!r} (choose from {', '.join(THEOREMS)})")
    r, R, A, B = (list(map(float, v)) for v in (r, R, A, B))
    c = [k.c for k in kernels]
    if kernels[0].J != kernels[1].J:
        raise ValueError("both kernels must share the interval J")
    J = kernels[0].J
    for j in (0, 1):
        _order_check(theorem, j, r, R, c)
    if constants is None:
        constants = [kernel_constants(k, n_constants) for k in kernels]
    checks: list[Check] = []
    for j in (0, 1):
        kc, f, tag = constants[j], nonlinearities[j], f"component {j + 1}"
        expansive = theorem == "mixed-expansive" and j == 1
        full_box = ((0.0, R[0]), (0.0, R[1]))
        nn = box_extremum(f, full_box, "min", "I", J, grid)
        checks.append(_bound_check(f"{tag}: f >= 0 on I x [0,R1] x [0,R2]", nn, ">=", 0.0))
        if not expansive:
            checks.append(make_check(f"{tag}: B <= d", B[j], "<=", kc.d))
            checks.append(make_check(f"{tag}: d <= A", kc.d, "<=", A[j]))
            checks.append(make_check(f"{tag}: B S + A S^c < 1", B[j] * kc.S + A[j] * kc.S_c, "<", 1.0,
                                     {"S": kc.S, "S_c": kc.S_c}))
            est = box_extremum(f, full_box, "max", "Jc", J, grid)
            checks.append(_bound_check(f"{tag}: max f on J^c x [0,R1] x [0,R2] <= A R", est, "<=", A[j] * R[j]))
            upper, lower = _boxes(theorem, j, r, R, c)
            est = box_extremum(f, upper, "max", "J", J, grid)
            checks.append(_bound_check(f"{tag}: max f on J x outer box <= B R", est, "<=", B[j] * R[j]))
            est = box_extremum(f, lower, "min", "J", J, grid)
            checks.append(_bound_check(f"{tag}: min f on J x inner box > D r", est, ">", kc.D * r[j]))
        else:
            checks.append(make_check(f"{tag}: A <= d", A[j], "<=", kc.d))
            checks.append(make_check(f"{tag}: d <= B", kc.d, "<=", B[j]))
            checks.append(make_check(f"{tag}: A s + B s^c < 1", A[j] * kc.s_small + B[j] * kc.s_small_c, "<", 1.0,
                                     {"s": kc.s_small, "s_c": kc.s_small_c}))
            # the other component ranges over [0, R1] here: the conservative reading
            est = box_extremum(f, ((0.0, R[0]), (0.0, r[1])), "max", "J", J, grid)
            checks.append(_bound_check(f"{tag}: max f on J x [0,R1] x [0,r2] <= A r", est, "<=", A[j] * r[j]))
            est = box_extremum(f, ((r[0], R[0]), (c[1] * r[1], R[1])), "max", "Jc", J, grid)
            checks.append(_bound_check(f"{tag}: max f on J^c x [r1,R1] x [c r2,R2] <= B r", est, "<=", B[j] * r[j]))
            est = box_extremum(f, ((r[0], R[0]), (c[1] * R[1], R[1])), "min", "J", J, grid)
            checks.append(_bound_check(f"{tag}: min f on J x [r1,R1] x [c R2,R2] > D R", est, ">", kc.D * R[j]))
    inputs = {"r": r, "R": R, "A": A, "B": B, "c": c, "J": list(J),
              "constants": [kc.to_dict() for kc in constants],
              "nonlinearities": [f.source for f in nonlinearities]}
    return Certificate(theorem, inputs, checks)


# ---------------------------------------------------------------------------
# discretised operator and solver

@dataclass(frozen=True)
class GridFunction:
    nodes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if len(self.nodes) != len(self.values):
            raise ValueError("nodes and values differ in length")
        if np.any(np.asarray(self.values) < -1e-9 * max(1.0, float(np.max(np.abs(self.values))))):
            raise ValueError("grid function must be nonnegative")

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


# cubic Lagrange weights at the midpoint of the first cell from nodes 1..4;
# the edge node is skipped so an endpoint singularity of f does not leak in
_MID_WEIGHTS = np.array([35.0, -35.0, 21.0, -5.0]) / 16.0


def nystrom_matrix(k: KernelSpec, t: np.ndarray) -> np.ndarray:
    """``K[i, m]`` with ``(K @ f)[i] ~ int_0^1 G(t_i, s) f(s) ds``, split at ``s = t_i``.

    Rows whose split leaves a single panel use Simpson on that panel with
    the midpoint value of ``f`` extrapolated from the next four nodes (``f`` is smooth
    across the kink, only ``G`` is not). This keeps every row fourth order.
    """
    n = len(t)
    h = t[1] - t[0]
    T, S = np.meshgrid(t, t, indexing="ij")
    K = split_weight_matrix(n) * _raw_kernel(k, T, S)
    for row, (edge, inner), nodes, mid in (
        (1, (0, 1), np.arange(1, 5), 0.5 * h),
        (n - 2, (n - 1, n - 2), np.arange(n - 2, n - 6, -1), 1.0 - 0.5 * h),
    ):
        g_edge = float(_raw_kernel(k, t[row], t[edge]))
        g_in = float(_raw_kernel(k, t[row], t[inner]))
        g_mid = float(_raw_kernel(k, t[row], mid))
        K[row, edge] += (h / 6.0 - h / 2.0) * g_edge
        K[row, inner] += (h / 6.0 - h / 2.0) * g_in
        K[row, nodes] += (4.0 * h / 6.0) * g_mid * _MID_WEIGHTS
    return K


@dataclass
class HammersteinSystem:
    kernels: tuple[KernelSpec, KernelSpec]
    nonlinearities: tuple[NonlinearitySpec, NonlinearitySpec]
    n: int = 257

    def __post_init__(self):
        if self.n < 7:
            raise ValueError("need at least 7 grid nodes")
        self.t = uniform_grid(self.n)
        self._K = [nystrom_matrix(k, self.t) for k in self.kernels]

    def cone(self, j: int) -> ConeSpec:
        k = self.kernels[j]
        return ConeSpec.grid(self.n, "lower-bound", k.c, k.J)

    def rates(self, x1: np.ndarray, x2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return tuple(np.asarray(f(self.t, x1, x2), dtype=float) * np.ones(self.n) for f in self.nonlinearities)

    def apply(self, x1: np.ndarray, x2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x1, x2 = np.asarray(x1, float), np.asarray(x2, float)
        if x1.shape != (self.n,) or x2.shape != (self.n,):
            raise ValueError(f"components must live on the {self.n}-node grid")
        f1, f2 = self.rates(x1, x2)
        return self._K[0] @ f1, self._K[1] @ f2


def apply_T(system: HammersteinSystem, x: tuple[GridFunction, GridFunction]) -> tuple[GridFunction, GridFunction]:
    if len(x[0].nodes) != len(x[1].nodes) or not np.allclose(x[0].nodes, x[1].nodes):
        raise ValueError("grid mismatch between components")
    if len(x[0].nodes) != system.n:
        raise ValueError("grid does not match the system's discretisation")
    y1, y2 = system.apply(x[0].values, x[1].values)
    return GridFunction(system.t, y1), GridFunction(system.t, y2)


def cone_defect(system: HammersteinSystem, j: int, y: np.ndarray) -> float:
    """Largest violation of ``y >= c max(y)`` on J and ``y >= 0`` (<= 0 means inside)."""
    return float(system.cone(j).violation(y))


@dataclass
class SolverResult:
    t: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    residual: float
    iterations: int
    converged: bool
    method: str
    history: list[float] = field(default_factory=list)
    fallbacks: int = 0
    localization: list[dict] = field(default_factory=list)
    flags: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {"residual": self.residual, "iterations": self.iterations, "converged": self.converged,
                "method": self.method, "fallbacks": self.fallbacks, "flags": self.flags,
                "sup_x1": float(np.max(np.abs(self.x1))), "sup_x2": float(np.max(np.abs(self.x2))),
                "localization": self.localization}


def anderson_fixed_point(G: Callable[[np.ndarray], np.ndarray], x0: np.ndarray, tol: float = 1e-10,
                         max_iter: int = 500, m: int = 5, accelerate: bool = True,
                         admissible: Callable[[np.ndarray], bool] = lambda x: True):
    """Fixed point of ``G`` by Picard steps, optionally Anderson-mixed over a window ``m``.

    An accelerated iterate that is not ``admissible`` is replaced by the
    plain Picard step and the history is cleared.
    Returns ``(x, residual, iterations, history, fallbacks)``.
    """
    x = np.asarray(x0, dtype=float).copy()
    dX, dF = [], []
    gx = G(x)
    f = gx - x
    history, fallbacks = [], 0
    for it in range(1, max_iter + 1):
        res = float(np.max(np.abs(f)))
        history.append(res)
        if res < tol:
            return x, res, it - 1, history, fallbacks
        x_new = gx
        if accelerate and dF:
            Fm = np.column_stack(dF)
            gamma, *_ = np.linalg.lstsq(Fm, f, rcond=None)
            cand = gx - (np.column_stack(dX) + Fm) @ gamma
            if np.all(np.isfinite(cand)) and admissible(cand):
                x_new = cand
            else:
                fallbacks += 1
                dX.clear()
                dF.clear()
        gx_new = G(x_new)
        f_new = gx_new - x_new
        if accelerate:
            dX.append(x_new - x)
            dF.append(f_new - f)
            if len(dX) > m:
                dX.pop(0)
                dF.pop(0)
        x, gx, f = x_new, gx_new, f_new
    res = float(np.max(np.abs(f)))
    history.append(res)
    if res < tol:
        return x, res, max_iter, history, fallbacks
    raise ConvergenceError(f"no convergence in {max_iter} iterations (residual {res:.3e})")


def default_init(system: HammersteinSystem, r: Sequence[float], R: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Constant midpoints ``(r_j / c_j + R_j) / 2`` of the localization boxes."""
    return tuple(np.full(system.n, 0.5 * (r[j] / system.kernels[j].c + R[j])) for j in (0, 1))


def solve_system(system: HammersteinSystem, init: Optional[tuple] = None, tol: float = 1e-9,
                 max_iter: int = 500, acceleration: str = "anderson", m: int = 5,
                 active: tuple[int, ...] = (0, 1)) -> SolverResult:
    """Iterate ``x <- T x`` until the sup-norm residual drops below ``tol``.

    Components outside ``active`` are frozen at their initial values, which
    gives the scalar problems obtained by setting one component to zero.
    """
    if acceleration not in ("picard", "anderson"):
        raise ValueError("acceleration must be 'picard' or 'anderson'")
    n = system.n
    if init is None:
        init = (np.full(n, 5.0), np.full(n, 5.0))
    x0 = [np.asarray(v, dtype=float) * np.ones(n) for v in init]
    if any(np.any(v < 0) for v in x0):
        raise ValueError("initial guess must be nonnegative")
    frozen = list(x0)

    def unpack(z):
        out = list(frozen)
        for k, j in enumerate(active):
            out[j] = z[k * n:(k + 1) * n]
        return out

    def G(z):
        y = system.apply(*unpack(z))
        return np.concatenate([y[j] for j in active])

    def admissible(z):
        return bool(np.min(z) >= -1e-12 * max(1.0, float(np.max(np.abs(z)))))

    z0 = np.concatenate([x0[j] for j in active])
    z, res, its, hist, fb = anderson_fixed_point(G, z0, tol, max_iter, m, acceleration == "anderson", admissible)
    x1, x2 = unpack(z)
    for j in active:
        if not admissible([x1, x2][j]):
            raise ConvergenceError(f"component {j + 1} left the cone")
    return SolverResult(system.t, np.array(x1), np.array(x2), res, its, True, acceleration, hist, fb)


@dataclass(frozen=True)
class LocalizationSpec:
    component: int
    functional: FunctionalSpec
    bound: float
    kind: str  # "lower": functional > bound; "upper": functional < bound


def verify_localization(result: SolverResult, specs: Sequence[LocalizationSpec]) -> list[dict]:
    """Strict ``functional(x_j) > r`` / ``< R`` checks on a computed solution."""
    out = []
    comps = (result.x1, result.x2)
    for sp in specs:
        v = float(evaluate_batch(sp.functional, comps[sp.component])[0])
        if sp.kind == "lower":
            margin = v - sp.bound
        elif sp.kind == "upper":
            margin = sp.bound - v
        else:
            raise ValueError("kind must be 'lower' or 'upper'")
        out.append({"component": sp.component + 1, "functional": sp.functional.label, "kind": sp.kind,
                    "value": v, "bound": sp.bound, "margin": margin,
                    "pass": bool(margin > STRICT_RTOL * max(1.0, abs(sp.bound)))})
    result.localization = out
    return out


def localization_specs(system: HammersteinSystem, theorem: str, r, R) -> list[LocalizationSpec]:
    """The functional bounds each theorem's conclusion asserts."""
    specs = []
    for j in (0, 1):
        cone = system.cone(j)
        if theorem == "half-sum":
            low = FunctionalSpec("half-sum", cone, name="half-sum")
        elif theorem == "min-on-J":
            low = FunctionalSpec("min-on-J", cone, name="min-on-J")
        elif theorem == "mixed-expansive":
            low = FunctionalSpec("min-on-J" if j == 0 else "max-on-J", cone)
        else:
            low = FunctionalSpec("sup-norm", cone, name="sup-norm")
        specs.append(LocalizationSpec(j, low, float(r[j]), "lower"))
        specs.append(LocalizationSpec(j, FunctionalSpec("sup-norm", cone, name="sup-norm"), float(R[j]), "upper"))
    return specs


def refined_residual(system: HammersteinSystem, result: SolverResult) -> float:
    """Residual of the cubic-spline interpolated solution on a grid with ``2n - 1`` nodes."""
    fine = HammersteinSystem(system.kernels, system.nonlinearities, 2 * system.n - 1)
    x1 = CubicSpline(result.t, result.x1)(fine.t)
    x2 = CubicSpline(result.t, result.x2)(fine.t)
    y1, y2 = fine.apply(x1, x2)
    return float(max(np.max(np.abs(y1 - x1)), np.max(np.abs(y2 - x2))))
