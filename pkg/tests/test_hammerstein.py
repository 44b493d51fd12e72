import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from coexist.hammerstein import (
    ConvergenceError,
    GridFunction,
    HammersteinSystem,
    KernelSpec,
    NonlinearitySpec,
    PreconditionError,
    anderson_fixed_point,
    apply_T,
    box_extremum,
    certify,
    cone_defect,
    kernel_constants,
    kernel_eval,
    _boxes,
    localization_specs,
    make_check,
    nystrom_matrix,
    refined_residual,
    solve_system,
    verify_H2,
    verify_localization,
)
from coexist.spec import load_spec

DIRICHLET = KernelSpec("dirichlet")
MIXED = KernelSpec("mixed")

@pytest.fixture(scope="module", params=["dirichlet", "mixed"])
def constants_pair(request, kernel_oracle):
    k = KernelSpec(request.param)
    return kernel_oracle(request.param), kernel_constants(k, 1025)


def test_oracle_exact_values(kernel_oracle):
    o = kernel_oracle("mixed")
    assert (o["S"], o["S_c"], o["s_small_c"]) == (sp.Rational(1, 4), sp.Rational(1, 4), sp.Rational(7, 32))
    assert kernel_oracle("dirichlet")["d"] == 8


@pytest.mark.parametrize("name", ["d", "D", "S", "S_c", "s_small", "s_small_c"])
def test_kernel_constants_match_oracle(constants_pair, name):
    exact, kc = constants_pair
    assert getattr(kc, name) == pytest.approx(float(exact[name]), rel=1e-8)
    assert kc.rel_change < 1e-6


def test_kernel_constants_bad_grid():
    with pytest.raises(ValueError):
        kernel_constants(DIRICHLET, 64)


# --- kernels and H2 ---------------------------------------------------------

def test_kernel_eval_values_and_range():
    assert kernel_eval(DIRICHLET, 0.25, 0.5) == pytest.approx(0.125)
    assert kernel_eval(MIXED, 0.3, 0.7) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        kernel_eval(DIRICHLET, 1.2, 0.5)


def test_kernel_spec_validation():
    with pytest.raises(ValueError):
        KernelSpec("dirichlet", c=1.5)
    with pytest.raises(ValueError):
        KernelSpec("dirichlet", J=(0.8, 0.2))
    with pytest.raises(ValueError):
        KernelSpec("custom")


@pytest.mark.parametrize("k", [DIRICHLET, MIXED], ids=["dirichlet", "mixed"])
def test_H2_holds(k):
    cert = verify_H2(k)
    assert cert.passed, cert.failed()


def test_H2_fails_for_large_c():
    cert = verify_H2(KernelSpec("dirichlet", c=0.9))
    bad = cert.failed()
    assert [c.name for c in bad] == ["c Phi(s) <= G(t,s), t in J"]
    w = bad[0].witness
    assert 0.25 <= w["t"] <= 0.75


def test_make_check_strictness():
    assert not make_check("x", 1.0, "<", 1.0).passed
    assert make_check("x", 1.0, "<=", 1.0).passed
    assert make_check("x", 1.0 + 1e-12, "<=", 1.0).passed
    assert not make_check("x", 1.1, "<=", 1.0).passed


# --- box extremum -----------------------------------------------------------

def test_box_extremum_smooth_interior():
    f = lambda s, x, y: -(x - 0.3) ** 2 - (y - 0.7) ** 2 + s
    est = box_extremum(f, ((0, 1), (0, 1)), "max", "J")
    assert est.value == pytest.approx(0.75, abs=1e-10)
    np.testing.assert_allclose(est.argopt, [0.75, 0.3, 0.7], atol=1e-5)
    assert est.refinement_margin < 1e-8


def test_box_extremum_min_on_complement():
    f = lambda s, x, y: np.abs(s - 0.5) + x * y
    est = box_extremum(f, ((1, 2), (1, 3)), "min", "Jc")
    assert est.value == pytest.approx(1.25, abs=1e-12)


def test_box_extremum_fixed_s_and_errors():
    f = lambda s, x, y: s * x + y
    assert box_extremum(f, ((0, 2), (0, 1)), "max", 0.5).value == pytest.approx(2.0)
    with pytest.raises(ValueError):
        box_extremum(f, ((1, 0), (0, 1)))
    with pytest.raises(ValueError):
        box_extremum(f, ((0, 1), (0, 1)), "sup")


# --- certificates -----------------------------------------------------------

@pytest.fixture(scope="module")
def example():
    spec = load_spec("hammerstein_coexistence")
    kernels, nls = spec.build()
    return spec, kernels, nls


def test_certificate_component_one(example):
    spec, kernels, nls = example
    cert = certify("half-sum", kernels, nls, spec.r, spec.R, spec.A, spec.B, n_constants=513)
    comp1 = [c for c in cert.checks if c.name.startswith("component 1")]
    assert all(c.passed for c in comp1)
    sums = cert.find("component 1: B S + A S^c")
    assert sums[0].margin == pytest.approx(11 / 32, abs=1e-9)
    assert cert.note == "numerical, not interval-verified"


def test_certificate_component_two_failures(example):
    spec, kernels, nls = example
    cert = certify("half-sum", kernels, nls, spec.r, spec.R, spec.A, spec.B, n_constants=513)
    names = {c.name for c in cert.failed()}
    assert names == {"component 2: f >= 0 on I x [0,R1] x [0,R2]",
                     "component 2: max f on J x outer box <= B R"}
    for c in cert.failed():
        assert c.witness is not None and "argopt" in c.witness


def test_certificate_preconditions(example):
    _, kernels, nls = example
    with pytest.raises(PreconditionError):
        certify("half-sum", kernels, nls, (1.0, 1.0), (1.0, 20.0), (9, 2), (4, 0.6))
    with pytest.raises(PreconditionError):
        certify("min-on-J", kernels, nls, (1.0, 1.0), (3.0, 20.0), (9, 2), (4, 0.6))
    with pytest.raises(ValueError):
        certify("no-such", kernels, nls, (1, 1), (10, 20), (9, 2), (4, 0.6))


def test_sum_margin_monotone_in_A_and_B(example):
    spec, kernels, nls = example
    kc = kernel_constants(kernels[0], 513)
    margin = lambda A, B: 1.0 - (B * kc.S + A * kc.S_c)
    As, Bs = np.linspace(kc.d, 3 * kc.d, 9), np.linspace(0.2 * kc.d, kc.d, 9)
    M = np.array([[margin(A, B) for B in Bs] for A in As])
    assert np.all(np.diff(M, axis=0) <= 0) and np.all(np.diff(M, axis=1) <= 0)


@pytest.mark.parametrize("j", [0, 1])
def test_min_on_J_and_norm_boxes_agree(j):
    # with r = c r~ the min-on-J bound boxes are the norm-annulus ones at r~
    c, rt, R = (0.25, 0.25), (2.0, 1.0), (10.0, 20.0)
    r = [ci * ri for ci, ri in zip(c, rt)]
    assert _boxes("min-on-J", j, r, R, c) == _boxes("norm-annulus", j, rt, R, c)


# --- Nystrom discretisation ---------------------------------------------------

# int_0^1 G(t, s) e^s ds solves -u'' = e^t with the kernel's boundary conditions
EXACT_EXP = {
    "dirichlet": lambda t: -np.exp(t) + (math.e - 1.0) * t + 1.0,
    "mixed": lambda t: -np.exp(t) + math.e * t + 1.0,
}


@pytest.mark.parametrize("kind", ["dirichlet", "mixed"])
def test_nystrom_fourth_order(kind):
    errs = []
    for n in (33, 65, 129):
        t = np.linspace(0.0, 1.0, n)
        u = nystrom_matrix(KernelSpec(kind), t) @ np.exp(t)
        errs.append(float(np.max(np.abs(u - EXACT_EXP[kind](t)))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 3.7), orders
    assert errs[-1] < 1e-9


# --- solver -----------------------------------------------------------------

def manufactured_system(n):
    """Coupled linear problem whose fixed point is (sin(pi t), sin(pi t / 2))."""
    u1 = lambda t: np.sin(np.pi * t)
    u2 = lambda t: np.sin(0.5 * np.pi * t)
    f1 = NonlinearitySpec(0, lambda t, x, y: np.pi ** 2 * u1(t) + 0.5 * (y - u2(t)))
    f2 = NonlinearitySpec(1, lambda t, x, y: 0.25 * np.pi ** 2 * u2(t) + 0.5 * (x - u1(t)))
    return HammersteinSystem((DIRICHLET, MIXED), (f1, f2), n), u1, u2


@pytest.mark.parametrize("acc", ["picard", "anderson"])
def test_solver_manufactured_solution(acc):
    system, u1, u2 = manufactured_system(129)
    res = solve_system(system, (np.ones(129), np.ones(129)), tol=1e-12, acceleration=acc)
    assert res.converged and res.residual < 1e-12
    err = max(np.max(np.abs(res.x1 - u1(system.t))), np.max(np.abs(res.x2 - u2(system.t))))
    assert err < 1e-8


def test_anderson_beats_picard():
    system, *_ = manufactured_system(65)
    init = (np.ones(65), np.ones(65))
    a = solve_system(system, init, tol=1e-12, acceleration="anderson")
    p = solve_system(system, init, tol=1e-12, acceleration="picard")
    assert a.iterations < p.iterations
    np.testing.assert_allclose(a.x1, p.x1, atol=1e-11)


def test_refined_residual_smooth_problem():
    system, *_ = manufactured_system(257)
    tol = 1e-10
    res = solve_system(system, (np.ones(257), np.ones(257)), tol=tol)
    assert refined_residual(system, res) <= 10 * tol


def test_anderson_reports_nonconvergence():
    with pytest.raises(ConvergenceError):
        anderson_fixed_point(lambda x: 2.0 * x + 1.0, np.zeros(3), max_iter=20, accelerate=False)


def test_solver_rejects_bad_input():
    system, *_ = manufactured_system(17)
    with pytest.raises(ValueError):
        solve_system(system, (-np.ones(17), np.ones(17)))
    with pytest.raises(ValueError):
        solve_system(system, acceleration="newton")
    with pytest.raises(ValueError):
        HammersteinSystem((DIRICHLET, MIXED), system.nonlinearities, 5)


@pytest.fixture(scope="module")
def example_solution(example):
    spec, kernels, nls = example
    system = HammersteinSystem(kernels, nls, 129)
    res = solve_system(system, tol=1e-9)
    return spec, system, res


def test_example_localization(example_solution):
    spec, system, res = example_solution
    locs = verify_localization(res, localization_specs(system, "half-sum", spec.r, spec.R))
    assert len(locs) == 4 and all(l["pass"] for l in locs)
    for j, x in enumerate((res.x1, res.x2)):
        assert cone_defect(system, j, x) <= 1e-12


def test_scalar_problem_stays_semi_trivial(example_solution):
    spec, system, _ = example_solution
    res = solve_system(system, (np.full(system.n, 3.0), np.zeros(system.n)), active=(0,))
    assert np.all(res.x2 == 0.0)
    assert 1.0 < np.max(res.x1) < 6.0


def test_apply_T_grid_checks(example_solution):
    _, system, _ = example_solution
    g = GridFunction(system.t, np.ones(system.n))
    other = GridFunction(np.linspace(0, 1, 9), np.ones(9))
    with pytest.raises(ValueError):
        apply_T(system, (g, other))
    with pytest.raises(ValueError):
        GridFunction(system.t, -np.ones(system.n))


pos_grid = st.lists(st.floats(0.0, 10.0, allow_nan=False), min_size=33, max_size=33)


@settings(max_examples=200, deadline=None)
@given(v1=pos_grid, v2=pos_grid)
def test_operator_maps_into_cone(example, v1, v2):
    _, kernels, nls = example
    system = HammersteinSystem(kernels, nls, 33)
    t = system.t
    y = apply_T(system, (GridFunction(t, np.array(v1)), GridFunction(t, np.array(v2))))
    for j in (0, 1):
        assert cone_defect(system, j, y[j].values) <= 1e-9 * max(1.0, y[j].sup)
