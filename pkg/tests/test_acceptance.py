"""One test per acceptance criterion, at the stated tolerances.

The terminal summary (see conftest) prints a pass/fail line per criterion.
"""

import json
import time

import numpy as np
import pytest

from coexist import cli
from coexist.conditions import ConditionFlags, predicted_index
from coexist.geometry import (
    ConeSpec,
    FunctionalSpec,
    SamplePlan,
    beta_ray,
    evaluate_batch,
    make_star_set,
    retract_rho,
    sample_cone,
)
from coexist.hammerstein import (
    HammersteinSystem,
    certify,
    default_init,
    kernel_constants,
    localization_specs,
    solve_system,
    verify_localization,
)
from coexist.index2d import (
    BoundaryZeroError,
    PlanarRegion,
    cone_fixed_point_index,
    verify_star_bump_example,
)
from coexist.philap import (
    apply_T_philap,
    in_cone,
    richardson_ratio,
    search_small_r,
    solve_philap,
)
from coexist.spec import load_spec

criterion = pytest.mark.criterion


@pytest.fixture(scope="module")
def coexistence():
    spec = load_spec("hammerstein_coexistence")
    kernels, nls = spec.build()
    return spec, kernels, nls


@criterion(1, "kernel constants at 2049 nodes and the S2 oracle")
def test_criterion_1_kernel_constants(coexistence, kernel_oracle, tmp_path):
    spec, kernels, _ = coexistence
    t0 = time.perf_counter()
    kc = [kernel_constants(k, 2049) for k in kernels]
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    printed = {(0, "d"): 8, (0, "D"): 16, (1, "d"): 2, (1, "D"): 8, (0, "S"): 3 / 32, (0, "S_c"): 1 / 32}
    for (j, name), v in printed.items():
        assert getattr(kc[j], name) == pytest.approx(v, rel=1e-6)
    oracle = kernel_oracle("mixed")
    S2, S2c = float(oracle["S"]), float(oracle["S_c"])
    assert kc[1].S == pytest.approx(S2, rel=1e-8)
    assert kc[1].S_c == pytest.approx(S2c, rel=1e-8)
    # the printed 22/32 and 9/32 are reported as disagreements
    cli.main(["constants", "hammerstein_coexistence", "--out", str(tmp_path)])
    rep = json.loads((tmp_path / "constants.json").read_text())
    assert set(rep["results"]["constants"]["disagreements"]) == {"S2", "S2c"}
    assert spec.B[1] * S2 + spec.A[1] * S2c < 1.0


@criterion(2, "certificate for the coexistence example passes every check")
def test_criterion_2_certificate(coexistence):
    spec, kernels, nls = coexistence
    cert = certify(spec.theorem, kernels, nls, spec.r, spec.R, spec.A, spec.B)
    (sum_check,) = cert.find("component 1: B S + A S^c")
    assert sum_check.margin == pytest.approx(11 / 32, abs=1e-9)
    failed = [f"{c.name} (margin {c.margin:.4g})" for c in cert.failed()]
    assert not failed, "; ".join(failed)


@criterion(3, "coexistence solve, localization and the scalar problem")
def test_criterion_3_solve(coexistence):
    spec, kernels, nls = coexistence
    system = HammersteinSystem(kernels, nls, 257)
    t0 = time.perf_counter()
    res = solve_system(system, default_init(system, spec.r, spec.R), tol=1e-9)
    assert time.perf_counter() - t0 < 60.0
    assert res.converged and res.residual < 1e-8
    locs = verify_localization(res, localization_specs(system, "half-sum", spec.r, spec.R))
    assert all(l["pass"] for l in locs), locs
    assert min(np.max(res.x1), np.max(res.x2)) > 1e-3
    scalar = solve_system(system, (np.full(257, 3.0), np.zeros(257)), tol=1e-9, active=(0,))
    assert 1.0 <= np.max(scalar.x1) <= 6.0


def _rectangles(rng, k):
    for _ in range(k):
        x0 = 0.0 if rng.random() < 0.5 else rng.uniform(0.0, 1.0)
        yield x0, x0 + rng.uniform(0.3, 2.0), rng.uniform(0.0, 1.0), rng.uniform(0.3, 2.0)


@criterion(4, "index suite on 50 randomized instances per property")
def test_criterion_4_index_suite():
    rng = np.random.default_rng(4)
    # normalization
    done = 0
    while done < 50:
        x0, x1, y0, h = next(_rectangles(rng, 1))
        U = PlanarRegion.rectangle(x0, x1, y0, y0 + h)
        xb = rng.uniform(0.0, 3.0, 2)
        if U.boundary_distance(xb) <= 1e-3:
            continue
        inside = x0 < xb[0] < x1 and y0 < xb[1] < y0 + h
        assert cone_fixed_point_index(lambda z: xb, U).degree == int(inside)
        done += 1
    # additivity on chord splits and homotopy invariance along affine paths
    done = 0
    while done < 50:
        M, c = rng.uniform(0.0, 1.5, (2, 2)), rng.uniform(0.0, 1.0, 2)
        cut = rng.uniform(0.2, 0.8)
        N = lambda z: M @ z + c
        try:
            whole, left, right = (cone_fixed_point_index(N, U).degree for U in (
                PlanarRegion.rectangle(0.0, 2.0, 0.0, 2.0),
                PlanarRegion.rectangle(0.0, 2 * cut, 0.0, 2.0),
                PlanarRegion.rectangle(2 * cut, 2.0, 0.0, 2.0)))
        except BoundaryZeroError:
            continue
        assert whole == left + right
        done += 1
    done = 0
    U = PlanarRegion.quarter_disk(1.5, m=12)
    ts = np.linspace(0.0, 1.0, 41)
    while done < 50:
        M0, c0 = rng.uniform(0.0, 1.5, (2, 2)), rng.uniform(0.0, 1.0, 2)
        M1, c1 = rng.uniform(0.0, 1.5, (2, 2)), rng.uniform(0.0, 1.0, 2)
        lip = max(float(np.linalg.norm((M1 - M0) @ v + c1 - c0)) for v in U.vertices)
        degs, clean = set(), True
        for t in ts:
            H = lambda z, t=t: (1 - t) * (M0 @ z + c0) + t * (M1 @ z + c1)
            try:
                res = cone_fixed_point_index(H, U, collar_check=False)
            except BoundaryZeroError:
                clean = False
                break
            if res.min_boundary_norm <= 0.5 * lip * (ts[1] - ts[0]):
                clean = False
                break
            degs.add(res.degree)
        if not clean:
            continue
        assert len(degs) == 1
        done += 1
    # scaling surrogates on random star neighbourhoods of the origin
    for _ in range(50):
        radii = rng.uniform(0.5, 2.0, rng.integers(5, 13))
        th = np.linspace(0.0, np.pi / 2, len(radii))
        U = PlanarRegion(np.vstack([[0.0, 0.0], radii[:, None] * np.column_stack([np.cos(th), np.sin(th)])]))
        assert cone_fixed_point_index(lambda z: 0.5 * z, U).degree == 1
        assert cone_fixed_point_index(lambda z: 2.0 * z, U).degree == 0
    rep = verify_star_bump_example(0.1)
    assert rep.component_index == 1
    for flags, expected in ((("A", "A"), 1), (("A", "B"), -1), (("B", "B"), 1)):
        assert predicted_index(ConditionFlags(flags)) == expected == (-1) ** sum(f == "B" for f in flags)


@criterion(5, "radial bump example with eps = 1/10")
def test_criterion_5_bump_example():
    rep = verify_star_bump_example(0.1)
    assert rep.norm_pass
    assert all(m["inner"] > 0 and m["outer"] > 0 for m in rep.norm_margins.values())
    assert rep.annulus_fail_everywhere and len(rep.annulus_witnesses) == 20
    assert all(w["found"] and w["norm_ratio"] <= 1.0 for w in rep.annulus_witnesses)
    assert rep.fixed_point_error < 1e-8


@criterion(6, "geometry properties on 1000 sampled points each")
def test_criterion_6_geometry():
    lower = ConeSpec.grid(65, "lower-bound", c=0.25, J=(0.25, 0.75))
    P = ConeSpec.quadrant()
    soft = FunctionalSpec("custom", P, fn=lambda x: float(np.linalg.norm(x)) * (2.0 - np.exp(-np.linalg.norm(x))),
                          homogeneous=False)
    stars = [make_star_set(FunctionalSpec("half-sum", lower, J=(0.25, 0.75)), 2.0),
             make_star_set(FunctionalSpec("linear-sum", P), 1.0),
             make_star_set(soft, 1.0)]
    failures = 0
    for k, S in enumerate(stars):
        X = sample_cone(S.cone, SamplePlan(n=1000, seed=60 + k, log10_scale=(0.0, 0.0)))
        scale = np.random.default_rng(k).uniform(1e-3, 1.0, 1000)
        for x, sc in zip(X, scale):
            x = x * (sc * S.level / S.value(x))
            b = beta_ray(S, x)
            failures += abs(S.value(b * x) - S.level) > 1e-10 * S.level
            if S.functional.is_homogeneous:
                failures += abs(b - S.level / S.value(x)) > 1e-12 * b
            y = retract_rho(S, x)
            failures += not np.allclose(retract_rho(S, y), y, rtol=1e-9, atol=1e-12)
            xb = b * x  # on the boundary
            failures += np.max(np.abs(retract_rho(S, xb) - xb)) > 10 * 1e-9 * max(1.0, S.level)
    X = sample_cone(lower, SamplePlan(n=1000, seed=66, log10_scale=(-1.0, 1.0)))
    phi = evaluate_batch(FunctionalSpec("min-on-J", lower, J=(0.25, 0.75)), X)
    norms = lower.norm(X)
    failures += int(np.sum(phi[norms < 1.0] >= 1.0))
    failures += int(np.sum(norms[phi < 1.0] >= 1.0 / lower.c))
    assert failures == 0


@criterion(7, "phi-Laplacian operator, small-r search, solve and refinement")
def test_criterion_7_philap():
    prob = load_spec("minkowski_power").build()
    rng = np.random.default_rng(7)
    t = prob.t
    for _ in range(200):
        xs = []
        for _ in range(2):
            w, p = rng.uniform(0.0, 1.0, 3), rng.uniform(1.0, 4.0, 3)
            xs.append(10 ** rng.uniform(-3, 3) * sum(wk * (1.0 - t ** pk) for wk, pk in zip(w, p)))
        for y in apply_T_philap(prob, *xs):
            assert in_cone(y) and np.max(y) <= 1.0
    r, cert = search_small_r(prob)
    assert cert.passed
    res = solve_philap(prob, r=(r, r), R=(1.0, 1.0))
    assert not res.flags["semi_trivial"]
    gammas = [l for l in res.localization if l["functional"] == "gamma"]
    assert len(gammas) == 2 and all(l["value"] > r for l in gammas)
    ratios = richardson_ratio(prob)["ratios"]
    assert all(3.5 <= q <= 4.5 for q in ratios), ratios


@criterion(8, "surrogate index values are labeled in the run report")
def test_criterion_8_surrogate_label(tmp_path):
    assert cli.main(["index", "planar_star_annulus", "--out", str(tmp_path)]) == cli.EXIT_OK
    rep = json.loads((tmp_path / "index.json").read_text())
    assert "finite-dimensional" in rep["index_semantics"]
    assert "infinite-dimensional operators are not computed" in rep["index_semantics"]
    assert rep["results"]["index"]["label"] == cli.INDEX_SEMANTICS
    # every report carries the statement, not only the index command
    cli.main(["certify", "planar_star_annulus", "--out", str(tmp_path)])
    assert json.loads((tmp_path / "certify.json").read_text())["index_semantics"] == cli.INDEX_SEMANTICS
