import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coexist.geometry import (
    BracketError,
    ConeSpec,
    DomainError,
    FunctionalSpec,
    SamplePlan,
    StarSet,
    beta_ray,
    evaluate_batch,
    extend_theta,
    functional_eval,
    make_star_set,
    retract_rho,
    sample_cone,
    verify_functional_axioms,
)

# root of b * 0.5 * (2 - exp(-0.5 b)) = 1, from a 2e6-point scan refined by brentq
BETA_NONHOMOGENEOUS = 1.3431061885005378

GRID = ConeSpec.grid(101)
LOWER = ConeSpec.grid(101, "lower-bound", c=0.25, J=(0.25, 0.75))
P = ConeSpec.quadrant()


def soft_norm(x):
    n = float(np.linalg.norm(x))
    return n * (2.0 - np.exp(-n))


SOFT = FunctionalSpec("custom", P, fn=soft_norm, homogeneous=False, name="soft-norm")


def all_families(cone):
    fams = [FunctionalSpec("sup-norm", cone), FunctionalSpec("l1-norm", cone),
            FunctionalSpec("min-on-J", cone, J=(0.25, 0.75)), FunctionalSpec("max-on-J", cone, J=(0.25, 0.75)),
            FunctionalSpec("half-sum", cone, J=(0.25, 0.75)),
            FunctionalSpec("weighted-min-sup", cone, alpha=0.5, beta=2.0, J=(0.25, 0.75))]
    return fams


# --- functional evaluation -------------------------------------------------

def test_min_on_J_constant():
    assert functional_eval(FunctionalSpec("min-on-J", GRID, J=(0.25, 0.75)), np.full(101, 5.0)) == 5.0


def test_half_sum_linear():
    x = 1.0 - GRID.nodes
    assert functional_eval(FunctionalSpec("half-sum", GRID, J=(0.25, 0.75)), x) == pytest.approx(0.625, abs=1e-15)


@pytest.mark.parametrize("phi", all_families(GRID), ids=lambda p: p.family)
def test_zero_maps_to_zero(phi):
    assert functional_eval(phi, np.zeros(101)) == 0.0


def test_plane_families_at_zero():
    for fam in ("linear-sum", "euclidean", "sup-norm"):
        assert functional_eval(FunctionalSpec(fam, P), np.zeros(2)) == 0.0


def test_domain_violation():
    x = np.ones(101)
    x[3] = -0.5
    with pytest.raises(DomainError):
        functional_eval(FunctionalSpec("sup-norm", GRID), x)


def test_lower_bound_membership():
    x = np.ones(101)
    x[50] = 0.2  # below c * sup on J
    assert not LOWER.contains(x)
    x[50] = 0.3
    assert LOWER.contains(x)


def test_J_missing_grid():
    with pytest.raises(ValueError):
        FunctionalSpec("min-on-J", ConeSpec.grid(11), J=(0.01, 0.02))


def test_wedge_and_pointedness():
    X = sample_cone(LOWER, SamplePlan(n=400, seed=3))
    rng = np.random.default_rng(0)
    i, j = rng.integers(0, 400, 200), rng.integers(0, 400, 200)
    lam = rng.uniform(0, 10, size=(200, 1))
    assert LOWER.contains(X[i] + X[j]).all()
    assert LOWER.contains(lam * X[i]).all()
    assert not LOWER.contains(-X[:50]).any()


# --- axioms -----------------------------------------------------------------

def test_sup_norm_axioms():
    rep = verify_functional_axioms(FunctionalSpec("sup-norm", GRID))
    assert rep.passed
    assert rep.c_lower == pytest.approx(1.0)
    assert abs(rep.c2_violation) < 1e-12  # equality


def test_min_on_J_axioms_on_lower_bound_cone():
    rep = verify_functional_axioms(FunctionalSpec("min-on-J", LOWER, J=(0.25, 0.75)))
    assert rep.passed
    assert rep.c_lower >= 0.25 - 1e-12


def test_soft_norm_axioms():
    rep = verify_functional_axioms(SOFT)
    assert rep.c2_pass and rep.c1_pass
    # phi(x)/||x|| = 2 - exp(-||x||) tends to 1 at the origin
    assert 1.0 <= rep.c_lower < 1.01


def test_min_on_J_fails_c1_on_plain_cone():
    X = sample_cone(GRID, SamplePlan(n=1000))
    # functions vanishing on J but not elsewhere
    X[:, 20:80] = 0.0
    rep = verify_functional_axioms(FunctionalSpec("min-on-J", GRID, J=(0.25, 0.75)), samples=X)
    assert not rep.c1_pass


def test_axioms_reject_outside_samples():
    X = sample_cone(GRID, SamplePlan(n=1000))
    X[0, 0] = -1.0
    with pytest.raises(DomainError):
        verify_functional_axioms(FunctionalSpec("sup-norm", GRID), samples=X)


def test_axioms_need_norm_spread():
    X = sample_cone(GRID, SamplePlan(n=1000, log10_scale=(0.0, 1.0)))
    with pytest.raises(ValueError):
        verify_functional_axioms(FunctionalSpec("sup-norm", GRID), samples=X)


# --- ray map ----------------------------------------------------------------

def test_beta_linear_sum():
    S = make_star_set(FunctionalSpec("linear-sum", P), 1.0)
    assert beta_ray(S, np.array([0.25, 0.25])) == 2.0


def test_beta_on_boundary():
    S = make_star_set(FunctionalSpec("linear-sum", P), 1.0)
    assert beta_ray(S, np.array([0.5, 0.5])) == 1.0


def test_beta_nonhomogeneous_against_oracle():
    S = make_star_set(SOFT, 1.0)
    b = beta_ray(S, np.array([0.3, 0.4]))
    assert b == pytest.approx(BETA_NONHOMOGENEOUS, rel=1e-11)
    assert soft_norm(b * np.array([0.3, 0.4])) == pytest.approx(1.0, rel=1e-10)


def test_beta_errors():
    S = make_star_set(FunctionalSpec("linear-sum", P), 1.0)
    with pytest.raises(DomainError):
        beta_ray(S, np.zeros(2))
    with pytest.raises(DomainError):
        beta_ray(S, np.array([2.0, 0.0]))
    capped = FunctionalSpec("custom", P, fn=lambda x: 1.0 - np.exp(-np.linalg.norm(x)), homogeneous=False)
    S2 = StarSet(capped, 2.0, 0.1, np.array([1.0, 0.0]))
    with pytest.raises(BracketError):
        beta_ray(S2, np.array([0.3, 0.3]))


# --- retraction and extension --------------------------------------------

def test_retract_plane_origin():
    S = make_star_set(FunctionalSpec("linear-sum", P), 1.0, inner_radius=0.1, anchor=np.array([1.0, 0.0]))
    np.testing.assert_allclose(retract_rho(S, np.zeros(2)), [1.0, 0.0], atol=1e-15)


def test_retract_identity_on_boundary():
    S = make_star_set(FunctionalSpec("linear-sum", P), 1.0)
    x = np.array([0.3, 0.7])
    np.testing.assert_allclose(retract_rho(S, x), x, atol=1e-15)


def test_retract_grid_min_on_J():
    phi = FunctionalSpec("min-on-J", LOWER, J=(0.25, 0.75))
    S = make_star_set(phi, 1.0)
    x = 0.4 * (1.0 + LOWER.nodes * (1 - LOWER.nodes))
    assert LOWER.norm(x) > S.inner_radius
    y = retract_rho(S, x)
    np.testing.assert_allclose(y, beta_ray(S, x) * x, rtol=1e-15)
    assert evaluate_batch(phi, y)[0] == pytest.approx(1.0, rel=1e-12)


def test_theta_branches():
    S = make_star_set(FunctionalSpec("linear-sum", P), 1.0, inner_radius=0.1, anchor=np.array([1.0, 1.0]) / np.sqrt(2))
    out = np.array([1.5, 0.5])
    np.testing.assert_array_equal(extend_theta(S, out), out)
    on = np.array([0.5, 0.5])
    np.testing.assert_array_equal(extend_theta(S, on), on)
    z = extend_theta(S, np.zeros(2))
    # inner map sends 0 to 0.1 h; beta then scales to the edge x + y = 1
    np.testing.assert_allclose(z, [0.5, 0.5], atol=1e-15)
    np.testing.assert_allclose(z, retract_rho(S, np.zeros(2)))


def test_inner_radius_too_large():
    with pytest.raises(DomainError):
        make_star_set(FunctionalSpec("linear-sum", P), 1.0, inner_radius=0.9)


# --- sampled properties -------------------------------------------------

STARS = {
    "linear-sum": make_star_set(FunctionalSpec("linear-sum", P), 1.0),
    "soft": make_star_set(SOFT, 1.0),
    "half-sum": make_star_set(FunctionalSpec("half-sum", LOWER, J=(0.25, 0.75)), 2.0),
    "min-on-J": make_star_set(FunctionalSpec("min-on-J", LOWER, J=(0.25, 0.75)), 1.0),
}


def _point(star, seed, scale):
    X = sample_cone(star.cone, SamplePlan(n=1, seed=seed, log10_scale=(0.0, 0.0)))[0]
    v = star.value(X)
    return X * (scale * star.level / v)


@settings(max_examples=60, deadline=None)
@given(name=st.sampled_from(sorted(STARS)), seed=st.integers(0, 10**6), scale=st.floats(1e-3, 1.0))
def test_beta_consistency_and_idempotence(name, seed, scale):
    S = STARS[name]
    x = _point(S, seed, scale)
    b = beta_ray(S, x)
    assert b >= 1.0
    assert abs(S.value(b * x) - S.level) <= 1e-10 * S.level
    y = retract_rho(S, x)
    np.testing.assert_allclose(retract_rho(S, y), y, rtol=1e-9, atol=1e-12)
    if S.functional.is_homogeneous:
        assert abs(b - S.level / S.value(x)) <= 1e-12 * b


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), delta=st.floats(1e-6, 1e-2))
def test_retraction_continuity(seed, delta):
    S = STARS["half-sum"]
    x = _point(S, seed, 0.6)
    rng = np.random.default_rng(seed)
    # a positive constant plus a small bump keeps the lower-bound constraint
    d = 1.0 + 0.1 * rng.uniform(size=x.shape)
    dists = []
    for k in range(6):
        xp = x + (delta / 2 ** k) * d
        dists.append(float(np.max(np.abs(retract_rho(S, xp) - retract_rho(S, x)))))
    assert all(b <= a + 1e-14 for a, b in zip(dists, dists[1:]))


def test_boundary_fixing_sampled():
    S = STARS["half-sum"]
    X = sample_cone(S.cone, SamplePlan(n=200, seed=7, log10_scale=(0.0, 0.0)))
    for x in X:
        x = x * (S.level / S.value(x))
        assert np.max(np.abs(retract_rho(S, x) - x)) <= 10 * 1e-9 * S.level


def test_min_on_J_nesting():
    # balls of radius r sit inside {phi < r}, which sits inside balls of radius r / c
    r, c = 1.0, LOWER.c
    X = sample_cone(LOWER, SamplePlan(n=1000, seed=11, log10_scale=(-1.0, 1.0)))
    phi = evaluate_batch(FunctionalSpec("min-on-J", LOWER, J=(0.25, 0.75)), X)
    norms = LOWER.norm(X)
    assert (norms < r).any() and (phi < r).any() and (phi >= r).any()
    assert np.all(phi[norms < r] < r)
    assert np.all(norms[phi < r] < r / c)
