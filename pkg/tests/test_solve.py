import numpy as np
import pytest
from scipy.optimize import minimize

from deadcore import energy as en
from deadcore.analysis import central_belt, count_distinct
from deadcore.grid import BumpWeight, GridSpec, build_grid, closure, detect_components, make_weight
from deadcore.solve import (
    SolveOptions,
    bump_decompose,
    combine,
    distinct_tolerance,
    enumerate_candidates,
    ground_state,
    limit_profile,
    minimize_constrained,
    nonempty_subsets,
    sup_distance,
)

TIGHT = SolveOptions(tol_pg=1e-11)


def _oracle_minimum(model):
    """Multi-start L-BFGS-B on the free nodes, independent of the package solver.

    A first pass fixes the solution and energy scales; the second works in
    rescaled variables so the tiny energies do not swamp the tolerances.
    """
    grid = model.grid
    free = np.flatnonzero(grid.interior)

    def run(x0, s, e0):
        def fun(x):
            u = grid.zeros()
            u[free] = s * x
            return en.total_energy(u, model) / e0, en.gradient(u, model)[free] * s / e0

        return minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=[(0, None)] * free.size,
                        options={"ftol": 1e-15, "gtol": 1e-13, "maxiter": 20000})

    rng = np.random.default_rng(7)
    first = run(rng.random(free.size), 1e-5, 1e-10)
    s, e0 = float(np.max(first.x)) * 1e-5, abs(first.fun) * 1e-10
    best = None
    for _ in range(8):
        res = run(rng.random(free.size), s, e0)
        if best is None or res.fun < best.fun:
            best = res
    u = grid.zeros()
    u[free] = s * best.x
    return u, best.fun * e0


def test_brute_force_oracle_17_nodes():
    g = build_grid(GridSpec(1, 1.0, 17))
    _, ap, am = make_weight(g, BumpWeight(offset=0.3))
    model = en.Problem(g, ap, am, p=2, q=1.5, mu=1.0)
    res = ground_state(model, TIGHT)
    u_ref, e_ref = _oracle_minimum(model)
    assert res.converged and res.energy < 0
    assert res.energy <= e_ref + 1e-10 * abs(e_ref)
    assert sup_distance(res.u, u_ref) <= 1e-4 * np.max(u_ref)


def test_zero_positive_part_gives_zero(ref_grid):
    z = ref_grid.zeros()
    model = en.Problem(ref_grid, z, np.ones(ref_grid.shape), p=2, q=1.5, mu=1.0)
    res = minimize_constrained(model, None, TIGHT)
    assert not res.u.any() and res.energy == 0.0


def test_zero_positive_part_on_free_region(ref_model, ref_comps):
    m = ref_model(mu=4.0)
    mask = closure(ref_comps.omega[0]) | closure(ref_comps.omega[1])
    free_positive = (m.a_plus > 0) & ~mask
    m = m.with_weight(np.where(free_positive, 0.0, m.a_plus), m.a_minus)
    res = minimize_constrained(m, mask, TIGHT)
    assert not res.u.any() and res.energy == 0.0


def test_reference_ground_state_nontrivial(ref_model, ref_comps):
    res = ground_state(ref_model(mu=1.0), TIGHT, comps=ref_comps)
    assert res.converged and res.valid
    assert res.energy < 0 and res.message == ""
    assert en.solution_energy_gap(res.u, ref_model(mu=1.0)) <= 1e-6


def test_random_and_default_start_agree(ref_model):
    m = ref_model(mu=1.0)
    a = minimize_constrained(m, None, TIGHT)
    b = minimize_constrained(m, None, SolveOptions(tol_pg=1e-11, seed=5), init="random")
    assert sup_distance(a.u, b.u) <= 1e-6 * (1 + a.sup)
    assert sup_distance(a.u, b.u) <= 1e-4 * a.sup


def test_energy_history_monotone(ref_model):
    res = minimize_constrained(ref_model(p=3.0, mu=8.0), None, SolveOptions(tol_pg=1e-11, keep_history=True))
    h = np.array(res.history)
    assert h.size > 2 and np.all(np.diff(h) <= 0)


def test_iteration_limit_flagged(ref_model):
    res = minimize_constrained(ref_model(mu=1.0), None, SolveOptions(tol_pg=1e-14, max_iter=3))
    assert not res.converged and res.iterations <= 3


def test_small_mu_positive_everywhere(ref_model):
    res = ground_state(ref_model(mu=0.1), TIGHT)
    assert np.all(res.u[res.u.shape[0] // 64 : -res.u.shape[0] // 64] > 0)
    assert np.all(res.u[1:-1] > 0)


def test_large_mu_dead_core(ref_model, ref_weight):
    m = ref_model(mu=1024.0)
    res = ground_state(m, TIGHT)
    belt = central_belt(m.grid, ref_weight[0])
    assert belt.any() and not np.any(res.u[belt] > 0)


def test_subsets():
    assert list(nonempty_subsets(2)) == [(0,), (1,), (0, 1)]
    assert len(list(nonempty_subsets(4))) == 15


def _count(cands):
    valid = [c.result.u for c in cands if c.valid]
    return count_distinct(valid, distinct_tolerance([c.result.u for c in cands]))


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_large_mu_three_candidates(ref_model, ref_comps, p):
    cands = enumerate_candidates(ref_model(p=p, mu=1024.0), ref_comps, TIGHT)
    assert len(cands) == 3
    assert all(c.valid for c in cands)
    assert _count(cands) == 3


def test_small_mu_only_full_subset_valid(ref_model, ref_comps):
    cands = enumerate_candidates(ref_model(mu=0.5), ref_comps, TIGHT)
    assert [c.valid for c in cands] == [False, False, True]
    assert all(not c.result.valid for c in cands[:2])


def test_bump_decompose_single_support(ref_grid, ref_comps):
    u = np.where(ref_comps.omega[0], 1.0, 0.0)
    dec = bump_decompose(ref_grid, u, ref_comps)
    assert dec.feasible
    np.testing.assert_array_equal(dec.bumps[0], u)
    assert not dec.bumps[1].any()


def test_large_mu_bumps_and_signed_combination(ref_model, ref_comps):
    m = ref_model(mu=1024.0)
    res = ground_state(m, TIGHT)
    dec = bump_decompose(m.grid, res.u, ref_comps)
    assert dec.feasible
    for b in dec.bumps:
        assert en.is_valid(b, m)
    mixed = combine(dec.bumps, [1, -1])
    assert mixed.max() > 0 > mixed.min()
    assert en.is_valid(mixed, m)
    neg = combine(dec.bumps[:1], [-1])
    assert en.total_energy(neg, m) == pytest.approx(en.total_energy(dec.bumps[0], m), rel=1e-14)
    np.testing.assert_array_equal(combine(dec.bumps), dec.bumps[0] + dec.bumps[1])


def test_small_mu_decomposition_infeasible(ref_model, ref_comps):
    m = ref_model(mu=0.5)
    res = ground_state(m, TIGHT)
    dec = bump_decompose(m.grid, res.u, ref_comps)
    assert not dec.feasible
    # the raw restriction to one neighbourhood is not a solution
    assert not en.is_valid(np.where(dec.neighbourhoods[0], res.u, 0.0), m)


def test_combine_errors():
    b = np.array([0.0, 1.0, 0.0])
    with pytest.raises(ValueError):
        combine([b, b])
    with pytest.raises(ValueError):
        combine([b], [2])
    with pytest.raises(ValueError):
        combine([b], [1, 1])


def test_limit_profile_support(ref_model, ref_comps):
    m = ref_model()
    res, alt = limit_profile(m, ref_comps, TIGHT)
    union = closure(ref_comps.omega[0]) | closure(ref_comps.omega[1])
    assert res.converged and not np.any(res.u[~union] > 0)
    # vanishing off the omega_i themselves is a stronger constraint
    assert alt.converged and alt.energy >= res.energy


def test_limit_profile_vanishes_on_zero_plateau():
    g = build_grid(GridSpec(1, 1.0, 129))
    a = -np.ones(129)
    a[20:41] = 1.0
    a[80:101] = 0.0
    comps = detect_components(g, a)
    assert len(comps.zero_components) == 1
    m = en.Problem(g, np.maximum(a, 0), np.maximum(-a, 0), p=2, q=1.5)
    res, _ = limit_profile(m, comps, TIGHT)
    assert res.u[20:41].max() > 0
    assert not res.u[75:106].any()


def test_limit_profile_without_negative_part(ref_grid):
    a = np.ones(ref_grid.shape)
    m = en.Problem(ref_grid, a, ref_grid.zeros(), p=2, q=1.5, mu=5.0)
    res, alt = limit_profile(m, None, TIGHT)
    g0 = ground_state(m.with_mu(0.0), TIGHT)
    assert alt is None
    assert sup_distance(res.u, g0.u) <= 1e-8 * g0.sup


def test_distinct_tolerance_relative():
    assert distinct_tolerance([np.array([0.0, 2e-6])]) == pytest.approx(2e-10)
    assert distinct_tolerance([]) == 0.0
