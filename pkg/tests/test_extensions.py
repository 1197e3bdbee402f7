import numpy as np
import pytest

from deadcore import energy as en
from deadcore.extensions import (
    RefusalError,
    bump_solutions,
    nehari_energy_identity,
    nehari_ground_state,
    smallness_gate,
    solve_r_eq_p,
    subsuper_solve,
)
from deadcore.grid import BumpWeight, GridSpec, build_grid, make_weight
from deadcore.solve import SolveOptions

TIGHT = SolveOptions(tol_pg=1e-11)
SMALL, HUGE = 0.1, 1e4


def _model(ref_weight, ref_grid, scale, mu=1024.0, **kw):
    _, ap, am = ref_weight
    return en.Problem(ref_grid, scale * ap, am, p=kw.pop("p", 2.0), q=1.5, mu=mu, **kw)


def test_gate_passes_small_and_fails_huge(ref_weight, ref_grid):
    ok = smallness_gate(_model(ref_weight, ref_grid, SMALL, r=4.0, variant="q-plus-r"))
    assert ok.passed and ok.n_directions == 200
    bad = smallness_gate(_model(ref_weight, ref_grid, HUGE, r=4.0, variant="q-plus-r"))
    assert not bad.passed and bad.n_failed > 0
    with pytest.raises(en.ModelError):
        smallness_gate(_model(ref_weight, ref_grid, SMALL))


def _positive_on_components(u, comps):
    return all(np.all(u[w] > 0) for w in comps.omega)


def test_nehari_ground_state(ref_weight, ref_grid, ref_comps):
    m = _model(ref_weight, ref_grid, SMALL, r=4.0, variant="q-plus-r")
    res = nehari_ground_state(m, TIGHT, comps=ref_comps)
    assert res.converged and res.valid and res.message == ""
    assert res.energy < 0
    assert _positive_on_components(res.u, ref_comps)
    # on the Nehari set the energy equals the reduced expression
    assert nehari_energy_identity(res.u, m) == pytest.approx(res.energy, rel=1e-6)


def test_nehari_refuses_when_gate_fails(ref_weight, ref_grid):
    m = _model(ref_weight, ref_grid, HUGE, r=4.0, variant="q-plus-r")
    with pytest.raises(RefusalError, match="smallness gate"):
        nehari_ground_state(m, TIGHT)


def test_nehari_requires_subcritical_r():
    g = build_grid(GridSpec(2, 1.0, 9))
    m = en.Problem(g, g.zeros(), g.zeros(), p=1.5, q=1.2, r=7.0, variant="q-plus-r")
    with pytest.raises(en.ModelError, match="critical"):
        nehari_ground_state(m)
    with pytest.raises(en.ModelError):
        nehari_ground_state(en.Problem(g, g.zeros(), g.zeros(), p=1.5, q=1.2))


def test_r_equal_p_solution(ref_weight, ref_grid, ref_comps):
    m = _model(ref_weight, ref_grid, SMALL, variant="p-linear")
    res = solve_r_eq_p(m, TIGHT, ref_comps)
    assert res.converged and res.valid and res.energy < 0
    assert _positive_on_components(res.u, ref_comps)


def test_r_equal_p_refusal(ref_weight, ref_grid):
    m = _model(ref_weight, ref_grid, HUGE, variant="p-linear")
    with pytest.raises(RefusalError, match="lambda_1"):
        solve_r_eq_p(m, TIGHT)


def test_subsuper_bracket(ref_weight, ref_grid, ref_comps):
    m = _model(ref_weight, ref_grid, SMALL, r=6.0, variant="q-plus-r")
    out = subsuper_solve(m, ref_comps, TIGHT)
    res = out.result
    assert 0 < out.c and 0 < out.M
    assert np.all(out.eta <= out.upper)
    assert np.all(res.u >= out.eta) and np.all(res.u <= out.upper)
    assert out.inactive_res <= m.tol_res
    assert res.valid
    assert _positive_on_components(res.u, ref_comps)


def test_small_multiple_of_ball_eigenfunction_is_subsolution(ref_weight, ref_grid, ref_comps):
    from deadcore.eigen import ball_eigenfunctions
    from deadcore.extensions import _is_subsolution

    m = _model(ref_weight, ref_grid, SMALL, r=6.0, variant="q-plus-r")
    phi = sum(res.phi for _, res in ball_eigenfunctions(m, ref_comps))
    # the weight is weak near the ball edge, so "small" means c below about 1e-9 here
    for c in (1e-10, 1e-12, 1e-14):
        assert _is_subsolution(c * phi, m, 0.0)


def test_bump_solutions_large_mu(ref_weight, ref_grid, ref_comps):
    m = _model(ref_weight, ref_grid, SMALL, r=4.0, variant="q-plus-r")
    res = nehari_ground_state(m, TIGHT, comps=ref_comps)
    sols = bump_solutions(ref_grid, res.u, m, ref_comps)
    assert [s.subset for s in sols] == [(0,), (1,), (0, 1)]
    assert all(s.valid for s in sols)


def test_bump_solutions_infeasible_split():
    g = build_grid(GridSpec(1, 1.0, 129))
    a, ap, am = make_weight(g, BumpWeight(offset=0.3))
    from deadcore.grid import detect_components

    comps = detect_components(g, a)
    m = en.Problem(g, ap, am, p=2.0, q=1.5, r=4.0, variant="q-plus-r")
    u = np.where(g.boundary, 0.0, 1.0)
    assert bump_solutions(g, u, m, comps) == []
