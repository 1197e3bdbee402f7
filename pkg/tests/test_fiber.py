import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deadcore.fiber import FiberCoeffs, fiber_roots, fiber_value, has_positive_maximum, stationarity

P, Q = 2.0, 1.5


def _scan_roots(c, p, q, r, lo=-8.0, hi=8.0, n=200_001):
    """Sign changes of the stationarity function on a dense log grid, linearly refined."""
    t = np.logspace(lo, hi, n)
    g = t ** (p - q) * c.A - c.B - t ** (r - q) * c.C
    idx = np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)
    return [t[k] - g[k] * (t[k + 1] - t[k]) / (g[k + 1] - g[k]) for k in idx]


def test_closed_form_case_ii():
    roots = fiber_roots(FiberCoeffs(1.0, 1.0, 0.0), P, Q, 4.0)
    assert roots.case == "ii"
    assert abs(roots.t_plus - 1.0) <= 1e-12
    rng = np.random.default_rng(3)
    for _ in range(50):
        A, B = rng.uniform(0.1, 10, 2)
        t = fiber_roots(FiberCoeffs(A, B, 0.0), P, Q, 4.0).t_plus
        assert abs(t - (B / A) ** (1 / (P - Q))) <= 1e-12 * t


def test_documented_two_root_example():
    c = FiberCoeffs(1.0, 0.5, 0.1)
    roots = fiber_roots(c, P, Q, 4.0)
    scan = _scan_roots(c, P, Q, 4.0)
    assert roots.case == "i" and len(scan) == 2
    assert roots.t_plus < roots.t_minus
    assert roots.t_plus == pytest.approx(scan[0], rel=1e-6)
    assert roots.t_minus == pytest.approx(scan[1], rel=1e-6)


def _two_root_triples(count, seed):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        p = rng.choice([1.5, 2.0, 3.0])
        q = 1 + rng.uniform(0.1, 0.9) * (p - 1)
        r = p + rng.uniform(0.2, 3.0)
        c = FiberCoeffs(*np.exp(rng.uniform(-3, 3, 3)))
        if len(_scan_roots(c, p, q, r, n=4001)) == 2:
            out.append((c, p, q, r))
    return out


def test_random_two_root_triples_match_scan():
    for c, p, q, r in _two_root_triples(100, 11):
        roots = fiber_roots(c, p, q, r)
        scan = _scan_roots(c, p, q, r)
        assert roots.case == "i"
        assert roots.t_plus == pytest.approx(scan[0], rel=1e-6)
        assert roots.t_minus == pytest.approx(scan[1], rel=1e-6)
        assert fiber_value(roots.t_plus, c, p, q, r) < 0


def test_sign_pattern_when_fiber_turns_positive():
    n = 0
    for c, p, q, r in _two_root_triples(300, 12):
        if not has_positive_maximum(c, p, q, r):
            continue
        roots = fiber_roots(c, p, q, r)
        assert roots.t_minus == pytest.approx(_scan_roots(c, p, q, r)[1], rel=1e-6)
        assert fiber_value(roots.t_plus, c, p, q, r) < 0 < fiber_value(roots.t_minus, c, p, q, r)
        n += 1
    assert n >= 50


def test_case_i_without_roots():
    # C so large that the stationarity function never becomes positive
    roots = fiber_roots(FiberCoeffs(1.0, 1.0, 100.0), P, Q, 4.0)
    assert roots.case == "i" and roots.t_plus is None and roots.t_minus is None


def test_case_iii_positive_critical_values():
    for B, C in [(-1.0, 0.5), (0.0, 0.5), (-2.0, 3.0)]:
        c = FiberCoeffs(1.0, B, C)
        roots = fiber_roots(c, P, Q, 4.0)
        assert roots.case == "iii" and roots.t_plus is None
        assert roots.t_minus is not None
        assert fiber_value(roots.t_minus, c, P, Q, 4.0) > 0
        assert abs(stationarity(roots.t_minus, c, P, Q, 4.0)) <= 1e-10
    assert fiber_roots(FiberCoeffs(1.0, -1.0, -1.0), P, Q, 4.0).t_minus is None


def test_case_ii_negative_C():
    c = FiberCoeffs(1.0, 1.0, -0.5)
    roots = fiber_roots(c, P, Q, 4.0)
    assert roots.case == "ii"
    assert abs(stationarity(roots.t_plus, c, P, Q, 4.0)) <= 1e-12
    assert roots.t_plus == pytest.approx(_scan_roots(c, P, Q, 4.0)[0], rel=1e-6)


def test_r_equal_p_merges_top_terms():
    roots = fiber_roots(FiberCoeffs(2.0, 1.0, 1.0), P, Q, P)
    assert roots.t_plus == pytest.approx(1.0)
    assert fiber_roots(FiberCoeffs(1.0, 1.0, 2.0), P, Q, P).t_plus is None


def test_invalid_inputs():
    with pytest.raises(ValueError):
        FiberCoeffs(0.0, 1.0)
    with pytest.raises(ValueError):
        fiber_roots(FiberCoeffs(1.0, 1.0, 1.0), P, Q, 1.8)


@settings(max_examples=60, deadline=None)
@given(
    st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.001, 0.05), st.floats(0.1, 10.0),
)
def test_roots_rescale_with_direction(A, B, C, t0):
    c = FiberCoeffs(A, B, C)
    base = fiber_roots(c, P, Q, 4.0)
    scaled = fiber_roots(c.scaled(t0, P, Q, 4.0), P, Q, 4.0)
    assert base.case == scaled.case
    for x, y in ((base.t_plus, scaled.t_plus), (base.t_minus, scaled.t_minus)):
        assert (x is None) == (y is None)
        if x is not None:
            assert y == pytest.approx(x / t0, rel=1e-9)
