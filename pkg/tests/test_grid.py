import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deadcore.grid import (
    BumpWeight,
    GridError,
    GridSpec,
    build_grid,
    closure,
    default_eps0,
    detect_components,
    dilate,
    directed_hausdorff,
    effective_weight,
    hausdorff,
    make_weight,
    min_gap,
    pairwise_disjoint,
    read_field,
    read_mask,
    split_sign,
    touches_boundary,
    write_field,
    write_mask,
)


def test_1d_grid_spacing_and_boundary():
    g = build_grid(GridSpec(1, 1.0, 5))
    assert g.h == 0.25
    assert np.flatnonzero(g.boundary).tolist() == [0, 4]
    assert g.cell_volume == 0.25


def test_2d_grid_counts():
    g = build_grid(GridSpec(2, 1.0, 8))
    assert g.shape == (8, 8)
    assert g.boundary.sum() == 28
    assert g.cell_volume == pytest.approx(g.h**2)


@pytest.mark.parametrize("n", [0, 1, 2])
def test_too_few_nodes(n):
    with pytest.raises(GridError, match="n too small"):
        build_grid(GridSpec(1, 1.0, n))


def test_bad_dimension_and_extent():
    with pytest.raises(GridError):
        build_grid(GridSpec(3, 1.0, 5))
    with pytest.raises(GridError):
        build_grid(GridSpec(1, 0.0, 5))


def test_split_sign():
    ap, am = split_sign(np.array([1.0, -2.0, 0.0]))
    assert ap.tolist() == [1.0, 0.0, 0.0]
    assert am.tolist() == [0.0, 2.0, 0.0]


def test_effective_weight():
    ap, am = np.array([1.0, 0.0]), np.array([0.0, 2.0])
    assert effective_weight(ap, am, 3.0).tolist() == [1.0, -6.0]
    assert effective_weight(ap, am, 0.0).tolist() == ap.tolist()
    assert effective_weight(ap, am, 1.0).tolist() == (ap - am).tolist()
    with pytest.raises(GridError):
        effective_weight(ap, np.zeros(3), 1.0)


def test_builtin_weight_matches_closed_form(ref_grid):
    a, ap, am = make_weight(ref_grid, BumpWeight(offset=0.3))
    x = ref_grid.x
    expected = np.exp(-((x - 0.25) ** 2) / 0.06**2) + np.exp(-((x - 0.75) ** 2) / 0.06**2) - 0.3
    np.testing.assert_allclose(a, expected, rtol=0, atol=1e-15)
    assert a[np.argmin(abs(x - 0.25))] > 0 and a[np.argmin(abs(x - 0.75))] > 0
    assert a[np.argmin(abs(x - 0.5))] < 0 and a[0] < 0 and a[-1] < 0
    np.testing.assert_array_equal(ap - am, a)


def test_all_negative_weight_has_no_positive_part(ref_grid):
    _, ap, _ = make_weight(ref_grid, BumpWeight(amplitudes=(0.1, 0.1), offset=0.3))
    assert not ap.any()


def test_bump_weight_length_mismatch(ref_grid):
    with pytest.raises(GridError):
        BumpWeight(centers=(0.5,), amplitudes=(1.0, 1.0), widths=(0.1,)).evaluate(ref_grid)


def test_field_csv_round_trip(tmp_path, rng):
    for spec in (GridSpec(1, 1.0, 9), GridSpec(2, 2.0, 6)):
        g = build_grid(spec)
        u = rng.standard_normal(g.shape)
        write_field(tmp_path / "u.csv", u, g)
        np.testing.assert_array_equal(read_field(tmp_path / "u.csv", g), u)
        m = u > 0
        write_mask(tmp_path / "m.csv", m, g)
        np.testing.assert_array_equal(read_mask(tmp_path / "m.csv", g), m)


def test_field_csv_grid_mismatch(tmp_path):
    g = build_grid(GridSpec(1, 1.0, 9))
    write_field(tmp_path / "u.csv", g.zeros(), g)
    with pytest.raises(GridError, match="does not match"):
        read_field(tmp_path / "u.csv", build_grid(GridSpec(1, 1.0, 11)))
    (tmp_path / "bad.csv").write_text("1\n2\n")
    with pytest.raises(GridError, match="header"):
        read_field(tmp_path / "bad.csv")


def _profile(n, positive):
    a = -np.ones(n)
    for lo, hi in positive:
        a[lo : hi + 1] = 1.0
    return a


def test_components_constructed_profile():
    g = build_grid(GridSpec(1, 1.0, 19))
    a = _profile(19, [(3, 6), (12, 15)])
    comps = detect_components(g, a)
    assert comps.n_components == 2
    assert comps.surrounded == [True, True]
    assert comps.holds_a2


def test_components_all_positive_not_surrounded():
    g = build_grid(GridSpec(1, 1.0, 19))
    comps = detect_components(g, np.ones(19))
    assert comps.n_components == 1
    assert comps.surrounded == [False]
    assert not comps.holds_a2


def test_zero_plateau_reported_separately():
    g = build_grid(GridSpec(1, 1.0, 25))
    a = _profile(25, [(3, 6)])
    a[14:19] = 0.0
    comps = detect_components(g, a)
    assert comps.n_components == 1
    assert len(comps.zero_components) == 1
    assert comps.zero_components[0][16]


def test_reference_components(ref_grid, ref_comps):
    assert ref_comps.n_components == 2
    assert ref_comps.surrounded == [True, True]
    gap = min_gap(ref_grid, ref_comps.omega)
    assert gap > 0.3


def test_2d_components():
    g = build_grid(GridSpec(2, 1.0, 41))
    a, _, _ = make_weight(g, BumpWeight(centers=((0.3, 0.3), (0.7, 0.7)), widths=(0.1, 0.1), offset=0.3))
    comps = detect_components(g, a)
    assert comps.n_components == 2
    assert all(comps.surrounded)


def test_dilate_point():
    g = build_grid(GridSpec(1, 1.0, 21))
    m = g.empty_mask()
    m[10] = True
    d = dilate(g, m, 0.1)
    np.testing.assert_allclose(g.x[d], [0.4, 0.45, 0.5, 0.55, 0.6])
    with pytest.raises(GridError):
        dilate(g, m, 0.01)


def test_dilation_overlap_flagged():
    g = build_grid(GridSpec(1, 1.0, 101))
    m1, m2 = g.empty_mask(), g.empty_mask()
    m1[30:41] = True  # [0.3, 0.4]
    m2[60:71] = True  # [0.6, 0.7], gap 0.2
    assert not pairwise_disjoint([dilate(g, m1, 0.15), dilate(g, m2, 0.15)])
    assert pairwise_disjoint([dilate(g, m1, 0.05), dilate(g, m2, 0.05)])


def test_dilation_touching_boundary():
    g = build_grid(GridSpec(1, 1.0, 21))
    m = g.empty_mask()
    m[2] = True
    assert not touches_boundary(g, dilate(g, m, 0.05))
    assert touches_boundary(g, dilate(g, m, 0.1))


def test_default_eps0_keeps_neighbourhoods_apart(ref_grid, ref_comps):
    eps = default_eps0(ref_grid, ref_comps)
    hoods = [dilate(ref_grid, w, eps) for w in ref_comps.omega]
    assert pairwise_disjoint(hoods)
    assert all(not touches_boundary(ref_grid, h) for h in hoods)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 40), min_size=1, max_size=6), st.floats(0.025, 0.3))
def test_dilate_monotone_and_contains(nodes, eps):
    g = build_grid(GridSpec(1, 1.0, 41))
    m = g.empty_mask()
    m[nodes] = True
    d1, d2 = dilate(g, m, eps), dilate(g, m, eps + 0.05)
    assert np.all(d1[m]) and np.all(d2[d1])


def test_hausdorff_examples():
    g = build_grid(GridSpec(1, 4.0, 5))  # h = 1
    A, B = g.empty_mask(), g.empty_mask()
    A[0] = True
    B[[0, 3]] = True
    assert hausdorff(g, A, A) == 0.0
    assert hausdorff(g, A, B) == 3.0
    # A subset of B: the directed distance from A vanishes
    assert directed_hausdorff(g, A, B) == 0.0
    assert hausdorff(g, A, B) == directed_hausdorff(g, B, A)
    with pytest.raises(GridError):
        hausdorff(g, A, g.empty_mask())


@settings(max_examples=40, deadline=None)
@given(st.lists(st.booleans(), min_size=12, max_size=12), st.lists(st.booleans(), min_size=12, max_size=12))
def test_hausdorff_metric_properties(a, b):
    g = build_grid(GridSpec(1, 1.0, 12))
    A, B = np.array(a), np.array(b)
    if not A.any() or not B.any():
        return
    d = hausdorff(g, A, B)
    assert d == hausdorff(g, B, A)
    assert (d == 0) == bool(np.array_equal(A, B))


def test_closure_adds_ring():
    m = np.zeros(7, dtype=bool)
    m[3] = True
    assert np.flatnonzero(closure(m)).tolist() == [2, 3, 4]
