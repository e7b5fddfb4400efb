import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ozlab.gibbs import exact_two_point
from ozlab.lattice import boundary, make_edge
from ozlab.random_line import (Line, bk_check, concat, conditional_weight, cycle_space, decoupling_ratio,
                               enumerate_lines, explicit_weight_check, extract_line, is_valid_line,
                               line_delta, line_weight, representation_sum, spin_ratio_with_cosh,
                               split_at)

from conftest import nn_graph, triangle

X0, X1 = (0, 0), (1, 0)


def _all_lines(graph, beta):
    V = graph.vertices
    out = []
    for i, x in enumerate(V):
        for y in V[i + 1:]:
            out.extend(ln for ln, _ in enumerate_lines(graph, x, y, beta).values())
    return out


def test_extract_single_edge_and_path():
    g = nn_graph([(0, 2), (0, 0)])
    ln = extract_line([(X0, X1)], g, X0, X1)
    assert ln.vertices == (X0, X1) and ln.delta == {make_edge(X0, X1)}
    ln = extract_line([(X0, X1), (X1, (2, 0))], g, X0, (2, 0))
    assert ln.vertices == (X0, X1, (2, 0))


def test_extract_square_plus_tail_reconstruction():
    g = nn_graph([(-1, 1), (0, 1)])
    sq = [((0, 0), (1, 0)), ((1, 0), (1, 1)), ((1, 1), (0, 1)), ((0, 1), (0, 0))]
    D = {make_edge(*e) for e in sq + [((-1, 0), (0, 0))]}
    ln = extract_line(D, g, (-1, 0), (0, 0))
    lam = set(ln.edges)
    assert lam <= D and not ((ln.delta - lam) & D)
    assert ln.start == (-1, 0) and ln.end == (0, 0)


def test_extract_boundary_mismatch():
    g = nn_graph([(0, 2), (0, 0)])
    with pytest.raises(ValueError, match="boundary mismatch"):
        extract_line([(X0, X1)], g, X0, (2, 0))


@settings(max_examples=150, deadline=None)
@given(data=st.data())
def test_extraction_partition_property(data):
    g = nn_graph([(0, 3), (0, 2)])
    cs = cycle_space(g)
    V = g.vertices
    i, j = data.draw(st.lists(st.integers(0, len(V) - 1), min_size=2, max_size=2, unique=True))
    x, y = V[i], V[j]
    row = cs.paths(x, y)[data.draw(st.integers(0, len(cs.rows) - 1))]
    D = {g.edges[k] for k in np.flatnonzero(row)}
    assert boundary(D) == {x, y}
    ln = extract_line(D, g, x, y)
    lam = set(ln.edges)
    # reconstruction: lambda(D) = lambda iff lambda in D and (Delta \ lambda) misses D
    assert lam <= D and not ((ln.delta - lam) & D)
    assert lam <= ln.delta
    assert line_delta(g, ln.vertices) == ln.delta
    assert extract_line(lam, g, x, y).vertices == ln.vertices
    assert len(set(ln.edges)) == len(ln.edges)


def test_group_weight_equals_q(grid23):
    beta = 0.35
    for x in grid23.vertices[:3]:
        for y in grid23.vertices:
            if x == y:
                continue
            for ln, acc in enumerate_lines(grid23, x, y, beta).values():
                assert acc == pytest.approx(line_weight(grid23, ln, beta).q, abs=1e-13)


def test_line_weight_examples():
    g = nn_graph([(0, 1), (0, 0)])
    lw = line_weight(g, Line((X0, X1)), 0.7)
    assert lw.q == pytest.approx(math.tanh(0.7)) and lw.ratio == pytest.approx(1)
    tri = triangle()
    u = math.tanh(0.4)
    total = sum(line_weight(tri, ln, 0.4).q for ln, _ in enumerate_lines(tri, X0, X1, 0.4).values())
    assert total == pytest.approx((u + u * u) / (1 + u ** 3), abs=1e-14)
    assert line_weight(tri, Line((X0, X1)), 1e-9).q < 1e-8


def test_weights_bounded_and_cosh_cancellation(grid23):
    beta = 0.45
    for ln in _all_lines(grid23, beta):
        lw = line_weight(grid23, ln, beta)
        assert 0 < lw.q <= lw.w <= 1 and lw.ratio <= 1 + 1e-14
        assert lw.ratio == pytest.approx(spin_ratio_with_cosh(grid23, ln, beta), rel=1e-11)


def test_invalid_line_rejected(grid23):
    # the shortcut along the boundary is preferred, so the detour via (1,1) is not lambda(D) for D = itself
    bogus = Line(((0, 0), (0, 1), (1, 1), (1, 0)))
    if not is_valid_line(grid23, bogus):
        with pytest.raises(ValueError):
            line_weight(grid23, bogus, 0.3)
    with pytest.raises(ValueError):
        line_weight(grid23, Line(((0, 0), (2, 0))), 0.3)


@pytest.mark.parametrize("beta", [0.1, 0.4])
def test_representation_small_examples(beta):
    g = nn_graph([(0, 1), (0, 0)])
    assert representation_sum(g, X0, X1, beta) == pytest.approx(math.tanh(beta), abs=1e-14)
    sq = nn_graph([(0, 1), (0, 1)])
    ex = exact_two_point(sq, beta)
    for y in [(1, 0), (1, 1)]:
        assert representation_sum(sq, X0, y, beta) == pytest.approx(ex.g(X0, y), abs=1e-10)


def test_representation_on_larger_grid():
    g = nn_graph([(0, 3), (0, 2)])
    ex = exact_two_point(g, 0.3)
    for y in [(3, 2), (2, 1), (0, 2)]:
        assert representation_sum(g, X0, y, 0.3) == pytest.approx(ex.g(X0, y), abs=1e-10)


def test_split_examples():
    x, z, y = (0, 0), (1, 0), (2, 0)
    a, b = split_at(Line((x, z, y)), z)
    assert a.vertices == (x, z) and b.vertices == (z, y)
    a, b = split_at(Line((x, z, y)), y)
    assert a.vertices == (x, z, y) and b.is_trivial
    loop = Line(((0, 0), (1, 0), (1, 1), (0, 1), (0, 0), (-1, 0)))
    a, b = split_at(loop, (0, 0))
    assert len(a) == 4 and b.vertices == ((0, 0), (-1, 0))
    with pytest.raises(ValueError):
        split_at(loop, (5, 5))


def test_split_disjointness_and_factorisation(grid23):
    beta = 0.3
    for ln in _all_lines(grid23, beta):
        for z in set(ln.vertices[1:-1]):
            a, b = split_at(ln, z, grid23)
            assert concat(a, b).vertices == ln.vertices
            assert not (set(a.edges) & b.delta)
            q = line_weight(grid23, ln, beta).q
            assert conditional_weight(grid23, a, b, beta) * line_weight(grid23, b, beta).q == pytest.approx(q, rel=1e-12)


def test_bk_examples(grid23):
    beta = 0.4
    tri = triangle()
    lhs, rhs, ok = bk_check(tri, X0, X1, X0, beta)
    assert ok and lhs == pytest.approx(rhs, abs=1e-12)
    assert bk_check(tri, X0, X1, (0, 1), beta)[2]
    V = grid23.vertices
    for x in V:
        for y in V:
            for z in V:
                if x != y:
                    assert bk_check(grid23, x, y, z, beta)[2]


def test_decoupling_ratio_cases():
    g = nn_graph([(0, 3), (0, 1)])
    gam, eta = Line(((0, 0), (1, 0))), Line(((1, 0), (2, 0)))
    lam = Line(((2, 0), (3, 0)))
    assert decoupling_ratio(g, gam, eta, lam, lam, 0.3) == pytest.approx(1.0)
    l2 = Line(((2, 0), (2, 1), (3, 1)))
    assert decoupling_ratio(g, gam, eta, lam, l2, 1e-6) == pytest.approx(1.0, abs=1e-6)


def test_decoupling_ratio_bounded_on_grid_family():
    g = nn_graph([(0, 3), (0, 1)])
    beta = 0.3

    def lines_from(x, maxlen):
        return [ln for y in g.vertices if y != x
                for ln, _ in enumerate_lines(g, x, y, beta).values() if len(ln) <= maxlen]

    worst, n = 0.0, 0
    for gam in lines_from((0, 0), 2) + lines_from((0, 1), 2):
        for eta in lines_from(gam.end, 1):
            cands = lines_from(eta.end, 3)
            for a in cands:
                for b in cands:
                    try:
                        r = decoupling_ratio(g, gam, eta, a, b, beta)
                    except ValueError:
                        continue
                    worst, n = max(worst, abs(math.log(r))), n + 1
    assert n > 100 and worst <= 0.05


def test_explicit_weight_formula():
    g = nn_graph([(0, 1), (0, 0)])
    d, v, ok = explicit_weight_check(g, Line((X0, X1)), 0.5)
    assert ok and d == pytest.approx(math.tanh(0.5))
    tri = triangle()
    assert explicit_weight_check(tri, Line((X0, X1)), 0.6, quad_points=16)[2]
    d, v, ok = explicit_weight_check(tri, Line((X0, X1)), 0.0)
    assert ok and d == 0 and v == 0
    with pytest.raises(ValueError):
        explicit_weight_check(tri, Line((X0, X1)), 0.3, quad_points=4)


def test_explicit_weight_formula_on_grid(grid23):
    for ln in _all_lines(grid23, 0.3)[:12]:
        assert explicit_weight_check(grid23, ln, 0.3)[2]


def test_box_weight_matches_enumeration_and_converges():
    from ozlab.random_line import box_line_weight, plane_line_weight
    ln = Line(((0, 0), (1, 0), (1, 1)))
    g = nn_graph([(-1, 2), (-1, 2)])
    exact = line_weight(g, Line(ln.vertices), 0.3, validate=False).q
    assert box_line_weight(ln, 0.3, margin=0) == pytest.approx(exact, rel=1e-10)
    q, diff = plane_line_weight(ln, 0.3)
    assert diff < 1e-3 * q
