import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ozlab.decomposition import (correct_break_points, displacement, eta_ok, find_break_points,
                                 in_inflated_cone, irreducible_decompose, is_correct_break, is_irreducible,
                                 mu_ok, verify_irreducible_representation)
from ozlab.lattice import NormModel, dual_vector
from ozlab.random_line import Line, concat, enumerate_lines

from conftest import nn_graph

EUC = NormModel.euclidean()
E1 = dual_vector(EUC, (1, 0))
DIAG = dual_vector(EUC, (1, 1))


def path(*steps, start=(0, 0)):
    pts = [start]
    for s in steps:
        pts.append((pts[-1][0] + s[0], pts[-1][1] + s[1]))
    return Line(tuple(pts))


R, U, L, D = (1, 0), (0, 1), (-1, 0), (0, -1)


def test_staircase_all_interior_breaks():
    ln = path(R, U, R, U, R, U)
    assert find_break_points(ln, DIAG) == list(range(1, 6))


def test_backtrack_removes_break_at_height():
    ln = path(R, R, L, R, R, R)
    # heights 0,1,2,1,2,3,4: height 1 and 2 are revisited
    br = find_break_points(ln, E1)
    assert all(ln.vertices[l][0] not in (1, 2) for l in br)
    assert find_break_points(path(R), E1) == []


def test_correct_break_examples():
    K, delta = 2.0, 0.25
    near = path(R, U, L, U)                      # everything within 2K of the start
    assert all(in_inflated_cone(np.subtract(v, near.start), E1, K, delta, EUC) for v in near.vertices[1:])
    far = path(*([R] * 30))
    assert is_correct_break(far, 1, E1, K, delta, EUC)
    back = path(R, U, *([L] * 30))
    assert not is_correct_break(back, 1, E1, K, delta, EUC)
    assert not in_inflated_cone((0, 40), E1, K, delta, EUC)


def test_inflated_cone_against_dense_sampling():
    rng = np.random.default_rng(0)
    K, delta = 1.5, 0.25
    ang = np.linspace(0, 2 * np.pi, 20000, endpoint=False)
    us = 2 * K * np.stack([np.cos(ang), np.sin(ang)], 1)
    for _ in range(300):
        v = rng.uniform(-12, 12, 2)
        w = v[None, :] - us
        brute = bool(np.linalg.norm(v) <= 2 * K or
                     np.any((1 - delta) * np.linalg.norm(w, axis=1) - w @ E1.vec < 0))
        gap = np.min((1 - delta) * np.linalg.norm(w, axis=1) - w @ E1.vec)
        if abs(gap) > 1e-6:
            assert in_inflated_cone(v, E1, K, delta, EUC) == brute


def test_straight_line_gives_single_edge_pieces():
    n = 8
    ln = path(*([R] * n))
    dec = irreducible_decompose(ln, E1, 0.2, 0.25, EUC)
    assert dec.m == n - 2
    assert all(len(g) == 1 for g in dec.gammas)
    assert dec.reconstruct().vertices == ln.vertices


def test_no_correct_breaks_is_degenerate():
    ln = path(R, U, L)
    dec = irreducible_decompose(ln, E1, 1.0, 0.25, EUC)
    assert dec.degenerate and dec.m == 0 and dec.eta.is_trivial
    assert dec.reconstruct().vertices == ln.vertices


@pytest.mark.parametrize("norm", [EUC, NormModel.ising2d(0.3)])
@pytest.mark.parametrize("K", [0.5, 1.0, 3.0])
def test_decomposition_invariants_on_grid_lines(norm, K):
    g = nn_graph([(0, 3), (0, 1)])
    t = dual_vector(norm, (1, 0))
    delta = 0.25
    count = 0
    for y in [(3, 0), (3, 1), (2, 0)]:
        for ln, _ in enumerate_lines(g, (0, 0), y, 0.3).values():
            dec = irreducible_decompose(ln, t, K, delta, norm)
            assert dec.reconstruct().vertices == ln.vertices
            assert dec == irreducible_decompose(ln, t, K, delta, norm)
            if dec.degenerate:
                continue
            hs = [float(np.dot(b, t.vec)) for b in dec.breaks]
            assert all(a < b for a, b in zip(hs, hs[1:]))
            rest = [concat(*dec.gammas[i + 1:], dec.eta) for i in range(dec.m)]
            for gam, tail in zip(dec.gammas, rest):
                assert is_irreducible(gam, t, K, delta, norm, tail=tail)
            assert eta_ok(dec.eta, t, K, delta, norm)
            assert mu_ok(dec.mu, t, K, delta, norm, tail=concat(*dec.gammas, dec.eta))
            count += 1
    assert count > 0


def test_is_irreducible_examples():
    K, delta = 1.0, 0.25
    assert is_irreducible(path(R), E1, K, delta, EUC)
    a = path(R, U, R)
    b = path(R, D, R, start=a.end)
    assert is_irreducible(a, E1, K, delta, EUC)
    joined = concat(a, b)
    assert correct_break_points(joined, E1, K, delta, EUC)
    assert not is_irreducible(joined, E1, K, delta, EUC)
    assert not is_irreducible(path(D, R, R, U, R), E1, K, delta, EUC)


def test_displacement():
    assert displacement(Line(((0, 0),))) == (0, 0)
    assert displacement(path(R, U)) == (1, 1)


@settings(max_examples=100, deadline=None)
@given(steps=st.lists(st.sampled_from([R, U, L, D]), min_size=2, max_size=30), cut=st.integers(0, 30))
def test_displacement_additive(steps, cut):
    ln = path(*steps)
    k = cut % (len(steps) + 1)
    a, b = Line(ln.vertices[:k + 1]), Line(ln.vertices[k:])
    assert displacement(concat(a, b)) == tuple(np.add(displacement(a), displacement(b)))


@settings(max_examples=150, deadline=None)
@given(steps=st.lists(st.sampled_from([R, R, U, D, L]), min_size=2, max_size=24),
       K=st.sampled_from([0.5, 1.0, 2.0]))
def test_random_walk_decomposition_reconstructs(steps, K):
    ln = path(*steps)
    dec = irreducible_decompose(ln, E1, K, 0.25, EUC)
    assert dec.reconstruct().vertices == ln.vertices
    for l in find_break_points(ln, E1):
        assert ln.vertices.count(ln.vertices[l]) == 1


def test_representation_single_edge():
    g = nn_graph([(0, 1), (0, 0)])
    chk = verify_irreducible_representation(g, (1, 0), 0.4, E1, 1.0, 0.25, EUC)
    assert chk.lhs == pytest.approx(math.tanh(0.4))
    assert chk.rhs + chk.degenerate_mass == pytest.approx(math.tanh(0.4), abs=1e-14)
    assert chk.defect < 1e-12


def test_representation_on_grid_axis_pair(grid23):
    chk = verify_irreducible_representation(grid23, (2, 0), 0.3, E1, 1.0, 0.25, EUC)
    assert chk.defect <= 1e-12


def test_representation_guard(grid23):
    with pytest.raises(ValueError, match="forward cone"):
        verify_irreducible_representation(grid23, (0, 1), 0.3, E1, 1.0, 0.25, EUC)


def test_degenerate_mass_shrinks_on_strips():
    masses = []
    for L in range(3, 7):
        g = nn_graph([(0, L - 1), (0, 1)])
        chk = verify_irreducible_representation(g, (L - 1, 0), 0.3, E1, 1.0, 0.25, EUC)
        assert chk.defect <= 1e-12
        masses.append(chk.degenerate_mass)
    assert all(a >= b for a, b in zip(masses, masses[1:]))
