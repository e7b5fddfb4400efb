import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ozlab.ruelle import (EMPTY, Alphabet, RuelleError, RuelleOperator, check_aperiodic, log_rho,
                          off_axis_scan, parse_alphabet)

M = np.array([[0.6, 0.3], [0.2, 0.5]])
AB12 = Alphabet(("a", "b"), np.array([[1], [2]]))


def m_model():
    return RuelleOperator.from_matrix(AB12, M)


def iid12():
    return RuelleOperator.iid(AB12, [0.5, 0.5])


def random_op(seed, N=3, m=1, d=1):
    rng = np.random.default_rng(seed)
    V = rng.integers(-2, 3, size=(N, d))
    alph = Alphabet(tuple("xyzuvw"[:N]), V)
    return RuelleOperator.from_table(alph, m, rng.uniform(0.05, 1.0, (N,) * (m + 1)))


def test_apply_examples():
    op = iid12()
    assert np.allclose(op.apply(np.ones(len(op.contexts))), 1.0)
    mm = m_model()
    L1 = mm.apply(np.ones(len(mm.contexts)))
    assert L1[mm.index[(0,)]] == pytest.approx(0.8) and L1[mm.index[(1,)]] == pytest.approx(0.8)
    # f supported on the cylinder of symbol a: only the z = a term survives
    f = mm.cylinder_function(lambda c: 1.0 if c == (0,) else 0.0)
    assert mm.apply(f, (1,)) == pytest.approx(M[0, 1])
    with pytest.raises(ValueError, match="depth mismatch"):
        mm.apply(np.ones(7))


def test_spectral_examples():
    sd = iid12().spectral_data()
    assert sd.rho == pytest.approx(1, abs=1e-14) and np.allclose(sd.h, 1) and sd.gap == 0
    sd = m_model().spectral_data()
    assert sd.rho == pytest.approx(0.8, abs=1e-10)
    assert sd.lam2 == pytest.approx(0.3, abs=1e-10)
    assert sd.gap == pytest.approx(0.375, abs=1e-10)
    rho = iid12().tilted(0.1).spectral_data().rho
    assert rho == pytest.approx((math.exp(0.1) + math.exp(0.2)) / 2, abs=1e-12)


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("m", [1, 2])
def test_power_iteration_matches_dense(seed, m):
    op = random_op(seed, N=3 + seed % 2, m=m)
    sd = op.spectral_data()
    assert sd.rho == pytest.approx(op.spectral_radius(), abs=1e-10)
    assert sd.residual <= 1e-10
    assert np.all(sd.h > 0)
    bb = op.beta_bar
    assert np.all(sd.h <= math.exp(bb) * (1 + 1e-12)) and np.all(sd.h >= math.exp(-bb) * (1 - 1e-12))


def test_normalization():
    mm = m_model().normalize()
    assert np.max(np.abs(mm.apply(np.ones(len(mm.contexts))) - 1)) <= 1e-10
    again = mm.normalize()
    assert np.allclose(again.weights, mm.weights, atol=1e-12)


def test_normalization_conjugation_identity():
    from ozlab.local_limit import qn_distribution
    op = m_model()
    sd = op.spectral_data()
    nop = op.normalize(sd)
    n, ctx = 6, (0,)
    raw = qn_distribution(op, None, n, ctx)
    nor = qn_distribution(nop, sd.h, n, ctx)
    # L'^n g = rho^-n h^-1 L^n (g h) with g = 1 on the normalized side
    for r, q in raw.table.items():
        assert nor.q(r) / sd.h[op.index[ctx]] == pytest.approx(q / sd.rho ** n, rel=1e-12)


def test_truncation_geometric():
    N = 12
    alph = Alphabet.simple(list(range(1, N + 1)))
    op = RuelleOperator.iid(alph, [2.0 ** -z for z in range(1, N + 1)])
    rhos = []
    for k in range(2, N + 1):
        r = op.truncate(k).spectral_data().rho
        assert r == pytest.approx(1 - 2.0 ** -k, abs=1e-12)
        rhos.append(r)
    assert all(a <= b for a, b in zip(rhos, rhos[1:]))
    full = op.truncate(N)
    assert np.allclose(full.dense_eigenvalues(), op.dense_eigenvalues())
    with pytest.raises(ValueError):
        op.truncate(0)


def test_truncation_monotone_depth1():
    op = random_op(3, N=5, m=1)
    rhos = [op.truncate(k).spectral_radius() for k in range(1, 6)]
    assert all(a <= b + 1e-14 for a, b in zip(rhos, rhos[1:]))


def test_tilting_identity_and_additivity():
    op = random_op(1, N=3, m=2, d=2)
    assert np.allclose(op.tilted((0, 0)).weights, op.weights)
    a = op.tilted((0.1, -0.2)).tilted((0.3, 0.05))
    b = op.tilted((0.4, -0.15))
    assert np.allclose(a.weights, b.weights, rtol=1e-14)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 1000), a=st.floats(-1, 1), h=st.floats(0.05, 0.5))
def test_log_rho_convex_along_lines(seed, a, h):
    op = random_op(seed, N=3, m=1, d=2)
    direc = np.array([math.cos(a * 3), math.sin(a * 3)])
    vals = [log_rho(op, s * direc) for s in (-h, 0.0, h)]
    assert vals[0] + vals[2] - 2 * vals[1] >= -1e-9


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 1000))
def test_positivity_and_monotonicity(seed):
    op = random_op(seed, N=3, m=2)
    rng = np.random.default_rng(seed)
    f = rng.uniform(0, 1, len(op.contexts))
    g = f + rng.uniform(0, 1, len(op.contexts))
    Lf, Lg = op.apply(f), op.apply(g)
    assert np.all(Lf >= 0) and np.all(Lg >= Lf)


def test_fourier_symbol():
    op = iid12()
    assert not op.fourier_symbol(0.0).is_complex or np.allclose(op.fourier_symbol(0.0).weights.imag, 0)
    for tau in np.linspace(-np.pi, np.pi, 13):
        r = abs(op.fourier_symbol(tau).dense_eigenvalues()[0])
        assert r == pytest.approx(abs(math.cos(tau / 2)), abs=1e-12)
    assert abs(op.fourier_symbol(np.pi).dense_eigenvalues()[0]) < 1e-12


def test_off_axis_scan():
    res = off_axis_scan(iid12(), 0.3)
    assert res["max"] == pytest.approx(math.cos(0.15), abs=1e-8)
    with pytest.raises(ValueError, match="truly d-dimensional"):
        off_axis_scan(RuelleOperator.iid(Alphabet(("a", "b"), np.array([[1], [1]])), [0.5, 0.5]), 0.3)
    with pytest.raises(ValueError, match="truly d-dimensional"):
        check_aperiodic(np.array([[1, 0], [0, 1]]))
    mres = off_axis_scan(m_model().normalize(), 0.3)
    assert mres["max"] < 1 and mres["eta"] > 0


def test_off_axis_scan_2d_aperiodic():
    alph = Alphabet(("a", "b", "c"), np.array([[1, 0], [0, 1], [1, 1]]))
    op = RuelleOperator.from_table(alph, 1, np.full((3, 3), 1 / 3))
    res = off_axis_scan(op, 0.3, n_grid=24)
    assert res["eta"] > 0


def test_projector_coefficient():
    nm = m_model().normalize()
    ones = np.ones(len(nm.contexts))
    assert nm.projector_coefficient(ones)["c"] == pytest.approx(1, abs=1e-12)
    op = iid12().lift(1)
    g = op.cylinder_function(lambda c: {0: 2.0, 1: 4.0}.get(c[0], 3.0))
    assert op.projector_coefficient(g)["c"] == pytest.approx(3, abs=1e-12)
    res = nm.projector_coefficient(nm.cylinder_function(lambda c: 1.0 + (c[0] == 0)))
    assert res["rate"] == pytest.approx(0.375, rel=0.1)


def test_iterate_sum_bound_on_normalized_ops():
    for seed in range(4):
        op = random_op(seed, N=2 + seed % 2, m=1 + seed % 2).normalize()
        bound = 2 * math.exp(op.beta_bar * op.theta)
        for n in range(1, 7):
            assert op.string_sup_sum(n) <= bound


def test_holder_seminorm_depth_zero_and_table():
    assert iid12().holder_seminorm() == 0
    op = m_model()
    # psi differs only through x_1 (coordinate 2): var_2 / theta^2
    var2 = max(abs(math.log(M[z, 0]) - math.log(M[z, 1])) for z in range(2))
    assert op.holder_seminorm() == pytest.approx(var2 / 0.25)
    assert op.beta_bar == pytest.approx(var2 / 0.25 / 0.5)


def test_context_structure():
    op = RuelleOperator.from_matrix(AB12, M)
    assert (EMPTY,) in op.index
    # EMPTY contexts carry the mean weight over completions
    assert op.psi(0, (EMPTY,)) == pytest.approx(math.log(M[0].mean()))
    # the successor of a context prepends the new symbol
    assert op.contexts[op.succ[op.index[(EMPTY,)], 1]] == (1,)


def test_parse_alphabet():
    _, op = parse_alphabet("a : 1 : 0.6 0.3\nb : 2 : 0.2 0.5\n")
    assert op.m == 1 and op.spectral_data().rho == pytest.approx(0.8, abs=1e-10)
    _, op = parse_alphabet("# binomial\nu : 0 : 0.5\nv : 1 : 0.5\n")
    assert op.m == 0
    with pytest.raises(ValueError):
        parse_alphabet("a : 1 : 0.5 0.5 0.5\nb : 2 : 0.5 0.5 0.5\n")
    with pytest.raises(ValueError):
        parse_alphabet("a : 1\n")


def test_non_convergence_reports():
    op = random_op(0, N=3, m=2)
    with pytest.raises(RuelleError):
        op.spectral_data(tol=1e-300, max_iter=5)
