import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ozlab.local_limit import (GaussianModel, enumerate_distribution, fourier_invert, gaussian_llt,
                               grad_log_laplace, hessian_at_zero, llt_errors, log_laplace, qn_distribution,
                               saddlepoint_llt, tail_check, tail_mass, tilt_solve)
from ozlab.ruelle import Alphabet, RuelleOperator, off_axis_scan

M = np.array([[0.6, 0.3], [0.2, 0.5]])


def binomial(shift=0):
    return RuelleOperator.iid(Alphabet.simple([shift, shift + 1]), [0.5, 0.5])


def m_model():
    return RuelleOperator.from_matrix(Alphabet(("a", "b"), np.array([[1], [2]])), M).normalize()


def product_2d():
    alph = Alphabet(tuple("abcd"), np.array([[0, 0], [1, 0], [0, 1], [1, 1]]))
    p = np.array([0.5 * 0.5, 0.5 * 0.5, 0.5 * 0.5, 0.5 * 0.5])
    return RuelleOperator.iid(alph, p)


def random_op(seed, d=1, m=1, N=3):
    rng = np.random.default_rng(seed)
    V = rng.integers(-1, 3, size=(N, d))
    alph = Alphabet(tuple("xyzw"[:N]), V)
    return RuelleOperator.from_table(alph, m, rng.uniform(0.1, 1, (N,) * (m + 1)))


def test_binomial_n3():
    dist = qn_distribution(binomial(), None, 3)
    assert dist.table == pytest.approx({(0,): 1 / 8, (1,): 3 / 8, (2,): 3 / 8, (3,): 1 / 8}, abs=1e-15)
    assert dist.total == pytest.approx(1, abs=1e-14)


def test_one_step_is_marginal():
    op = random_op(4)
    ctx = (1,)
    dist = qn_distribution(op, None, 1, ctx)
    expect: dict = {}
    for z in range(3):
        r = tuple(op.alphabet.V[z])
        expect[r] = expect.get(r, 0) + op.weights[op.index[ctx], z]
    assert dist.table == pytest.approx(expect, rel=1e-14)


def test_dp_against_matrix_power_oracle():
    op = m_model()
    n, ctx = 8, (0,)
    dist = qn_distribution(op, None, n, ctx)
    V = op.alphabet.V[:, 0]
    Msz = 32
    vals = []
    for k in range(Msz):
        tau = 2 * np.pi * k / Msz
        A = op.fourier_symbol(tau).matrix()
        vals.append((np.linalg.matrix_power(A, n) @ np.ones(len(op.contexts)))[op.index[ctx]])
    coeffs = np.fft.fft(np.array(vals)).real / Msz      # coefficient of e^{i tau r}
    for r in range(n * V.min(), n * V.max() + 1):
        assert dist.q((r,)) == pytest.approx(coeffs[r % Msz], abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 500), n=st.integers(1, 6), d=st.sampled_from([1, 2]), m=st.sampled_from([0, 1, 2]))
def test_dp_equals_enumeration_and_fourier(seed, n, d, m):
    op = random_op(seed, d=d, m=m)
    dist = qn_distribution(op, None, n)
    enum = enumerate_distribution(op, None, n)
    for r, q in enum.items():
        assert dist.q(r) == pytest.approx(q, abs=1e-12)
    assert dist.total == pytest.approx(sum(enum.values()), rel=1e-12)
    fi = fourier_invert(op, None, n)
    for r, v in zip(fi["r"], fi["values"]):
        assert v == pytest.approx(dist.q(r), abs=1e-10)


def test_box_overflow():
    with pytest.raises(ValueError, match="box overflow"):
        qn_distribution(binomial(), None, 10, box=((0,), (5,)))


def test_log_laplace_examples():
    op = m_model()
    assert log_laplace(op, None, 17, 0.0, (1,)) == pytest.approx(0, abs=1e-13)
    b = binomial()
    for n in (1, 5, 40):
        for xi in (-0.7, 0.3, 1.1):
            assert log_laplace(b, None, n, xi) == pytest.approx(math.log((1 + math.exp(xi)) / 2), abs=1e-13)


def test_log_laplace_converges_at_gap_rate():
    op = m_model()
    xi = 0.2
    tilt = op.tilted(xi)
    ev = tilt.dense_eigenvalues()
    lr = math.log(abs(ev[0]))
    gap = abs(ev[1]) / abs(ev[0])
    ctx = (0,)
    ns = list(range(4, 41, 2))
    excess = [n * (log_laplace(op, None, n, xi, ctx) - lr) for n in ns]
    log_chi = excess[-1]
    dev = np.abs(np.array(excess) - log_chi)[:-6]
    slope = np.polyfit(ns[:len(dev)], np.log(dev), 1)[0]
    assert -slope == pytest.approx(math.log(1 / gap), rel=0.05)


def test_gradient_is_running_mean_and_matches_fd():
    op = m_model()
    n, ctx = 30, (1,)
    dist = qn_distribution(op, None, n, ctx)
    H, grad, hess = grad_log_laplace(op, None, n, 0.0, ctx)
    assert grad[0] == pytest.approx(dist.running_mean[0], abs=1e-10)
    h = 1e-5
    fd = (log_laplace(op, None, n, h, ctx) - log_laplace(op, None, n, -h, ctx)) / (2 * h)
    assert fd == pytest.approx(grad[0], abs=1e-8)
    assert hess[0, 0] == pytest.approx(dist.covariance[0, 0] / n, rel=1e-10)


def test_hessian_examples():
    assert hessian_at_zero(binomial()).A[0, 0] == pytest.approx(0.25, abs=1e-6)
    assert hessian_at_zero(binomial(5)).A[0, 0] == pytest.approx(0.25, abs=1e-6)
    A = hessian_at_zero(product_2d()).A
    assert np.allclose(A, 0.25 * np.eye(2), atol=1e-6)


def test_hessian_vs_dp_variance_at_400():
    op = m_model()
    A = hessian_at_zero(op).A[0, 0]
    dist = qn_distribution(op, None, 400, (0,))
    assert dist.covariance[0, 0] / 400 == pytest.approx(A, rel=0.01)


def test_degenerate_observable_rejected():
    op = RuelleOperator.iid(Alphabet.simple(np.array([[1, 1], [2, 2]])), [0.5, 0.5])
    with pytest.raises(ValueError, match="degenerate observable"):
        hessian_at_zero(op)


def test_tilted_consistency():
    op = m_model()
    n, xi, ctx = 12, 0.35, (0,)
    base = qn_distribution(op, None, n, ctx)
    tilt = qn_distribution(op.tilted(xi), None, n, ctx)
    H = log_laplace(op, None, n, xi, ctx)
    for r, q in base.table.items():
        lhs = tilt.q(r) / math.exp(n * H)
        assert lhs == pytest.approx(math.exp(xi * r[0] - n * H) * q, rel=1e-12, abs=1e-300)


def test_tilt_solve_examples():
    b = binomial()
    assert tilt_solve(b, None, 10, 0.5)[0] == pytest.approx(0, abs=1e-12)
    assert tilt_solve(b, None, 10, 0.75)[0] == pytest.approx(math.log(3), abs=1e-8)
    with pytest.raises(ValueError, match="unreachable mean"):
        tilt_solve(b, None, 10, 1.0)
    with pytest.raises(ValueError, match="unreachable mean"):
        tilt_solve(product_2d(), None, 5, (1.0, 0.5))


def test_gaussian_llt_examples():
    model = hessian_at_zero(binomial())
    pred = gaussian_llt(model, 100, 50)
    assert pred == pytest.approx(1 / math.sqrt(50 * math.pi), rel=1e-6)
    exact = math.comb(100, 50) / 2 ** 100
    assert exact == pytest.approx(0.0795892, abs=1e-7)
    assert abs(pred / exact - 1) < 0.003
    m = GaussianModel([[0.7]], [0.2])
    assert gaussian_llt(m, 30, 6) == pytest.approx(1 / math.sqrt(2 * math.pi * 30 * 0.7))
    m2 = GaussianModel(np.diag([0.25, 0.4]), [0.5, 0.1])
    one = [GaussianModel([[0.25]], [0.5]), GaussianModel([[0.4]], [0.1])]
    r = (27, 4)
    assert gaussian_llt(m2, 50, r) == pytest.approx(gaussian_llt(one[0], 50, 27) * gaussian_llt(one[1], 50, 4))


def test_saddlepoint_diagnostic_close_at_200():
    for op in (binomial(), m_model()):
        dist = qn_distribution(op, None, 200, (0,) * op.m)
        v = dist.running_mean
        worst = 0.0
        for r in dist.points():
            if abs(r[0] - 200 * v[0]) < 200 ** 0.7:
                worst = max(worst, abs(saddlepoint_llt(op, None, 200, r, (0,) * op.m) / dist.q(r) - 1))
        assert worst < 0.05


def test_llt_error_report_shape():
    res = llt_errors(binomial(), None, 50, 0.3)
    assert res["max_rel_err"] >= 0
    assert any(row[4] for row in res["rows"]) and not all(row[4] for row in res["rows"])


def test_fourier_examples():
    b = binomial()
    fi = fourier_invert(b, None, 3, r=[(0,), (1,), (2,), (3,), (7,), (-2,)])
    assert np.allclose(fi["values"], [1 / 8, 3 / 8, 3 / 8, 1 / 8, 0, 0], atol=1e-12)
    with pytest.raises(ValueError, match="aliasing"):
        fourier_invert(b, None, 20, M=8)


def test_fourier_region_diagnostic_against_scan():
    op = m_model()
    eta = off_axis_scan(op, 0.3)["eta"]
    for n in (5, 10, 20):
        fi = fourier_invert(op, None, n, context=(0,), delta=0.3)
        # boundary factor of the normalized operator is 1 at g = 1, so the sup follows (1 - eta)^n
        assert fi["regions"]["A_delta_sup"] <= 1.5 * (1 - eta) ** n
        assert fi["regions"]["A_eps"] > 0


def test_tail_examples():
    b = binomial()
    tc = tail_check(b, None, nu=0.25)
    assert tc["dominated"] and tc["monotone"]
    assert tc["tails"][-1] <= tc["envelope"][-1] * (1 + 1e-12)
    # nu close to 1/2: the window is O(sqrt n) and the tail stays near a positive constant
    near_half = [tail_mass(b, None, n, 0.49) for n in (64, 256, 1024)]
    assert min(near_half) > 0.02 and max(near_half) < 0.06
    # n = 1: |r - 1/2| < 1 holds for both support points
    assert tail_mass(b, None, 1, 0.25) == 0.0


def test_tail_check_depth1():
    tc = tail_check(m_model(), None, nu=0.25)
    assert tc["dominated"] and tc["monotone"] and tc["c3"] > 0
    # from context a the lattice produces a small uptick, but the envelope still dominates
    tc = tail_check(m_model(), None, nu=0.25, context=(0,))
    assert tc["dominated"] and tc["c3"] > 0
