"""Displacement distributions Q_{n,x}, log-Laplace transforms and the Gaussian local limit."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull

from .ruelle import RuelleError, RuelleOperator


@dataclass
class DisplacementDistribution:
    n: int
    context: tuple
    lo: np.ndarray                 # displacement of index 0 along each axis
    mass: np.ndarray               # Q_{n,x}(lo + i)
    log_scale: float = 0.0         # table = mass * exp(log_scale)

    @property
    def d(self) -> int:
        return self.mass.ndim

    @property
    def table(self) -> dict:
        s = math.exp(self.log_scale)
        return {tuple(int(v) for v in self.lo + np.array(i)): float(q) * s
                for i, q in np.ndenumerate(self.mass) if q != 0}

    @property
    def total(self) -> float:
        return float(self.mass.sum()) * math.exp(self.log_scale)

    def q(self, r) -> float:
        i = tuple(np.atleast_1d(np.asarray(r)) - self.lo)
        if any(k < 0 or k >= s for k, s in zip(i, self.mass.shape)):
            return 0.0
        return float(self.mass[i]) * math.exp(self.log_scale)

    def points(self) -> np.ndarray:
        grids = np.meshgrid(*[self.lo[k] + np.arange(s) for k, s in enumerate(self.mass.shape)], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    @property
    def mean(self) -> np.ndarray:
        p = self.mass.ravel() / self.mass.sum()
        return p @ self.points()

    @property
    def covariance(self) -> np.ndarray:
        p = self.mass.ravel() / self.mass.sum()
        X = self.points() - self.mean
        return (X * p[:, None]).T @ X

    @property
    def running_mean(self) -> np.ndarray:
        """v_{n,x} = mean displacement per step."""
        return self.mean / self.n


@dataclass
class GaussianModel:
    A: np.ndarray
    drift: np.ndarray
    d_g: float = 1.0
    rho: float = 1.0
    chi: dict = field(default_factory=dict)

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, float))
        self.drift = np.atleast_1d(np.asarray(self.drift, float))
        if not np.allclose(self.A, self.A.T, atol=1e-12):
            raise ValueError("A must be symmetric")


def _context(op: RuelleOperator, context) -> int:
    if context is None:
        context = (-1,) * op.m
    return op.index[tuple(context)]


def _g_vec(op: RuelleOperator, g) -> np.ndarray:
    if g is None:
        return np.ones(len(op.contexts))
    g = np.asarray(g, float)
    if g.shape != (len(op.contexts),):
        raise ValueError("g must be a function on the operator's contexts")
    return g


def qn_distribution(op: RuelleOperator, g=None, n: int = 1, context=None,
                    box: tuple | None = None) -> DisplacementDistribution:
    """Exact forward dynamic program over (context, displacement)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    gv = _g_vec(op, g)
    V = op.alphabet.V
    d = V.shape[1]
    vmin, vmax = V.min(0), V.max(0)
    lo, hi = n * vmin, n * vmax
    if box is not None:
        blo, bhi = np.asarray(box[0]), np.asarray(box[1])
        if np.any(lo < blo) or np.any(hi > bhi):
            raise ValueError("displacement box overflow: need [%s, %s]" % (lo.tolist(), hi.tolist()))
    shape = tuple(int(s) for s in (hi - lo + 1))
    C = len(op.contexts)
    c0 = _context(op, context)
    # only contexts reachable from c0 matter; keep the full index for simplicity
    mass = np.zeros((C,) + shape)
    # after k steps index i stands for displacement i + k*vmin, so shifts are V(z) - vmin >= 0
    mass[(c0,) + (0,) * d] = 1.0
    log_scale = 0.0
    W = op.weights.real if not op.is_complex else op.weights
    for _ in range(n):
        new = np.zeros_like(mass)
        for z in range(op.alphabet.size):
            w = W[:, z]
            nz = np.flatnonzero(w)
            if len(nz) == 0:
                continue
            sh = np.roll(mass[nz], shift=tuple(int(v) for v in V[z] - vmin), axis=tuple(range(1, d + 1)))
            np.add.at(new, op.succ[nz, z], w[nz].reshape((-1,) + (1,) * d) * sh)
        s = float(np.abs(new).max())
        if s == 0:
            raise RuelleError("all weight vanished")
        mass = new / s
        log_scale += math.log(s)
    out = np.tensordot(gv, mass, axes=(0, 0))
    return DisplacementDistribution(n, op.contexts[c0], lo, out, log_scale)


def enumerate_distribution(op: RuelleOperator, g=None, n: int = 1, context=None) -> dict:
    """Brute force over all z-strings of length n (oracle for small n)."""
    gv = _g_vec(op, g)
    V = op.alphabet.V
    c0 = _context(op, context)
    out: dict = {}
    for zs in itertools.product(range(op.alphabet.size), repeat=n):
        c, w, r = c0, 1.0, np.zeros(V.shape[1], dtype=np.int64)
        for z in zs:
            w *= op.weights[c, z]
            c = op.succ[c, z]
            r = r + V[z]
        key = tuple(int(v) for v in r)
        out[key] = out.get(key, 0.0) + float(np.real(w)) * gv[c]
    return out


def _moments(op: RuelleOperator, g, n: int, xi, context) -> tuple:
    """log L_xi^n g(x), mean and covariance of the tilted displacement."""
    gv = _g_vec(op, g)
    V = op.alphabet.V.astype(float)
    d = V.shape[1]
    W = op.tilted(xi).weights
    c0 = _context(op, context)
    C = len(op.contexts)
    m0 = np.zeros(C)
    m1 = np.zeros((C, d))
    m2 = np.zeros((C, d, d))
    m0[c0] = 1.0
    logZ = 0.0
    for _ in range(n):
        n0 = np.zeros(C)
        n1 = np.zeros((C, d))
        n2 = np.zeros((C, d, d))
        for z in range(op.alphabet.size):
            w = W[:, z]
            v = V[z]
            s = op.succ[:, z]
            np.add.at(n0, s, w * m0)
            np.add.at(n1, s, w[:, None] * (m1 + m0[:, None] * v))
            np.add.at(n2, s, w[:, None, None] * (m2 + m1[:, :, None] * v[None, None, :]
                                                 + v[None, :, None] * m1[:, None, :]
                                                 + m0[:, None, None] * np.outer(v, v)))
        sc = n0.max()
        m0, m1, m2 = n0 / sc, n1 / sc, n2 / sc
        logZ += math.log(sc)
    Z = float(gv @ m0)
    mean = (gv @ m1) / Z
    second = np.tensordot(gv, m2, axes=(0, 0)) / Z
    return logZ + math.log(Z), mean, second - np.outer(mean, mean)


def log_laplace(op: RuelleOperator, g=None, n: int = 1, xi=0.0, context=None) -> float:
    """H_n(xi) = (1/n) log L_xi^n g(x), computed with per-step rescaling."""
    gv = _g_vec(op, g)
    W = op.tilted(np.atleast_1d(xi)).weights
    f = gv.copy()
    log_scale = 0.0
    for _ in range(n):
        f = (W * f[op.succ]).sum(1)
        s = float(np.abs(f).max())
        f /= s
        log_scale += math.log(s)
    return (log_scale + math.log(f[_context(op, context)])) / n


def grad_log_laplace(op: RuelleOperator, g=None, n: int = 1, xi=0.0, context=None) -> tuple:
    """(H_n, grad H_n, Hess H_n) at xi from exact moment recursion."""
    xi = np.atleast_1d(np.asarray(xi, float))
    logZ, mean, cov = _moments(op, g, n, xi, context)
    return logZ / n, mean / n, cov / n


def _fd_log_rho(op: RuelleOperator, xi: np.ndarray) -> float:
    return math.log(op.tilted(xi).spectral_radius())


def log_rho_gradient(op: RuelleOperator, h: float = 1e-4) -> np.ndarray:
    d = op.alphabet.d
    out = np.zeros(d)
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1

        def D(s):
            return (_fd_log_rho(op, s * e) - _fd_log_rho(op, -s * e)) / (2 * s)
        out[i] = (4 * D(h / 2) - D(h)) / 3
    return out


def log_rho_hessian(op: RuelleOperator, h: float = 1e-4) -> np.ndarray:
    """Central second differences of log rho at 0 with one Richardson step."""
    d = op.alphabet.d
    f0 = _fd_log_rho(op, np.zeros(d))
    E = np.eye(d)

    def second(i, j, s):
        if i == j:
            return (_fd_log_rho(op, s * E[i]) - 2 * f0 + _fd_log_rho(op, -s * E[i])) / s ** 2
        return (_fd_log_rho(op, s * (E[i] + E[j])) - _fd_log_rho(op, s * (E[i] - E[j]))
                - _fd_log_rho(op, s * (E[j] - E[i])) + _fd_log_rho(op, -s * (E[i] + E[j]))) / (4 * s ** 2)

    H = np.zeros((d, d))
    for i in range(d):
        for j in range(i, d):
            H[i, j] = H[j, i] = (4 * second(i, j, h / 2) - second(i, j, h)) / 3
    return 0.5 * (H + H.T)


def boundary_factor(op: RuelleOperator, g=None, context=None) -> float:
    """d_g(x) = lim L^n g(x) / rho^n via the normalized operator."""
    gv = _g_vec(op, g)
    sd = op.spectral_data()
    norm = op.normalize(sd)
    pc = norm.projector_coefficient(gv / sd.h)
    return float(sd.h[_context(op, context)] * pc["per_context"][_context(op, context)])


def hessian_at_zero(op: RuelleOperator, g=None, fd_step: float = 1e-4, context=None,
                    require_pd: bool = True) -> GaussianModel:
    A = log_rho_hessian(op, fd_step)
    ev = np.linalg.eigvalsh(A)
    # finite differences leave O(eps / h^2) noise, so the test is relative
    if require_pd and ev.min() <= 1e-6 * max(ev.max(), 1e-300):
        raise ValueError("degenerate observable: Hessian of log rho is not positive definite")
    drift = log_rho_gradient(op, fd_step)
    rho = op.spectral_radius()
    return GaussianModel(A, drift, boundary_factor(op, g, context), rho)


def _inside_hull(points: np.ndarray, target: np.ndarray, tol: float = 1e-12) -> bool:
    pts = np.unique(points.astype(float), axis=0)
    d = pts.shape[1]
    if d == 1:
        return pts.min() + tol < target[0] < pts.max() - tol
    if len(pts) <= d:
        return False
    hull = ConvexHull(pts)
    return bool(np.all(hull.equations[:, :-1] @ target + hull.equations[:, -1] < -tol))


def tilt_solve(op: RuelleOperator, g=None, n: int = 1, target=None, context=None,
               tol: float = 1e-12, max_iter: int = 100) -> np.ndarray:
    """Solve grad H_n(xi) = target by Newton with exact moment derivatives."""
    target = np.atleast_1d(np.asarray(target, float))
    if not _inside_hull(op.alphabet.V, target):
        raise ValueError("unreachable mean")
    xi = np.zeros(op.alphabet.d)
    for _ in range(max_iter):
        _, grad, hess = grad_log_laplace(op, g, n, xi, context)
        res = grad - target
        if np.max(np.abs(res)) <= tol:
            return xi
        step = np.linalg.solve(hess, res)
        # damp if the step is large (far tails of the hull)
        lim = 2.0
        if np.max(np.abs(step)) > lim:
            step *= lim / np.max(np.abs(step))
        xi = xi - step
    raise RuelleError("tilt_solve did not converge: residual %.3e" % float(np.max(np.abs(res))))


def gaussian_llt(model: GaussianModel, n: int, r, v_n=None) -> float:
    r = np.atleast_1d(np.asarray(r, float))
    v = model.drift if v_n is None else np.atleast_1d(np.asarray(v_n, float))
    d = len(r)
    x = r - n * v
    quad = float(x @ np.linalg.solve(model.A, x))
    return (model.d_g * model.rho ** n / math.sqrt((2 * math.pi * n) ** d * np.linalg.det(model.A))
            * math.exp(-quad / (2 * n)))


def saddlepoint_llt(op: RuelleOperator, g, n: int, r, context=None) -> float:
    """Tilted local limit: centre the Gaussian at r by choosing xi with grad H_n = r/n."""
    r = np.atleast_1d(np.asarray(r, float))
    xi = tilt_solve(op, g, n, r / n, context)
    H, _, hess = grad_log_laplace(op, g, n, xi, context)
    d = len(r)
    return math.exp(n * H - float(xi @ r)) / math.sqrt((2 * math.pi * n) ** d * np.linalg.det(hess))


def window(dist: DisplacementDistribution, nu: float, v=None) -> np.ndarray:
    """Lattice points r with |r - n v| < n^(1-nu); v defaults to the running mean."""
    v = dist.running_mean if v is None else np.atleast_1d(v)
    P = dist.points()
    keep = np.linalg.norm(P - dist.n * v, axis=1) < dist.n ** (1 - nu)
    return P[keep]


def llt_errors(op: RuelleOperator, g, n: int, nu: float = 0.3, context=None,
               model: GaussianModel | None = None) -> dict:
    """Exact vs Gaussian over R_{n,nu}; returns rows and the max relative error."""
    dist = qn_distribution(op, g, n, context)
    model = model or hessian_at_zero(op, g, context=context)
    v = dist.running_mean
    rows = []
    for r in dist.points():
        qe = dist.q(r)
        qg = gaussian_llt(model, n, r, v)
        inw = bool(np.linalg.norm(r - n * v) < n ** (1 - nu))
        rows.append((tuple(int(c) for c in r), qe, qg, qe / qg - 1 if qg > 0 else math.inf, inw))
    errs = [abs(row[3]) for row in rows if row[4]]
    return {"rows": rows, "max_rel_err": max(errs), "n": n, "nu": nu}


def fourier_invert(op: RuelleOperator, g=None, n: int = 1, r=None, context=None,
                   M: int | None = None, eps: float = 0.1, delta: float = 0.3) -> dict:
    """Riemann sum of (2 pi)^-d int e^{-i(tau,r)} L_{i tau}^n g(x) dtau on an M^d grid.

    Returns the values at the requested r (all support points if r is None) and
    the absolute integrand mass of the three regions |tau| < n^(-1/2+eps),
    n^(-1/2+eps) <= |tau| < delta and |tau| >= delta.
    """
    gv = _g_vec(op, g)
    V = op.alphabet.V
    d = V.shape[1]
    diam = n * (V.max(0) - V.min(0)) + 1
    if M is None:
        M = int(2 ** math.ceil(math.log2(max(diam.max(), 2) + 1)))
    if M < diam.max():
        raise ValueError("aliasing: grid size %d below support diameter %d" % (M, diam.max()))
    axis = 2 * np.pi * (np.arange(M) - M // 2) / M
    taus = np.stack([t.ravel() for t in np.meshgrid(*([axis] * d), indexing="ij")], axis=1)
    phase = np.exp(1j * taus @ V.T)                       # (T, N)
    W = op.weights
    f = np.broadcast_to(gv, (len(taus), len(gv))).astype(complex)
    c0 = _context(op, context)
    for _ in range(n):
        f = np.einsum("cz,tz,tcz->tc", W, phase, f[:, op.succ])
    F = f[:, c0]
    if r is None:
        lo = n * V.min(0)
        grids = np.meshgrid(*[lo[k] + np.arange(diam[k]) for k in range(d)], indexing="ij")
        rs = np.stack([gr.ravel() for gr in grids], axis=1)
    else:
        rs = np.atleast_2d(np.asarray(r))
        if rs.shape[1] != d:
            rs = rs.T
    vals = (np.exp(-1j * rs @ taus.T) @ F).real / len(taus)
    tn = np.linalg.norm(taus, axis=1)
    a = np.abs(F) / len(taus)
    inner = n ** (-0.5 + eps)
    regions = {"A_eps": float(a[tn < inner].sum()),
               "A_eps_delta": float(a[(tn >= inner) & (tn < delta)].sum()),
               "A_delta": float(a[tn >= delta].sum()),
               "A_delta_sup": float(np.abs(F[tn >= delta]).max()) if np.any(tn >= delta) else 0.0}
    return {"r": [tuple(int(c) for c in x) for x in rs], "values": vals, "regions": regions, "M": M}


def tail_mass(op: RuelleOperator, g, n: int, nu: float, context=None) -> float:
    dist = qn_distribution(op, g, n, context)
    P = dist.points()
    out = np.linalg.norm(P - dist.n * dist.running_mean, axis=1) >= n ** (1 - nu)
    return float(dist.mass.ravel()[out].sum() * math.exp(dist.log_scale))


def tail_check(op: RuelleOperator, g=None, ns=range(8, 65, 8), nu: float = 0.25, context=None) -> dict:
    """Exact tails and a dominating envelope c2 exp(-c3 n^(1-2 nu))."""
    ns = list(ns)
    tails = np.array([tail_mass(op, g, n, nu, context) for n in ns])
    x = np.array([n ** (1 - 2 * nu) for n in ns])
    pos = tails > 0
    if pos.sum() >= 2:
        slope, _ = np.polyfit(x[pos], np.log(tails[pos]), 1)
        c3 = max(-slope, 0.0)
    else:
        c3 = 0.0
    c2 = float(np.max(tails * np.exp(c3 * x)))
    env = c2 * np.exp(-c3 * x)
    # tails that are exactly zero (window wider than the support) precede the decay
    start = int(np.argmax(pos)) if pos.any() else len(ns)
    return {"n": ns, "tails": tails.tolist(), "c2": c2, "c3": float(c3), "envelope": env.tolist(),
            "dominated": bool(np.all(tails <= env * (1 + 1e-12))),
            "monotone": bool(np.all(np.diff(tails[start:]) <= 1e-15)),
            "first_positive": ns[start] if start < len(ns) else None}
