"""From irreducible alphabets to Wulff boundaries, curvature and OZ prefactors."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from .decomposition import displacement, in_inflated_cone, is_irreducible
from .gibbs import CorrelationTable, XiEstimate, _window_rows
from .lattice import CouplingField, NormModel, _tvec, build_graph, dual_vector
from .local_limit import boundary_factor, log_rho_gradient, log_rho_hessian
from .random_line import Line, box_line_weight, concat, is_valid_line
from .ruelle import EMPTY, Alphabet, RuelleOperator


class PipelineError(RuntimeError):
    """Numerical failure inside the pipeline (root bracketing, degenerate data)."""


# ---------------------------------------------------------------------------
# toy models
# ---------------------------------------------------------------------------


def iid_steps_model(steps: Sequence, weights: Sequence, t=None) -> RuelleOperator:
    """i.i.d. letters with weights w(z) e^{(t, V(z))}."""
    alph = Alphabet.simple(np.asarray(steps))
    w = np.asarray(weights, float)
    if t is not None:
        w = w * np.exp(alph.V @ _tvec(t))
    return RuelleOperator.iid(alph, w)


def diagonal_walk_model(w: float = 0.4) -> tuple:
    """Directed walk with steps e1, e2 of weight w, tilted to the diagonal point of dK.

    Returns (operator, t).  Here G(n, n) = C(2n, n) w^(2n).
    """
    t1 = -math.log(2 * w)
    t = np.array([t1, t1])
    return iid_steps_model([(1, 0), (0, 1)], [w, w], t), t


def killed_walk_model(w: float, direction) -> tuple:
    """Four-step killed walk tilted by the dual vector of `direction`."""
    t = dual_vector(NormModel.killed_walk(w), direction).t
    steps = [(1, 0), (0, 1), (-1, 0), (0, -1)]
    return iid_steps_model(steps, [w] * 4, t), np.asarray(t)


# ---------------------------------------------------------------------------
# Ising alphabet
# ---------------------------------------------------------------------------


@dataclass
class IrreducibleAlphabet:
    paths: list                     # Lines starting at 0
    V: np.ndarray
    q: np.ndarray                   # plane weights q_beta(gamma)
    t: np.ndarray
    beta: float
    K: float
    delta: float
    E: float
    depth: int = 0
    operator: RuelleOperator | None = None
    conditional: dict = field(default_factory=dict)
    c2: float = 1.0
    weight_error: float = 0.0
    holder: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.paths)


def enumerate_irreducible(t, K: float, delta: float, norm: NormModel, E: float,
                          max_edges: int = 10, limit: int = 5000) -> list:
    """Irreducible n.n. paths from 0 in Z^2 with xi-extent <= E."""
    tv = _tvec(t)
    out = []
    box = int(math.ceil(E / min(norm.many(np.eye(2))))) + 1
    graph = build_graph(CouplingField.nearest_neighbour(2), [(-box, box), (-box, box)])
    steps = [(1, 0), (-1, 0), (0, 1), (0, -1)]

    def rec(verts, used):
        if len(out) > limit:
            raise PipelineError("enumeration overflow: more than %d irreducible paths" % limit)
        if len(verts) > 1:
            ln = Line(tuple(verts))
            h = np.asarray(verts, float) @ tv
            if np.all(h[-1] > h[:-1]) and is_valid_line(graph, ln) and is_irreducible(ln, t, K, delta, norm):
                out.append(ln)
        if len(verts) - 1 >= max_edges:
            return
        x = verts[-1]
        for s in steps:
            y = (x[0] + s[0], x[1] + s[1])
            e = (x, y) if x < y else (y, x)
            if e in used:
                continue
            v = np.asarray(y, float)
            if float(v @ tv) <= 0 or norm(v) > E:
                continue
            if not in_inflated_cone(v, t, K, delta, norm):
                continue
            used.add(e)
            verts.append(y)
            rec(verts, used)
            verts.pop()
            used.discard(e)

    rec([(0, 0)], set())
    out.sort(key=lambda ln: (len(ln), ln.vertices))
    return out


def build_alphabet(beta: float, t=None, K: float = 1.0, delta: float = 0.25, E: float = 3.0,
                   depth: int = 1, margin: int = 3, J: float = 1.0, max_edges: int = 8,
                   theta: float = 0.5, c2_samples: int = 0, seed: int = 0) -> IrreducibleAlphabet:
    """Irreducible alphabet of the n.n. plane Ising model with depth-m conditional potentials.

    psi(z, x_1..x_m) = log q(gamma_z + gamma_x1 + ... | gamma_x1 + ...) + (t, V(z)),
    with q taken in a box of the given margin around the concatenation.  EMPTY in
    the context truncates the conditioning.  With c2_samples > 0 the sandwich
    constant is also estimated on that many random letter pairs (useful at depth 0).
    """
    norm = NormModel.ising2d(beta, J)
    if t is None:
        t = dual_vector(norm, (1.0, 0.0))
    tv = _tvec(t)
    paths = enumerate_irreducible(t, K, delta, norm, E, max_edges=max_edges)
    if not paths:
        raise PipelineError("empty alphabet")
    N = len(paths)
    V = np.array([displacement(p) for p in paths])
    cache: dict = {}

    def q(ln: Line) -> float:
        key = ln.vertices
        if key not in cache:
            cache[key] = box_line_weight(ln, beta, margin, J) if not ln.is_trivial else 1.0
        return cache[key]

    def chain(idx: Sequence[int]) -> Line | None:
        pieces, cur = [], (0, 0)
        for i in idx:
            p = paths[i].translate(cur)
            pieces.append(p)
            cur = p.end
        ln = concat(*pieces)
        return ln

    qs = np.array([q(p) for p in paths])
    graph_cache: dict = {}

    def valid(ln: Line) -> bool:
        pts = np.array(ln.vertices)
        lo, hi = pts.min(0) - 1, pts.max(0) + 1
        key = (tuple(lo), tuple(hi))
        if key not in graph_cache:
            graph_cache[key] = build_graph(CouplingField.nearest_neighbour(2, J),
                                           [(int(lo[0]), int(hi[0])), (int(lo[1]), int(hi[1]))])
        return is_valid_line(graph_cache[key], ln)

    cond: dict = {}

    def psi(z: int, ctx: tuple) -> float:
        k = ctx.index(EMPTY) if EMPTY in ctx else len(ctx)
        rest = list(ctx[:k])
        key = (z,) + tuple(rest)
        if key not in cond:
            if not rest:
                cond[key] = qs[z]
            else:
                tail = chain(rest)
                full = chain([z] + rest)
                cond[key] = q(full) / q(tail) if valid(full) else 0.0
        w = cond[key]
        return math.log(w) + float(tv @ V[z]) if w > 0 else -np.inf

    alph = Alphabet(tuple("g%d" % i for i in range(N)), V)
    with np.errstate(divide="ignore"):
        op = RuelleOperator.from_function(alph, depth, psi, theta=theta)
    if c2_samples:
        rng = np.random.default_rng(seed)
        for z, x in rng.integers(0, N, size=(c2_samples, 2)):
            psi(int(z), (int(x),))
    ratios = [cond[k] / qs[k[0]] for k in cond if len(k) > 1 and cond[k] > 0]
    c2 = max([max(r, 1 / r) for r in ratios], default=1.0)
    err = max(abs(box_line_weight(p, beta, margin + 1, J) - qs[i]) for i, p in enumerate(paths[:4]))
    return IrreducibleAlphabet(paths, V, qs, tv, beta, K, delta, E, depth, op, cond, c2, err)


def holder_profile(alph: IrreducibleAlphabet, depths: Sequence[int] = (0, 1)) -> dict:
    """max |psi_m - psi_{m+1}| over shared entries, and a fitted C theta^m."""
    diffs = []
    for m in depths:
        worst = 0.0
        for key, w in alph.conditional.items():
            if len(key) == m + 2 and w > 0:
                shorter = alph.conditional.get(key[:-1])
                if shorter:
                    worst = max(worst, abs(math.log(w) - math.log(shorter)))
        diffs.append(worst)
    out = {"depths": list(depths), "diffs": diffs}
    pos = [(m, d) for m, d in zip(depths, diffs) if d > 0]
    if len(pos) >= 2:
        slope, icpt = np.polyfit([m for m, _ in pos], np.log([d for _, d in pos]), 1)
        out.update(theta=float(math.exp(slope)), C=float(math.exp(icpt)))
    return out


# ---------------------------------------------------------------------------
# Wulff boundary and curvature
# ---------------------------------------------------------------------------


@dataclass
class WulffBoundary:
    base: np.ndarray
    params: np.ndarray              # tangential offsets (local) or angles (polar)
    samples: np.ndarray             # s-vectors (local) or boundary points (polar)
    residuals: np.ndarray
    mode: str = "local"
    frame: tuple = ()
    kappa: np.ndarray | None = None
    kappa_min: float | None = None
    radius_min: float | None = None


def _root(f: Callable[[float], float], step: float = 0.1, grow: int = 60,
          start: float = 0.0) -> float:
    """Single sign change of f on [start, inf) or (-inf, start]: bracket by doubling, then Brent."""
    raw = f

    def f(x):
        try:
            with np.errstate(over="raise", divide="raise", invalid="raise"):
                v = raw(x)
        except (ArithmeticError, ValueError, FloatingPointError, np.linalg.LinAlgError):
            return math.nan
        return v

    f0 = f(start)
    if f0 == 0:
        return start
    for sgn in (1.0, -1.0):
        a, fa = start, f0
        h = step
        for _ in range(grow):
            b = start + sgn * h
            fb = f(b)
            if not math.isfinite(fb):
                break
            if fa * fb <= 0:
                lo, hi = (a, b) if a < b else (b, a)
                return float(brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))
            a, fa = b, fb
            h *= 2
    raise PipelineError("bracket failure")


def _log_rho_fn(op: RuelleOperator) -> Callable[[np.ndarray], float]:
    return lambda s: math.log(op.tilted(s).spectral_radius())


def wulff_boundary(op: RuelleOperator | None = None, s_grid: Sequence[float] = (), t=None,
                   F: Callable | None = None, tol: float = 1e-8, rebase: bool = False) -> WulffBoundary:
    """Trace {s : rho(s) = 1} near s = 0 (or the zero set of F).

    Points are s = s0 + a n_perp + b n with n the outward normal (gradient of
    log rho) and b solved for each tangential offset a in s_grid.  s0 = 0 unless
    rebase is set, in which case a truncated alphabet with rho(0) != 1 is first
    moved along the gradient onto its own boundary.
    """
    F = F or _log_rho_fn(op)
    e = 1e-5

    def grad_at(p):
        return np.array([(F(p + e * u) - F(p - e * u)) / (2 * e) for u in np.eye(2)])

    s0 = np.zeros(2)
    d0 = F(s0)
    if abs(d0) > 1e-8:
        if not rebase:
            raise PipelineError("base point is not on the boundary: F(0) = %.3e" % d0)
        g0 = grad_at(s0)
        u0 = g0 / np.linalg.norm(g0)
        s0 = _root(lambda b: F(b * u0), step=0.05) * u0
    grad = grad_at(s0)
    if np.linalg.norm(grad) == 0:
        raise PipelineError("zero gradient at the base point")
    n = grad / np.linalg.norm(grad)
    tau = np.array([-n[1], n[0]])
    a = np.asarray(s_grid, float)
    pts, res = [], []
    for ai in a:
        b = _root(lambda b: F(s0 + ai * tau + b * n), step=max(0.05, abs(ai)))
        s = s0 + ai * tau + b * n
        pts.append(s)
        res.append(abs(math.expm1(F(s))) if op is not None else abs(F(s)))
    res = np.array(res)
    if len(res) and np.max(res) > tol:
        raise PipelineError("root residual %.3e above tolerance" % np.max(res))
    base = np.zeros(2) if t is None else _tvec(t)
    return WulffBoundary(base + s0, a, np.array(pts), res, "local", (tau, n, s0))


def wulff_polar(F: Callable[[np.ndarray], float], angles: Sequence[float], center=(0.0, 0.0),
                tol: float = 1e-8) -> WulffBoundary:
    """Closed boundary {F = 0} around an interior center, traced along rays."""
    c = np.asarray(center, float)
    if F(c) >= 0:
        raise PipelineError("center is not interior")
    ang = np.asarray(angles, float)
    pts, res, rads = [], [], []
    for th in ang:
        u = np.array([math.cos(th), math.sin(th)])
        r = _root(lambda r: F(c + r * u), step=0.1, start=0.0)
        if r < 0:
            raise PipelineError("bracket failure")
        pts.append(c + r * u)
        rads.append(r)
        res.append(abs(F(c + r * u)))
    res = np.array(res)
    if np.max(res) > tol:
        raise PipelineError("root residual %.3e above tolerance" % np.max(res))
    return WulffBoundary(c, ang, np.array(pts), res, "polar", (np.array(rads),))


def _d1_d2(y: np.ndarray, h: float) -> tuple:
    """Five-point first and second derivatives at interior nodes (2 .. n-3)."""
    d1 = (-y[4:] + 8 * y[3:-1] - 8 * y[1:-3] + y[:-4]) / (12 * h)
    d2 = (-y[4:] + 16 * y[3:-1] - 30 * y[2:-2] + 16 * y[1:-3] - y[:-4]) / (12 * h ** 2)
    return d1, d2


def curvature(boundary: WulffBoundary) -> WulffBoundary:
    """Curvature from second differences of the boundary parameterisation.

    Local mode differentiates the graph b(a); polar mode differentiates r(angle)
    (periodically when the angles cover a full turn).
    """
    p = boundary.params
    if len(p) < 5:
        raise ValueError("curvature needs at least 5 consecutive samples")
    h = np.diff(p)
    if not np.allclose(h, h[0], rtol=1e-9):
        raise ValueError("curvature needs a uniform parameter grid")
    h = float(h[0])
    if boundary.mode == "local":
        tau, n, s0 = boundary.frame
        b = (boundary.samples - s0) @ n
        d1, d2 = _d1_d2(b, h)
        kappa = np.abs(d2) / (1 + d1 ** 2) ** 1.5
        kappa = np.concatenate([[np.nan, np.nan], kappa, [np.nan, np.nan]])
    else:
        r = boundary.frame[0]
        full = abs(p[-1] + h - p[0] - 2 * math.pi) < 1e-9
        if full:
            rp = np.concatenate([r[-2:], r, r[:2]])
            d1, d2 = _d1_d2(rp, h)
            rr = r
        else:
            d1, d2 = _d1_d2(r, h)
            rr = r[2:-2]
        kappa = np.abs(rr ** 2 + 2 * d1 ** 2 - rr * d2) / (rr ** 2 + d1 ** 2) ** 1.5
        if not full:
            kappa = np.concatenate([[np.nan, np.nan], kappa, [np.nan, np.nan]])
    finite = kappa[np.isfinite(kappa)]
    if finite.size == 0:
        raise ValueError("curvature needs at least 5 consecutive samples")
    kmin = float(finite.min())
    if kmin <= 0:
        raise PipelineError("boundary not strictly convex (kappa_min = %.3e)" % kmin)
    boundary.kappa = kappa
    boundary.kappa_min = kmin
    boundary.radius_min = float(1.0 / finite.max())
    return boundary


def boundary_convex(boundary: WulffBoundary) -> bool:
    """Cross products of consecutive chords all share one sign."""
    P = boundary.samples
    d = np.diff(P, axis=0)
    cr = d[:-1, 0] * d[1:, 1] - d[:-1, 1] * d[1:, 0]
    return bool(np.all(cr > 0) or np.all(cr < 0))


def ising_wulff_function(beta: float, J: float = 1.0) -> Callable[[np.ndarray], float]:
    """F(t) = cosh t1 + cosh t2 - cosh(2bJ) coth(2bJ); dK_beta = {F = 0}."""
    c = math.cosh(2 * beta * J) / math.tanh(2 * beta * J)
    return lambda s: math.cosh(s[0]) + math.cosh(s[1]) - c


# ---------------------------------------------------------------------------
# duality, prefactor, fits
# ---------------------------------------------------------------------------


def duality_direction(op: RuelleOperator, h: float = 1e-4) -> np.ndarray:
    g = log_rho_gradient(op, h)
    nrm = np.linalg.norm(g)
    if nrm == 0:
        raise PipelineError("zero gradient of log rho")
    return g / nrm


def _adjugate(A: np.ndarray) -> np.ndarray:
    d = A.shape[0]
    if d == 1:
        return np.ones((1, 1))
    adj = np.zeros_like(A)
    for i in range(d):
        for j in range(d):
            minor = np.delete(np.delete(A, i, 0), j, 1)
            adj[j, i] = (-1) ** (i + j) * np.linalg.det(minor)
    return adj


def oz_prefactor(op: RuelleOperator, mu_eta: Iterable = ((1.0, 1.0),), chi: float | None = None,
                 g=None, fd_step: float = 1e-4) -> dict:
    """Phi = sum_{(mu, eta)} phi w_mu w_eta, phi = chi |v|^((d-1)/2) / sqrt((2 pi)^(d-1) v.adj(A).v).

    v = grad log rho(0) and A = Hess log rho(0).  The adjugate form equals
    (A^-1 v, v) det A and stays finite for directed models with singular A.
    Entries of mu_eta are (w_mu, w_eta) or (w_mu, w_eta, chi).
    """
    d = op.alphabet.d
    v = log_rho_gradient(op, fd_step)
    A = log_rho_hessian(op, fd_step)
    quad = float(v @ _adjugate(A) @ v)
    if quad <= 0:
        raise PipelineError("degenerate prefactor: v.adj(A).v = %.3e" % quad)
    base = np.linalg.norm(v) ** ((d - 1) / 2) / math.sqrt((2 * math.pi) ** (d - 1) * quad)
    if chi is None:
        chi = boundary_factor(op, g)
    total = 0.0
    for entry in mu_eta:
        wm, we = entry[0], entry[1]
        c = entry[2] if len(entry) > 2 else chi
        total += c * base * wm * we
    return {"phi": total, "base": base, "chi": chi, "grad": v, "A": A, "quad": quad}


@dataclass
class OZFit:
    direction: np.ndarray
    xi: float
    p_hat: float
    phi_hat: float
    window: tuple
    residual: float
    p_err: float = float("nan")
    xi_err: float = float("nan")
    n_points: int = 0


def _series(table: CorrelationTable, direction, window) -> tuple:
    n = np.array([1.0, 0.0]) if direction is None else np.asarray(direction, float)
    return _window_rows(table, n / np.linalg.norm(n), window)


def oz_fit(table: CorrelationTable, xi, d: int = 2, direction=None, window=(0, np.inf),
           joint: bool = False) -> OZFit:
    """Fit log g + xi |x| = -p log |x| + log Phi (or all three parameters when joint)."""
    r, g, err = _series(table, direction, window)
    if len(r) < 6:
        raise ValueError("insufficient points: need at least 6, got %d" % len(r))
    xi_val = xi.rate if isinstance(xi, XiEstimate) else float(xi)
    y = np.log(g)
    with np.errstate(divide="ignore", invalid="ignore"):
        sig = np.where((err > 0) & np.isfinite(err), err / g, 1.0)
    w = 1 / sig
    if joint:
        X = np.stack([np.ones_like(r), -np.log(r), -r], axis=1)
        coef, *_ = np.linalg.lstsq(X * w[:, None], y * w, rcond=None)
        fit = X @ coef
        cov = _lsq_cov(X, w, y - fit, err)
        logphi, p, xi_hat = coef
        return OZFit(_dir(direction), float(xi_hat), float(p), float(math.exp(logphi)),
                     (float(r.min()), float(r.max())), float(np.sqrt(np.mean((y - fit) ** 2))),
                     float(np.sqrt(cov[1, 1])), float(np.sqrt(cov[2, 2])), len(r))
    yy = y + xi_val * r
    X = np.stack([np.ones_like(r), -np.log(r)], axis=1)
    coef, *_ = np.linalg.lstsq(X * w[:, None], yy * w, rcond=None)
    fit = X @ coef
    cov = _lsq_cov(X, w, yy - fit, err)
    return OZFit(_dir(direction), xi_val, float(coef[1]), float(math.exp(coef[0])),
                 (float(r.min()), float(r.max())), float(np.sqrt(np.mean((yy - fit) ** 2))),
                 float(np.sqrt(cov[1, 1])), float("nan"), len(r))


def _lsq_cov(X: np.ndarray, w: np.ndarray, resid: np.ndarray, err: np.ndarray) -> np.ndarray:
    Xw = X * w[:, None]
    M = np.linalg.pinv(Xw.T @ Xw)
    if np.all(err > 0):
        return M
    dof = max(len(resid) - X.shape[1], 1)
    return M * float(np.sum((resid * w) ** 2) / dof)


def _dir(direction) -> np.ndarray:
    if direction is None:
        return np.array([1.0, 0.0])
    v = np.asarray(direction, float)
    return v / np.linalg.norm(v)


def strict_triangle_check(norm: NormModel, kappa_bar: float, pairs=None, n_angles: int = 10,
                          lengths=(0.5, 1.0, 2.0, 3.5), seed: int = 0) -> dict:
    """Slack of xi(u) + xi(v) - xi(u+v) - kappa_bar (|u| + |v| - |u+v|) on a pair grid."""
    if pairs is None:
        ang = 2 * np.pi * np.arange(n_angles) / n_angles + 0.1
        vecs = [L * np.array([math.cos(a), math.sin(a)]) for a in ang for L in lengths]
        pairs = [(u, v) for u in vecs for v in vecs]
        rng = np.random.default_rng(seed)
        pairs = [pairs[i] for i in rng.permutation(len(pairs))[:1000]]
    U = np.array([p[0] for p in pairs], float)
    Vv = np.array([p[1] for p in pairs], float)
    lhs = norm.many(U) + norm.many(Vv) - norm.many(U + Vv)
    eu = np.linalg.norm(U, axis=1) + np.linalg.norm(Vv, axis=1) - np.linalg.norm(U + Vv, axis=1)
    slack = lhs - kappa_bar * eu
    k = int(np.argmin(slack))
    return {"min_slack": float(slack[k]), "n_pairs": len(pairs), "worst": (U[k].tolist(), Vv[k].tolist()),
            "ok": bool(slack[k] >= -1e-6)}


def renewal_sum(op: RuelleOperator, x, nmax: int) -> float:
    """sum_{n <= nmax} Q_n(x) from the exact dynamic program."""
    from .local_limit import qn_distribution
    return float(sum(qn_distribution(op, None, n).q(x) for n in range(1, nmax + 1)))
