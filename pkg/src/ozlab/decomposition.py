"""Break points, correct break points and the irreducible splitting of lines.

A line from 0 to x is cut at its (t, K, delta)-correct break points
y_1, ..., y_{m+1} into mu, gamma_1, ..., gamma_m, eta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .gibbs import exact_two_point
from .lattice import NormModel, _tvec, in_forward_cone
from .random_line import Line, concat, enumerate_lines, line_weight, representation_sum

N_BALL_SAMPLES = 64
CONE_TOL = 1e-12


@dataclass(frozen=True)
class BreakPoint:
    index: int
    vertex: tuple
    correct: bool = False


@dataclass(frozen=True)
class IrreducibleDecomposition:
    mu: Line
    gammas: tuple
    eta: Line
    breaks: tuple            # y_1, ..., y_{m+1}
    degenerate: bool = False

    @property
    def m(self) -> int:
        return len(self.gammas)

    def reconstruct(self) -> Line:
        return concat(self.mu, *self.gammas, self.eta)


def displacement(line: Line) -> tuple:
    return tuple(int(b - a) for a, b in zip(line.start, line.end))


def _heights(line: Line, t) -> np.ndarray:
    return np.asarray(line.vertices, float) @ _tvec(t)


def find_break_points(line: Line, t) -> list:
    """Interior indices l visited once with max_{k<l} h_k < h_l < min_{k>l} h_k."""
    h = _heights(line, t)
    n = len(h) - 1
    if n < 2:
        return []
    pre = np.maximum.accumulate(h)
    suf = np.minimum.accumulate(h[::-1])[::-1]
    counts: dict = {}
    for v in line.vertices:
        counts[v] = counts.get(v, 0) + 1
    return [l for l in range(1, n)
            if counts[line.vertices[l]] == 1 and pre[l - 1] < h[l] < suf[l + 1]]


def _cone_gap(w: np.ndarray, t: np.ndarray, delta: float, norm: NormModel) -> float:
    """(1-delta) xi(w) - (t, w): negative exactly on Y_delta(t)."""
    return (1 - delta) * norm(w) - float(t @ w)


def in_inflated_cone(v, t, K: float, delta: float, norm: NormModel) -> bool:
    """Is v in 2K U + (Y_delta(t) with the apex included)?

    The apex (u = v) makes the 2K ball itself part of the set.  Otherwise the
    convex gap (1-delta) xi(v-u) - (t, v-u) is minimised over u on the ball
    boundary: 64 samples, then a bounded refinement around the best one (d=2).
    """
    v = np.asarray(v, float)
    tv = _tvec(t)
    if norm(v) <= 2 * K * (1 + CONE_TOL):
        return True
    if _cone_gap(v, tv, delta, norm) < 0:
        return True
    d = len(v)
    if d == 1:
        cands = [np.array([2 * K / norm(np.array([1.0]))]), np.array([-2 * K / norm(np.array([-1.0]))])]
        return any(_cone_gap(v - u, tv, delta, norm) < 0 for u in cands)
    if d != 2:
        raise NotImplementedError("inflated cone implemented for d <= 2")
    ang = 2 * np.pi * np.arange(N_BALL_SAMPLES) / N_BALL_SAMPLES
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    us = 2 * K * dirs / norm.many(dirs)[:, None]
    ws = v[None, :] - us
    gaps = (1 - delta) * norm.many(ws) - ws @ tv
    k = int(np.argmin(gaps))
    if gaps[k] < 0:
        return True

    def f(a):
        e = np.array([math.cos(a), math.sin(a)])
        u = 2 * K * e / norm(e)
        return _cone_gap(v - u, tv, delta, norm)

    h = 2 * np.pi / N_BALL_SAMPLES
    res = minimize_scalar(f, bounds=(ang[k] - h, ang[k] + h), method="bounded",
                          options={"xatol": 1e-10})
    return bool(res.fun < 0)


def is_correct_break(line: Line, l: int, t, K: float, delta: float, norm: NormModel) -> bool:
    base = np.asarray(line.vertices[l], float)
    return all(in_inflated_cone(np.asarray(v, float) - base, t, K, delta, norm)
               for v in line.vertices[l + 1:])


def correct_break_points(line: Line, t, K: float, delta: float, norm: NormModel) -> list:
    return [BreakPoint(l, line.vertices[l], True) for l in find_break_points(line, t)
            if is_correct_break(line, l, t, K, delta, norm)]


def irreducible_decompose(line: Line, t, K: float, delta: float, norm: NormModel) -> IrreducibleDecomposition:
    """Cut at every correct break point, scanning from the start."""
    cb = [b.index for b in correct_break_points(line, t, K, delta, norm)]
    V = line.vertices
    if not cb:
        return IrreducibleDecomposition(line, (), Line((V[-1],)), (), True)
    mu = Line(V[:cb[0] + 1])
    gammas = tuple(Line(V[a:b + 1]) for a, b in zip(cb[:-1], cb[1:]))
    eta = Line(V[cb[-1]:])
    return IrreducibleDecomposition(mu, gammas, eta, tuple(V[l] for l in cb), False)


def is_irreducible(gamma: Line, t, K: float, delta: float, norm: NormModel,
                   tail: Line | None = None) -> bool:
    """Membership in the irreducible set S of renewal letters.

    The no-correct-break condition looks at gamma alone unless the ambient continuation ``tail``
    (starting at gamma's end) is supplied, in which case correctness of the
    break points is judged against gamma followed by the tail.
    """
    if gamma.is_trivial:
        return False
    g = gamma.translate(tuple(-c for c in gamma.start))
    h = _heights(g, t)
    if not np.all((h[1:-1] > h[0]) & (h[1:-1] < h[-1])) or not h[-1] > h[0]:
        return False
    if not all(in_inflated_cone(v, t, K, delta, norm) for v in g.vertices[1:]):
        return False
    full = g if tail is None else concat(g, tail.translate(tuple(-c for c in gamma.start)))
    n = len(g)
    for l in find_break_points(full, t):
        if 0 < l < n and is_correct_break(full, l, t, K, delta, norm):
            return False
    return True


def eta_ok(eta: Line, t, K: float, delta: float, norm: NormModel) -> bool:
    """Admissible tail: eta inside the inflated cone of its start and free of correct breaks."""
    if eta.is_trivial:
        return True
    base = np.asarray(eta.start, float)
    if not all(in_inflated_cone(np.asarray(v, float) - base, t, K, delta, norm) for v in eta.vertices[1:]):
        return False
    return not correct_break_points(eta, t, K, delta, norm)


def mu_ok(mu: Line, t, K: float, delta: float, norm: NormModel, tail: Line | None = None) -> bool:
    """Admissible head: no correct break point inside mu (judged with the ambient tail if given)."""
    full = mu if tail is None else concat(mu, tail)
    n = len(mu)
    return not any(0 < b.index < n for b in correct_break_points(full, t, K, delta, norm))


@dataclass
class RepresentationCheck:
    lhs: float
    rhs: float
    defect: float
    degenerate_mass: float
    groups: dict
    piece_counts: dict


def verify_irreducible_representation(graph, x, beta: float, t, K: float, delta: float,
                                      norm: NormModel, origin=None) -> RepresentationCheck:
    """Regroup all lines origin -> x by their irreducible decomposition."""
    x = tuple(x)
    origin = tuple(origin) if origin is not None else tuple(0 for _ in x)
    disp = np.subtract(x, origin)
    if not in_forward_cone(t, delta / 2, disp, norm):
        raise ValueError("endpoint outside the forward cone of t")
    if len(graph.vertices) <= 24:
        lhs = exact_two_point(graph, beta).g(origin, x)
    else:
        lhs = representation_sum(graph, origin, x, beta)
    groups: dict = {}
    counts: dict = {}
    degenerate = 0.0
    for ln, _ in enumerate_lines(graph, origin, x, beta).values():
        q = line_weight(graph, ln, beta, validate=False).q
        dec = irreducible_decompose(ln, t, K, delta, norm)
        if dec.degenerate:
            degenerate += q
            continue
        key = (dec.mu.vertices, tuple(g.vertices for g in dec.gammas), dec.eta.vertices)
        groups[key] = groups.get(key, 0.0) + q
        for g in dec.gammas:
            v = displacement(g)
            counts[v] = counts.get(v, 0) + 1
    rhs = float(sum(groups.values()))
    defect = abs(lhs - rhs - degenerate)
    return RepresentationCheck(lhs, rhs, defect, degenerate, groups, counts)
