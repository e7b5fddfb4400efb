"""K-skeletons of lines and the surcharge bookkeeping on them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import NormModel, _tvec, in_forward_cone, surcharge
from .random_line import Line, enumerate_lines, line_weight

TOL = 1e-9


@dataclass(frozen=True)
class Skeleton:
    points: tuple
    K: float
    parent: Line | None = None

    @property
    def N(self) -> int:
        return len(self.points) - 1

    def increments(self) -> np.ndarray:
        p = np.asarray(self.points, float)
        return np.diff(p, axis=0)


@dataclass
class SkeletonClassification:
    n_back: int
    forward: list
    cone: list
    marked_intervals: list
    n_mark: int
    marked: list = field(default_factory=list)


def build_skeleton(line: Line, K: float, norm: NormModel) -> Skeleton:
    """Coarse-grain a line by successive exits from K-balls of the norm."""
    if K <= 0:
        raise ValueError("K must be positive")
    if line.is_trivial:
        raise ValueError("line must be non-trivial")
    t = np.asarray(line.vertices, float)
    n = len(t) - 1
    pts = [line.vertices[0]]
    x = t[0]
    j = 0
    while True:
        dist = norm.many(t[j + 1:] - x)
        outside = np.flatnonzero(dist > K)
        if len(outside) == 0:
            if pts[-1] != line.vertices[n] or len(pts) == 1:
                pts.append(line.vertices[n])
            break
        j = j + 1 + int(outside[0])
        pts.append(line.vertices[j])
        x = t[j]
        if j == n:
            break
    return Skeleton(tuple(pts), K, line)


def skeleton_weight(graph, skeleton: Skeleton, beta: float, norm: NormModel | None = None) -> float:
    """Sum of q over all lines of the graph with this skeleton."""
    x, y = skeleton.points[0], skeleton.points[-1]
    norm = norm or NormModel.euclidean(len(x))
    total = 0.0
    for ln, _ in enumerate_lines(graph, x, y, beta).values():
        if build_skeleton(ln, skeleton.K, norm).points == skeleton.points:
            total += line_weight(graph, ln, beta, validate=False).q
    return total


def grouped_skeleton_weights(graph, x, y, beta: float, K: float, norm: NormModel) -> dict:
    """Map skeleton points -> summed q of the lines it coarse-grains."""
    out: dict = {}
    for ln, _ in enumerate_lines(graph, x, y, beta).values():
        pts = build_skeleton(ln, K, norm).points
        out[pts] = out.get(pts, 0.0) + line_weight(graph, ln, beta, validate=False).q
    return out


def skeleton_surcharge(skeleton: Skeleton, t, norm: NormModel) -> float:
    return float(sum(surcharge(t, inc, norm) for inc in skeleton.increments()))


def classify(skeleton: Skeleton, t, delta: float, norm: NormModel) -> SkeletonClassification:
    if not 0 < delta < 0.5:
        raise ValueError("delta must lie in (0, 1/2)")
    P = np.asarray(skeleton.points, float)
    N = len(P) - 1
    fwd = [in_forward_cone(t, delta, P[l + 1] - P[l], norm) if np.any(P[l + 1] != P[l]) else False
           for l in range(N)]
    n_back = sum(1 for f in fwd if not f)

    def in_cone(a, b):
        d = P[b] - P[a]
        return np.any(d) and in_forward_cone(t, delta, d, norm)

    cone = [all(in_cone(l, j) for j in range(l + 1, N + 1)) for l in range(N + 1)]
    intervals = []
    start = 0
    while True:
        cand = [j for j in range(start, N + 1) if not cone[j]]
        if not cand:
            break
        l = cand[0]
        r = next(j for j in range(l + 1, N + 1) if not in_cone(l, j))
        intervals.append((l, r))
        start = r
    marked = [False] * (N + 1)
    for l, r in intervals:
        for i in range(l, r):
            marked[i] = True
    n_mark = sum(r - l for l, r in intervals)
    return SkeletonClassification(n_back, fwd, cone, intervals, n_mark, marked)


@dataclass
class SurchargeReport:
    surcharge: float
    n_back: int
    n_mark: int
    back_bound: float
    mark_bound: float
    back_ok: bool
    mark_ok: bool
    weight: float | None = None
    weight_bound: float | None = None
    weight_ok: bool | None = None

    @property
    def ok(self) -> bool:
        return self.back_ok and self.mark_ok and self.weight_ok is not False


def surcharge_checks(skeleton: Skeleton, t, delta: float, K: float, norm: NormModel,
                     R: float = 1.0, weight: float | None = None) -> SurchargeReport:
    """Check s_t >= delta K (n_back - 1), s_t >= delta K n_mark / 7 and the weight bound."""
    if K < 8 * R:
        raise ValueError("scale below range guard")
    cl = classify(skeleton, t, delta, norm)
    s = skeleton_surcharge(skeleton, t, norm)
    bb = delta * K * (cl.n_back - 1)
    mb = delta * K * cl.n_mark / 7.0
    rep = SurchargeReport(s, cl.n_back, cl.n_mark, bb, mb, s >= bb - TOL, s >= mb - TOL)
    if weight is not None:
        disp = np.subtract(skeleton.points[-1], skeleton.points[0])
        wb = math.exp(-float(_tvec(t) @ disp) - s)
        rep.weight, rep.weight_bound, rep.weight_ok = weight, wb, weight <= wb * (1 + TOL)
    return rep


def product_bound(table_g, skeleton: Skeleton) -> float:
    """prod_l g(x_{l-1}, x_l) for a callable g(x, y)."""
    p = skeleton.points
    return float(np.prod([table_g(p[l - 1], p[l]) for l in range(1, len(p))]))


def random_admissible_skeleton(rng: np.random.Generator, N: int, K: float, norm: NormModel,
                               t, back_rate: float = 0.3, d: int = 2) -> Skeleton:
    """Lattice skeleton whose increments have norm in [K, 2K).

    With probability back_rate an increment direction is uniform on the circle,
    otherwise it is drawn near the dual direction of t.
    """
    tv = _tvec(t)
    base = math.atan2(tv[1], tv[0])
    pts = [tuple([0] * d)]
    cur = np.zeros(d)
    while len(pts) < N + 1:
        if rng.random() < back_rate:
            ang = rng.uniform(0, 2 * math.pi)
        else:
            ang = base + rng.normal(0, 0.25)
        u = np.array([math.cos(ang), math.sin(ang)])
        target = rng.uniform(K, 2 * K)
        inc = np.rint(u * target / norm.xi(u))
        if not np.any(inc):
            continue
        if not K <= norm(inc) < 2 * K:
            continue
        cur = cur + inc
        pts.append(tuple(int(c) for c in cur))
    return Skeleton(tuple(pts), K)


def slab_classify(skeleton: Skeleton, t, K: float, delta: float = 0.25,
                  norm: NormModel | None = None) -> dict:
    """Label slabs {l*8K <= (t,u) < (l+1)*8K} as clean, dirty or untouched.

    A slab is dirty when it holds a marked skeleton point.  For clean slabs strictly
    between the first and last touched slab the sub-skeleton length j - i is
    checked against the bracket 3 <= j - i <= 8/(1-delta).
    """
    norm = norm or NormModel.euclidean(len(skeleton.points[0]))
    cl = classify(skeleton, t, delta, norm)
    tv = _tvec(t)
    heights = np.asarray(skeleton.points, float) @ tv
    idx = np.floor(heights / (8 * K)).astype(int)
    lo, hi = int(idx.min()), int(idx.max())
    out = {}
    for l in range(lo, hi + 1):
        members = np.flatnonzero(idx == l)
        if len(members) == 0:
            out[l] = {"label": "untouched"}
            continue
        dirty = any(cl.marked[i] for i in members)
        entry = {"label": "dirty" if dirty else "clean"}
        if not dirty:
            i = int(members.min())
            j = i
            while j + 1 < len(idx) and idx[j + 1] == l:
                j += 1
            entry.update(i=i, j=j)
            if lo < l < hi:
                entry["bracket_ok"] = 3 <= j - i <= 8 / (1 - delta) + TOL
        out[l] = entry
    return out
