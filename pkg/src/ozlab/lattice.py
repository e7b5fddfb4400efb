"""Lattice graphs with finite-range couplings and the convex geometry of the decay-rate norm.

The norm xi (inverse correlation length per unit length) is the support function
of a compact convex set K; its unit ball U is the polar of K.  Dual vectors t lie
on the boundary of K and satisfy (t, x) <= xi(x) with equality in one direction.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import linprog

Vertex = tuple
Edge = tuple

TOL = 1e-9


def make_edge(u: Vertex, v: Vertex) -> Edge:
    """Canonical unordered edge (smaller endpoint first)."""
    return (u, v) if u < v else (v, u)


# ---------------------------------------------------------------------------
# couplings and graphs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CouplingField:
    """Translation-invariant couplings J(x) >= 0 on Z^d.

    Entries are symmetrised on construction, so listing one of x, -x is enough.
    """

    entries: dict
    dimension: int

    def __post_init__(self):
        sym: dict = {}
        for off, J in dict(self.entries).items():
            off = tuple(int(c) for c in off)
            if len(off) != self.dimension:
                raise ValueError(f"offset {off} has wrong dimension")
            if not any(off):
                raise ValueError("J(0) must be absent")
            if not J > 0:
                raise ValueError(f"coupling at {off} must be strictly positive")
            for o in (off, tuple(-c for c in off)):
                if o in sym and not math.isclose(sym[o], J, rel_tol=1e-12):
                    raise ValueError(f"J({o}) conflicts with its reflection")
                sym[o] = float(J)
        object.__setattr__(self, "entries", sym)

    @classmethod
    def nearest_neighbour(cls, d: int = 2, J: float = 1.0) -> "CouplingField":
        ents = {}
        for i in range(d):
            e = [0] * d
            e[i] = 1
            ents[tuple(e)] = J
        return cls(ents, d)

    @property
    def range(self) -> float:
        return max(math.sqrt(sum(c * c for c in o)) for o in self.entries)

    def J(self, offset) -> float:
        return self.entries.get(tuple(offset), 0.0)

    def is_nearest_neighbour(self) -> bool:
        return all(sum(abs(c) for c in o) == 1 for o in self.entries)


class LatticeGraph:
    """Finite edge set B with couplings and a fixed order on each B_x.

    The order at a vertex is lexicographic in the other endpoint's coordinates.
    """

    def __init__(self, edges: Iterable[Edge], couplings: dict):
        es = sorted({make_edge(*e) for e in edges})
        couplings = {make_edge(*e): J for e, J in couplings.items()}
        self.edges: tuple = tuple(es)
        self.index = {e: i for i, e in enumerate(es)}
        self.J = np.array([float(couplings[e]) for e in es])
        if np.any(self.J <= 0):
            raise ValueError("every edge needs a positive coupling")
        verts = sorted({v for e in es for v in e})
        self.vertices: tuple = tuple(verts)
        self.vindex = {v: i for i, v in enumerate(verts)}
        inc: dict = {v: [] for v in verts}
        for i, (u, v) in enumerate(es):
            inc[u].append((v, i))
            inc[v].append((u, i))
        # order_at[x]: edge indices sorted by the other endpoint
        self.order_at = {v: tuple(i for _, i in sorted(lst)) for v, lst in inc.items()}
        self.dimension = len(verts[0]) if verts else 0

    def __len__(self):
        return len(self.edges)

    def coupling(self, e: Edge) -> float:
        return float(self.J[self.index[make_edge(*e)]])

    def other(self, ei: int, v: Vertex) -> Vertex:
        a, b = self.edges[ei]
        return b if a == v else a

    def has_edge(self, u: Vertex, v: Vertex) -> bool:
        return make_edge(u, v) in self.index

    def edge_index(self, u: Vertex, v: Vertex) -> int:
        try:
            return self.index[make_edge(u, v)]
        except KeyError:
            raise ValueError(f"({u}, {v}) is not an edge of the graph") from None

    def subgraph(self, edges: Iterable[Edge]) -> "LatticeGraph":
        es = [make_edge(*e) for e in edges]
        return LatticeGraph(es, {e: self.coupling(e) for e in es})

    def is_connected(self) -> bool:
        if not self.vertices:
            return False
        seen = {self.vertices[0]}
        stack = [self.vertices[0]]
        while stack:
            v = stack.pop()
            for ei in self.order_at[v]:
                w = self.other(ei, v)
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == len(self.vertices)

    def __repr__(self):
        return f"LatticeGraph(|V|={len(self.vertices)}, |B|={len(self.edges)})"


def build_graph(couplings: CouplingField, box: Sequence[tuple[int, int]]) -> LatticeGraph:
    """All edges with positive coupling inside an integer box given as (lo, hi) ranges."""
    if len(box) != couplings.dimension:
        raise ValueError("box dimension does not match couplings")
    if any(hi < lo for lo, hi in box):
        raise ValueError("empty region")
    pts = [tuple(p) for p in np.ndindex(*[hi - lo + 1 for lo, hi in box])]
    lo = np.array([b[0] for b in box])
    pts = [tuple(int(c) for c in np.array(p) + lo) for p in pts]
    inside = set(pts)
    edges, J = [], {}
    for p in pts:
        for off, j in couplings.entries.items():
            q = tuple(a + b for a, b in zip(p, off))
            if q in inside and p < q:
                edges.append((p, q))
                J[(p, q)] = j
    if not edges:
        raise ValueError("empty region")
    return LatticeGraph(edges, J)


def boundary(edge_set: Iterable[Edge]) -> set:
    """Vertices of odd index in the edge set."""
    odd: set = set()
    for u, v in edge_set:
        odd ^= {u}
        odd ^= {v}
    return odd


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------


def ising_kappa_constant(beta: float, J: float = 1.0) -> float:
    """Level c with K = {cosh t1 + cosh t2 <= c} for the 2D n.n. Ising model."""
    K = beta * J
    return math.cosh(2 * K) / math.tanh(2 * K)


class NormModel:
    """Direction-dependent decay rate xi and its homogeneous extension.

    Modes: ``euclidean``, ``l1``, ``ising2d`` (exact nearest-neighbour plane
    model, also the killed simple random walk), ``sampled`` (table on a uniform
    angular grid in d=2) and ``function`` (user supplied xi on unit vectors).
    """

    def __init__(self, mode: str, dim: int = 2, *, level: float | None = None,
                 table: np.ndarray | None = None, func: Callable | None = None,
                 dual_func: Callable | None = None):
        self.mode = mode
        self.dim = dim
        self.level = level
        self.table = None if table is None else np.asarray(table, dtype=float)
        self._func = func
        self._dual_func = dual_func
        if mode == "sampled":
            if dim != 2:
                raise ValueError("sampled norms are two-dimensional")
            M = len(self.table)
            ang = 2 * np.pi * np.arange(M) / M
            self._dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
            if np.any(self.table <= 0):
                raise ValueError("xi must be positive")

    # constructors ---------------------------------------------------------
    @classmethod
    def euclidean(cls, d: int = 2) -> "NormModel":
        return cls("euclidean", d)

    @classmethod
    def l1(cls, d: int = 2) -> "NormModel":
        return cls("l1", d)

    @classmethod
    def ising2d(cls, beta: float, J: float = 1.0) -> "NormModel":
        """Exact decay rate of the plane n.n. Ising model at beta < beta_c."""
        if not 0 < math.sinh(2 * beta * J) < 1:
            raise ValueError("beta must be below the critical point")
        c = ising_kappa_constant(beta, J)
        return cls("ising2d", 2, level=c)

    @classmethod
    def killed_walk(cls, w: float) -> "NormModel":
        """Walk with weight w per n.n. step: K = {2w(cosh t1 + cosh t2) <= 1}."""
        if not 0 < w < 0.25:
            raise ValueError("need 0 < w < 1/4")
        return cls("ising2d", 2, level=1.0 / (2 * w))

    @classmethod
    def sampled(cls, values: Sequence[float]) -> "NormModel":
        return cls("sampled", 2, table=np.asarray(values, dtype=float))

    @classmethod
    def sample_from(cls, norm: "NormModel", n_dirs: int = 720) -> "NormModel":
        ang = 2 * np.pi * np.arange(n_dirs) / n_dirs
        return cls.sampled([norm.xi(np.array([math.cos(a), math.sin(a)])) for a in ang])

    @classmethod
    def from_function(cls, xi: Callable, d: int = 2, dual: Callable | None = None) -> "NormModel":
        return cls("function", d, func=xi, dual_func=dual)

    # evaluation -----------------------------------------------------------
    def _level_dual_many(self, n: np.ndarray) -> np.ndarray:
        """Points t of {cosh t1 + cosh t2 = c} with outward normals along the rows of n.

        Solves sum_i sqrt(1 + lam^2 n_i^2) = c for lam > 0; the left side is convex
        and increasing, so Newton started to the right of the root is monotone.
        """
        c = self.level
        n = np.atleast_2d(np.asarray(n, float))
        lam = c / np.abs(n).sum(axis=1)
        for _ in range(100):
            r = np.sqrt(1 + (lam[:, None] * n) ** 2)
            step = (r.sum(axis=1) - c) / (lam[:, None] * n ** 2 / r).sum(axis=1)
            lam = lam - step
            if np.all(np.abs(step) <= 1e-13 * lam):
                break
        return np.arcsinh(lam[:, None] * n)

    def _level_dual(self, n: np.ndarray) -> np.ndarray:
        return self._level_dual_many(n)[0]

    def xi(self, n) -> float:
        """Decay rate per unit length in the direction of n (n need not be unit)."""
        n = np.asarray(n, dtype=float)
        r = float(np.linalg.norm(n))
        if r == 0:
            raise ValueError("direction must be non-zero")
        return self(n) / r

    def __call__(self, x) -> float:
        """xi(x) = |x| xi(x/|x|), with xi(0) = 0."""
        return float(self.many(np.asarray(x, dtype=float)[None, :])[0])

    def many(self, xs) -> np.ndarray:
        """Vectorised xi over the rows of xs."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if self.mode == "euclidean":
            return np.linalg.norm(xs, axis=1)
        if self.mode == "l1":
            return np.abs(xs).sum(axis=1)
        out = np.zeros(len(xs))
        nz = np.any(xs != 0, axis=1)
        if not nz.any():
            return out
        X = xs[nz]
        if self.mode == "ising2d":
            out[nz] = (self._level_dual_many(X) * X).sum(axis=1)
        elif self.mode == "sampled":
            out[nz] = [self._sampled_value(x) for x in X]
        else:
            r = np.linalg.norm(X, axis=1)
            out[nz] = r * np.array([float(self._func(x / rr)) for x, rr in zip(X, r)])
        return out

    def _sampled_value(self, x: np.ndarray) -> float:
        M = len(self.table)
        a = math.atan2(x[1], x[0]) % (2 * math.pi)
        k = int(a // (2 * math.pi / M)) % M
        k1 = (k + 1) % M
        B = np.stack([self._dirs[k], self._dirs[k1]], axis=1)
        ab = np.linalg.solve(B, x)
        return float(ab[0] * self.table[k] + ab[1] * self.table[k1])

    def convexity_defect(self, pairs: Iterable[tuple]) -> float:
        """max of xi(u+v) - xi(u) - xi(v) over the given pairs (<= 0 when convex)."""
        worst = -np.inf
        for u, v in pairs:
            u = np.asarray(u, float)
            v = np.asarray(v, float)
            worst = max(worst, self(u + v) - self(u) - self(v))
        return float(worst)

    def dual(self, n) -> "DualVector":
        return dual_vector(self, n)


@dataclass(frozen=True)
class DualVector:
    """A point t of the boundary of K dual to the direction n."""

    t: tuple
    direction: tuple
    residual: float = 0.0

    @property
    def vec(self) -> np.ndarray:
        return np.asarray(self.t, dtype=float)

    def __neg__(self):
        return DualVector(tuple(-c for c in self.t), tuple(-c for c in self.direction), self.residual)


def _unit_grid(d: int, m: int = 256) -> np.ndarray:
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        a = 2 * np.pi * np.arange(m) / m
        return np.stack([np.cos(a), np.sin(a)], axis=1)
    # Fibonacci sphere in 3D
    i = np.arange(m) + 0.5
    phi = np.arccos(1 - 2 * i / m)
    th = np.pi * (1 + 5 ** 0.5) * i
    return np.stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)], axis=1)


def dual_vector(norm: NormModel, n, grid_size: int = 256) -> DualVector:
    """Maximise (t, n) over K.  Closed forms where available, otherwise an LP."""
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    d = norm.dim
    if norm.mode == "euclidean":
        t = n.copy()
    elif norm.mode == "l1":
        # vertex of the cube; ties resolved towards the axis
        t = np.where(np.abs(n) > 1e-12, np.sign(n), 0.0)
    elif norm.mode == "ising2d":
        t = norm._level_dual(n)
    elif norm.mode == "function" and norm._dual_func is not None:
        t = np.asarray(norm._dual_func(n), float)
    else:
        dirs = norm._dirs if norm.mode == "sampled" else _unit_grid(d, 4 * grid_size)
        b = np.array([norm(m) for m in dirs])
        res = linprog(-n, A_ub=dirs, b_ub=b, bounds=[(None, None)] * d, method="highs")
        if not res.success:
            raise RuntimeError(f"dual solver failed: {res.message}")
        t = res.x
    grid = np.vstack([_unit_grid(d, grid_size), n[None, :]])
    resid = max(abs(float(max(g @ t - norm(g) for g in grid))), abs(float(t @ n - norm(n))))
    return DualVector(tuple(float(c) for c in t), tuple(float(c) for c in n), resid)


def _tvec(t) -> np.ndarray:
    return t.vec if isinstance(t, DualVector) else np.asarray(t, dtype=float)


def surcharge(t, x, norm: NormModel) -> float:
    """s_t(x) = xi(x) - (t, x)."""
    x = np.asarray(x, dtype=float)
    return norm(x) - float(_tvec(t) @ x)


def in_forward_cone(t, delta: float, x, norm: NormModel) -> bool:
    """Membership in Y_delta(t) = {x : s_t(x) < delta xi(x)}."""
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        raise ValueError("cone membership undefined at origin")
    return surcharge(t, x, norm) < delta * norm(x)


def ball_membership(center, K: float, x, norm: NormModel) -> bool:
    if K <= 0:
        raise ValueError("K must be positive")
    return norm(np.asarray(x, float) - np.asarray(center, float)) <= K


# ---------------------------------------------------------------------------
# model configuration file
# ---------------------------------------------------------------------------


@dataclass
class ModelConfig:
    dimension: int
    beta: float
    couplings: CouplingField
    box: list = field(default_factory=list)

    def graph(self) -> LatticeGraph:
        return build_graph(self.couplings, self.box)


_COUPLING_RE = re.compile(r"^\(([-\d,\s]+)\)\s*:\s*([-+0-9.eE]+)$")
_RANGE_RE = re.compile(r"^\s*(-?\d+)\s*\.\.\s*(-?\d+)\s*$")


def parse_config(text: str) -> ModelConfig:
    """Parse the ``key = value`` model file; unknown keys are rejected."""
    dim = beta = None
    couplings: dict = {}
    box: list = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "dimension":
            dim = int(val)
        elif key == "beta":
            beta = float(val)
        elif key == "coupling":
            m = _COUPLING_RE.match(val)
            if not m:
                raise ValueError(f"line {lineno}: bad coupling '{val}'")
            off = tuple(int(c) for c in m.group(1).split(","))
            couplings[off] = float(m.group(2))
        elif key == "box":
            box = []
            for part in val.split(","):
                m = _RANGE_RE.match(part)
                if not m:
                    raise ValueError(f"line {lineno}: bad box range '{part}'")
                box.append((int(m.group(1)), int(m.group(2))))
        else:
            raise ValueError(f"line {lineno}: unknown key '{key}'")
    if dim is None or beta is None:
        raise ValueError("config needs dimension and beta")
    if not couplings:
        raise ValueError("config needs at least one coupling")
    if box and len(box) != dim:
        raise ValueError("box dimension mismatch")
    return ModelConfig(dim, beta, CouplingField(couplings, dim), box)
