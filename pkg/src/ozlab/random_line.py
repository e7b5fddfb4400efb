"""Random-line representation of the two-point function.

A set D of edges with boundary {x, y} determines a backward edge-self-avoiding
line lambda(D) by a deterministic extraction.  The weight of a line is

    q(lambda) = w(lambda) * Zt(B minus Delta(lambda)) / Zt(B),

with w the product of tanh(beta J) along the line and Zt the even-subgraph
(high-temperature) polynomial.  Summing q over lines from x to y gives g(x, y).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .gibbs import box_log_partition, spin_correlations, _graph_arrays
from .lattice import CouplingField, LatticeGraph, boundary, build_graph, make_edge

MAX_CYCLE_DIM = 20


@dataclass(frozen=True)
class Line:
    vertices: tuple
    delta: frozenset = frozenset()

    @property
    def edges(self) -> tuple:
        v = self.vertices
        return tuple(make_edge(v[i], v[i + 1]) for i in range(len(v) - 1))

    @property
    def start(self):
        return self.vertices[0]

    @property
    def end(self):
        return self.vertices[-1]

    def __len__(self):
        return len(self.vertices) - 1

    @property
    def is_trivial(self) -> bool:
        return len(self.vertices) == 1

    def translate(self, shift) -> "Line":
        sh = tuple(shift)
        mv = lambda p: tuple(a + b for a, b in zip(p, sh))
        return Line(tuple(mv(p) for p in self.vertices),
                    frozenset((mv(a), mv(b)) for a, b in self.delta))


@dataclass(frozen=True)
class LineWeight:
    w: float
    ratio: float
    q: float


def trivial_line(v) -> Line:
    return Line((tuple(v),))


def concat(*lines: Line) -> Line:
    """Concatenate lines end to start."""
    verts = list(lines[0].vertices)
    for ln in lines[1:]:
        if ln.start != verts[-1]:
            raise ValueError("lines do not join")
        verts.extend(ln.vertices[1:])
    return Line(tuple(verts))


def _check_path(graph: LatticeGraph, vertices) -> list:
    idx = [graph.edge_index(vertices[i], vertices[i + 1]) for i in range(len(vertices) - 1)]
    if len(set(idx)) != len(idx):
        raise ValueError("line repeats an edge")
    return idx


def line_delta(graph: LatticeGraph, vertices) -> frozenset:
    """Delta(lambda) from the backward traversal along the given line."""
    idx = _check_path(graph, vertices)
    delta: set = set()
    for j in range(len(idx) - 1, -1, -1):
        cur = vertices[j + 1]
        chosen = idx[j]
        for e in graph.order_at[cur]:
            delta.add(e)
            if e == chosen:
                break
    return frozenset(graph.edges[e] for e in delta)


def _extract(graph: LatticeGraph, D: set, x, y):
    cur = y
    delta: set = set()
    seq = [y]
    guard = len(graph.edges) + 1
    while guard:
        guard -= 1
        chosen = None
        for e in graph.order_at[cur]:
            if e not in delta and e in D:
                chosen = e
                break
        if chosen is None:
            raise RuntimeError("malformed D")
        for e in graph.order_at[cur]:
            delta.add(e)
            if e == chosen:
                break
        cur = graph.other(chosen, cur)
        seq.append(cur)
        if cur == x:
            return tuple(reversed(seq)), delta
    raise RuntimeError("malformed D")


def extract_line(D: Iterable, graph: LatticeGraph, x, y) -> Line:
    """Run the backward extraction on an edge set D with boundary {x, y}."""
    x, y = tuple(x), tuple(y)
    edges = [make_edge(*e) for e in D]
    if x == y or boundary(edges) != {x, y}:
        raise ValueError("boundary mismatch")
    Didx = {graph.edge_index(*e) for e in edges}
    verts, delta = _extract(graph, Didx, x, y)
    return Line(verts, frozenset(graph.edges[e] for e in delta))


def with_delta(graph: LatticeGraph, line: Line) -> Line:
    return Line(line.vertices, line_delta(graph, line.vertices))


def is_valid_line(graph: LatticeGraph, line: Line) -> bool:
    """True iff the line is lambda(D) for D = its own edge set."""
    if line.is_trivial:
        return True
    try:
        _check_path(graph, line.vertices)
        return extract_line(line.edges, graph, line.start, line.end).vertices == line.vertices
    except (ValueError, RuntimeError):
        return False


# ---------------------------------------------------------------------------
# even subgraphs and enumeration
# ---------------------------------------------------------------------------


class CycleSpace:
    """All even edge sets of a graph, listed in reflected Gray-code order.

    Consecutive rows differ by one fundamental cycle.  Paths with prescribed
    boundary {x, y} are a fixed tree path XOR a row of this table.
    """

    def __init__(self, graph: LatticeGraph):
        self.graph = graph
        E = len(graph.edges)
        parent: dict = {}
        tree: set = set()
        for root in graph.vertices:
            if root in parent:
                continue
            parent[root] = None
            stack = [root]
            while stack:
                v = stack.pop()
                for e in graph.order_at[v]:
                    w = graph.other(e, v)
                    if w not in parent:
                        parent[w] = (v, e)
                        tree.add(e)
                        stack.append(w)
        self.parent = parent
        basis = []
        for e, (u, v) in enumerate(graph.edges):
            if e in tree:
                continue
            row = np.zeros(E, bool)
            row[e] = True
            row ^= self._tree_path(u, v)
            basis.append(row)
        if len(basis) > MAX_CYCLE_DIM:
            raise ValueError("too many edges for enumeration")
        rows = np.zeros((1, E), bool)
        for b in basis:
            rows = np.vstack([rows, rows[::-1] ^ b])
        self.rows = rows
        self.rows_f = rows.astype(float)
        self.dim = len(basis)
        self._cache: dict = {}

    def _root_path(self, v) -> np.ndarray:
        row = np.zeros(len(self.graph.edges), bool)
        while self.parent[v] is not None:
            v, e = self.parent[v]
            row[e] ^= True
        return row

    def _tree_path(self, u, v) -> np.ndarray:
        return self._root_path(u) ^ self._root_path(v)

    def log_weights(self, beta: float) -> np.ndarray:
        hit = self._cache.get(beta)
        if hit is None:
            with np.errstate(divide="ignore"):
                lt = np.log(np.tanh(beta * self.graph.J))
            hit = self.rows_f @ np.where(np.isfinite(lt), lt, 0.0)
            if not np.all(np.isfinite(lt)):
                hit = np.where(self.rows.any(axis=1), -np.inf, 0.0)
            self._cache[beta] = (hit, np.exp(hit), float(np.exp(hit).sum()))
            hit = self._cache[beta]
        return hit[0]

    def z_tilde(self, beta: float, removed_mask: np.ndarray | None = None) -> float:
        self.log_weights(beta)
        _, w, total = self._cache[beta]
        if removed_mask is None or not removed_mask.any():
            return total
        return float(w[(self.rows_f @ removed_mask.astype(float)) == 0].sum())

    def paths(self, x, y) -> np.ndarray:
        """All edge sets (as boolean rows) with boundary {x, y}."""
        return self.rows ^ self._tree_path(x, y)


_CYCLE_CACHE: dict = {}


def cycle_space(graph: LatticeGraph) -> CycleSpace:
    key = id(graph)
    hit = _CYCLE_CACHE.get(key)
    if hit is None or hit.graph is not graph:
        if len(_CYCLE_CACHE) > 256:
            _CYCLE_CACHE.clear()
        hit = CycleSpace(graph)
        _CYCLE_CACHE[key] = hit
    return hit


def enumerate_lines(graph: LatticeGraph, x, y, beta: float | None = None) -> dict:
    """Group all D with boundary {x, y} by their line.

    Returns a map vertices -> (Line with Delta, group weight), where the group
    weight is the sum of prod tanh over the group divided by Zt(B).
    """
    x, y = tuple(x), tuple(y)
    if x == y:
        return {(x,): (trivial_line(x), 1.0)}
    cs = cycle_space(graph)
    Ds = cs.paths(x, y)
    lw = np.exp(np.where(Ds, np.log(np.tanh(beta * graph.J))[None, :], 0.0).sum(axis=1)) \
        if beta else np.zeros(len(Ds))
    out: dict = {}
    for row, wD in zip(Ds, lw):
        D = set(np.flatnonzero(row).tolist())
        verts, delta = _extract(graph, D, x, y)
        if verts in out:
            ln, acc = out[verts]
            out[verts] = (ln, acc + wD)
        else:
            out[verts] = (Line(verts, frozenset(graph.edges[e] for e in delta)), wD)
    if beta:
        zt = cs.z_tilde(beta)
        out = {k: (ln, acc / zt) for k, (ln, acc) in out.items()}
    return out


def line_weight(graph: LatticeGraph, line: Line, beta: float, validate: bool = True) -> LineWeight:
    """w(lambda), Zt(B minus Delta)/Zt(B) and q for a line of the graph."""
    if line.is_trivial:
        return LineWeight(1.0, 1.0, 1.0)
    idx = _check_path(graph, line.vertices)
    if validate and not is_valid_line(graph, line):
        raise ValueError("line is not produced by the extraction")
    delta = line.delta or line_delta(graph, line.vertices)
    w = float(np.prod(np.tanh(beta * graph.J[idx])))
    cs = cycle_space(graph)
    mask = np.zeros(len(graph.edges), bool)
    mask[[graph.index[e] for e in delta]] = True
    ratio = cs.z_tilde(beta, mask) / cs.z_tilde(beta)
    return LineWeight(w, ratio, w * ratio)


def representation_sum(graph: LatticeGraph, x, y, beta: float) -> float:
    """Sum of q over all lines from x to y."""
    x, y = tuple(x), tuple(y)
    if x == y:
        return 1.0
    total = 0.0
    for ln, _ in enumerate_lines(graph, x, y, beta).values():
        total += line_weight(graph, ln, beta, validate=False).q
    return total


def spin_ratio_with_cosh(graph: LatticeGraph, line: Line, beta: float) -> float:
    """prod_{Delta} cosh(beta J) * Z(B minus Delta)/Z(B) from spin sums on the same vertex set."""
    delta = line.delta or line_delta(graph, line.vertices)
    pairs, J = _graph_arrays(graph)
    Jcut = J.copy()
    di = [graph.index[e] for e in delta]
    Jcut[di] = 0.0
    n = len(graph.vertices)
    lz = spin_correlations(n, pairs, J, beta)[0]
    lz_cut = spin_correlations(n, pairs, Jcut, beta)[0]
    return float(np.prod(np.cosh(beta * J[di])) * math.exp(lz_cut - lz))


# ---------------------------------------------------------------------------
# splitting, BK, decoupling, explicit weight
# ---------------------------------------------------------------------------


def split_at(line: Line, z, graph: LatticeGraph | None = None) -> tuple:
    """Split at the last visit of z into (lambda_<, lambda_>)."""
    z = tuple(z)
    hits = [i for i, v in enumerate(line.vertices) if v == z]
    if not hits:
        raise ValueError("vertex not on line")
    k = hits[-1]
    a, b = Line(line.vertices[:k + 1]), Line(line.vertices[k:])
    if graph is not None:
        a = with_delta(graph, a) if not a.is_trivial else a
        b = with_delta(graph, b) if not b.is_trivial else b
    return a, b


def lines_through(graph: LatticeGraph, x, y, through, beta: float) -> float:
    through = tuple(through)
    total = 0.0
    for verts, (ln, _) in enumerate_lines(graph, x, y, beta).items():
        if through in verts:
            total += line_weight(graph, ln, beta, validate=False).q
    return total


def bk_check(graph: LatticeGraph, x, y, through, beta: float, tol: float = 1e-12):
    lhs = lines_through(graph, x, y, through, beta)
    rhs = representation_sum(graph, x, through, beta) * representation_sum(graph, through, y, beta)
    return lhs, rhs, lhs <= rhs + tol


def conditional_weight(graph: LatticeGraph, gamma: Line, lam: Line, beta: float) -> float:
    """q_lambda(gamma) = q(gamma joined with lambda) / q(lambda)."""
    joint = concat(gamma, lam)
    if not is_valid_line(graph, joint):
        raise ValueError("incompatible concatenation")
    return line_weight(graph, joint, beta, validate=False).q / line_weight(graph, lam, beta).q


def decoupling_ratio(graph: LatticeGraph, gamma: Line, eta: Line, lambda1: Line, lambda2: Line,
                     beta: float) -> float:
    if gamma.end != eta.start or eta.end != lambda1.start or eta.end != lambda2.start:
        raise ValueError("incompatible lines")
    dg = line_delta(graph, gamma.vertices)
    d12 = line_delta(graph, lambda1.vertices) | line_delta(graph, lambda2.vertices)
    if dg & d12:
        raise ValueError("Delta(gamma) meets Delta(lambda_i)")
    l1, l2 = concat(eta, lambda1), concat(eta, lambda2)
    return conditional_weight(graph, gamma, l1, beta) / conditional_weight(graph, gamma, l2, beta)


def explicit_weight_check(graph: LatticeGraph, line: Line, beta: float, quad_points: int = 16,
                          tol: float = 1e-6):
    """Compare q with the interpolated-coupling integral formula (Gauss-Legendre in s)."""
    if quad_points < 8:
        raise ValueError("need at least 8 quadrature points")
    direct = line_weight(graph, line, beta).q
    delta = line.delta or line_delta(graph, line.vertices)
    pairs, J = _graph_arrays(graph)
    di = np.array([graph.index[e] for e in delta], int)
    nodes, weights = np.polynomial.legendre.leggauss(quad_points)
    s_nodes, s_w = 0.5 * (nodes + 1), 0.5 * weights
    integ = np.zeros(len(di))
    n = len(graph.vertices)
    for s, ws in zip(s_nodes, s_w):
        Js = J.copy()
        Js[di] *= s
        _, S = spin_correlations(n, pairs, Js, beta)
        integ += ws * S[pairs[di, 0], pairs[di, 1]]
    idx = [graph.edge_index(line.vertices[i], line.vertices[i + 1]) for i in range(len(line))]
    w = float(np.prod(np.tanh(beta * J[idx])))
    via = w * float(np.prod(np.cosh(beta * J[di]) * np.exp(-beta * J[di] * integ)))
    return direct, via, abs(direct - via) <= tol


# ---------------------------------------------------------------------------
# plane weights from finite boxes
# ---------------------------------------------------------------------------


def box_line_weight(line: Line, beta: float, margin: int = 5, J: float = 1.0) -> float:
    """q_B(lambda) for the n.n. plane model on the bounding box of lambda plus a margin."""
    if line.is_trivial:
        return 1.0
    pts = np.array(line.vertices)
    lo, hi = pts.min(axis=0) - margin - 1, pts.max(axis=0) + margin + 1
    box = [(int(lo[0]), int(hi[0])), (int(lo[1]), int(hi[1]))]
    g = build_graph(CouplingField.nearest_neighbour(2, J), box)
    delta = line_delta(g, line.vertices)
    lz = box_log_partition(box, beta, (), J)
    lz_cut = box_log_partition(box, beta, delta, J)
    u = math.tanh(beta * J)
    return u ** len(line) * math.cosh(beta * J) ** len(delta) * math.exp(lz_cut - lz)


def plane_line_weight(line: Line, beta: float, margins=(4, 6), J: float = 1.0):
    """Two-box estimate of the infinite-volume weight with a Cauchy difference."""
    a = box_line_weight(line, beta, margins[0], J)
    b = box_line_weight(line, beta, margins[1], J)
    return b, abs(b - a)
