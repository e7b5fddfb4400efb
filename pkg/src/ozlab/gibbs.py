"""Oracles for the Ising two-point function g(x, y) = <s_x s_y>.

Brute-force spin sums on tiny graphs, transfer matrices on strips and boxes,
cluster Monte Carlo on periodic boxes, and decay-rate fits.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .lattice import CouplingField, LatticeGraph, build_graph

MAX_ENUM_VERTICES = 24


@dataclass
class CorrelationTable:
    beta: float
    entries: dict                     # (x, y) -> g
    method: str                       # brute | strip | monte-carlo | toy-model
    stderr: dict = field(default_factory=dict)

    def g(self, x, y) -> float:
        x, y = tuple(x), tuple(y)
        if x == y:
            return 1.0
        if (x, y) in self.entries:
            return self.entries[(x, y)]
        return self.entries[(y, x)]

    def err(self, x, y) -> float:
        x, y = tuple(x), tuple(y)
        return self.stderr.get((x, y), self.stderr.get((y, x), 0.0))

    def scaled(self, c: float) -> "CorrelationTable":
        return CorrelationTable(self.beta, {k: c * v for k, v in self.entries.items()}, self.method,
                                {k: c * v for k, v in self.stderr.items()})

    def displacement_series(self, direction=None):
        """Rows (displacement, g, stderr) with y - x parallel to direction (all if None)."""
        rows = []
        for (x, y), g in self.entries.items():
            disp = np.subtract(y, x)
            if direction is not None:
                n = np.asarray(direction, float)
                r = np.linalg.norm(disp)
                if r == 0 or disp @ n <= 0 or abs(abs(disp @ n) - r * np.linalg.norm(n)) > 1e-9 * r:
                    continue
            rows.append((tuple(int(c) for c in disp), g, self.err(x, y)))
        return rows

    def write_csv(self, path, origin=None):
        """Write ``x1,...,xd,g,stderr,method`` rows of g(origin, x)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            keys = sorted(self.entries)
            d = len(keys[0][0]) if keys else 0
            w.writerow([f"x{i + 1}" for i in range(d)] + ["g", "stderr", "method"])
            for x, y in keys:
                if origin is not None and tuple(x) != tuple(origin):
                    continue
                disp = np.subtract(y, x) if origin is not None else y
                w.writerow([int(c) for c in disp] + [f"{self.entries[(x, y)]:.17g}",
                                                     f"{self.err(x, y):.17g}", self.method])


@dataclass
class XiEstimate:
    direction: tuple
    rate: float
    window: tuple
    residual: float
    prefactor_corrected: bool
    intercept: float = 0.0
    griffiths_ok: bool | None = None


# ---------------------------------------------------------------------------
# brute force
# ---------------------------------------------------------------------------


def spin_correlations(n_vertices: int, edge_pairs: np.ndarray, J: np.ndarray, beta: float,
                      chunk: int = 1 << 15):
    """log Z and the full matrix <s_i s_j> by enumerating all spin configurations.

    Spin 0 is fixed to +1 (global flip symmetry), so 2^(n-1) states are visited.
    """
    if n_vertices > MAX_ENUM_VERTICES:
        raise ValueError("graph too large for enumeration")
    m = n_vertices - 1
    I = np.asarray(edge_pairs[:, 0], int) if len(edge_pairs) else np.zeros(0, int)
    K = np.asarray(edge_pairs[:, 1], int) if len(edge_pairs) else np.zeros(0, int)
    bJ = beta * np.asarray(J, float)
    shift = float(np.abs(bJ).sum())
    Z = 0.0
    S = np.zeros((n_vertices, n_vertices))
    total = 1 << m
    shifts = np.arange(m, dtype=np.int64)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        s = np.ones((len(idx), n_vertices))
        if m:
            s[:, 1:] = 1 - 2 * ((idx[:, None] >> shifts) & 1)
        w = np.exp((s[:, I] * s[:, K]) @ bJ - shift)
        Z += w.sum()
        S += (s * w[:, None]).T @ s
    logZ = math.log(Z) + shift + math.log(2)
    return logZ, S / Z


def _graph_arrays(graph: LatticeGraph, J=None):
    pairs = np.array([[graph.vindex[u], graph.vindex[v]] for u, v in graph.edges], dtype=int)
    return pairs, (graph.J if J is None else np.asarray(J, float))


def exact_two_point(graph: LatticeGraph, beta: float) -> CorrelationTable:
    """Exact g on all vertex pairs of a small graph (ferromagnetic sign)."""
    if len(graph.vertices) > MAX_ENUM_VERTICES:
        raise ValueError("graph too large for enumeration")
    pairs, J = _graph_arrays(graph)
    _, S = spin_correlations(len(graph.vertices), pairs, J, beta)
    V = graph.vertices
    ents = {(V[i], V[j]): float(S[i, j]) for i in range(len(V)) for j in range(i + 1, len(V))}
    return CorrelationTable(beta, ents, "brute")


def exact_log_partition(graph: LatticeGraph, beta: float, J=None) -> float:
    pairs, J = _graph_arrays(graph, J)
    return spin_correlations(len(graph.vertices), pairs, J, beta)[0]


# ---------------------------------------------------------------------------
# transfer matrices on n.n. boxes
# ---------------------------------------------------------------------------


class BoxTransfer:
    """Column transfer matrix for a nearest-neighbour Ising model on an L x W box.

    ``Jh[c, r]`` couples (c, r)-(c+1, r) and ``Jv[c, r]`` couples (c, r)-(c, r+1);
    a zero coupling removes the edge.  Vectors are kept normalised with the
    logarithm of the scale tracked separately.
    """

    def __init__(self, Jh: np.ndarray, Jv: np.ndarray, beta: float):
        self.L = Jv.shape[0]
        self.W = Jv.shape[1] + 1
        if self.W > 16:
            raise ValueError("strip width too large for the transfer matrix")
        self.beta = beta
        self.Jh = np.asarray(Jh, float)
        idx = np.arange(1 << self.W)
        self.spins = 1.0 - 2.0 * ((idx[:, None] >> np.arange(self.W)) & 1)
        self.vert = np.exp(beta * (self.spins[:, :-1] * self.spins[:, 1:]) @ np.asarray(Jv, float).T).T
        # vert[c] is the diagonal factor of column c

    def _horizontal(self, vec: np.ndarray, c: int) -> np.ndarray:
        W = self.W
        shape = vec.shape[1:]
        t = vec.reshape((2,) * W + shape)
        for r in range(W):
            K = self.beta * self.Jh[c, r]
            if K == 0.0:
                M = np.ones((2, 2))
            else:
                M = np.array([[math.exp(K), math.exp(-K)], [math.exp(-K), math.exp(K)]])
            # bit r of the state index is axis W-1-r of the C-ordered reshape
            ax = W - 1 - r
            t = np.moveaxis(np.tensordot(M, t, axes=([1], [ax])), 0, ax)
        return t.reshape(vec.shape)

    def forward(self):
        """Normalised left vectors F[c] and the normaliser applied at each column."""
        F, norms = [], []
        v = self.vert[0].copy()
        for c in range(self.L):
            if c > 0:
                v = self.vert[c] * self._horizontal(v, c - 1)
            s = v.max()
            v = v / s
            F.append(v)
            norms.append(s)
        return F, norms

    def log_partition(self) -> float:
        v = self.vert[0].copy()
        ls = 0.0
        for c in range(1, self.L):
            v = self.vert[c] * self._horizontal(v, c - 1)
            s = v.max()
            v /= s
            ls += math.log(s)
        return ls + math.log(v.sum())

    def backward(self):
        B = [None] * self.L
        logs = [0.0] * self.L
        v = np.ones(1 << self.W)
        B[-1] = v
        ls = 0.0
        for c in range(self.L - 2, -1, -1):
            v = self._horizontal(self.vert[c + 1] * v, c)
            s = v.max()
            v = v / s
            ls += math.log(s)
            B[c] = v
            logs[c] = ls
        return B, logs

    def row_correlations(self, c0: int, rows: Sequence[int] | None = None) -> np.ndarray:
        """G[k, c] = <s_(c0, r_k) s_(c, r_k)> for c >= c0."""
        rows = list(range(self.W)) if rows is None else list(rows)
        F, norms = self.forward()
        B, _ = self.backward()
        out = np.zeros((len(rows), self.L))
        for k, r in enumerate(rows):
            s = self.spins[:, r]
            u = F[c0] * s
            for c in range(c0, self.L):
                if c > c0:
                    u = self.vert[c] * self._horizontal(u, c - 1) / norms[c]
                out[k, c] = float((u * s) @ B[c]) / float(F[c] @ B[c])
        return out


def _nn_box_couplings(length: int, width: int, couplings: CouplingField):
    if couplings.dimension != 2 or not couplings.is_nearest_neighbour():
        raise ValueError("transfer matrix supports n.n. only")
    Jh = np.full((max(length - 1, 0), width), couplings.J((1, 0)))
    Jv = np.full((length, max(width - 1, 0)), couplings.J((0, 1)))
    return Jh, Jv


def strip_two_point(width: int, length: int, beta: float,
                    couplings: CouplingField | None = None) -> CorrelationTable:
    """Exact axis correlations g((0, r), (x, r)) on the box [0, length) x [0, width)."""
    couplings = couplings or CouplingField.nearest_neighbour(2)
    if not 1 <= width <= 10:
        raise ValueError("width must be between 1 and 10")
    if length < 2:
        raise ValueError("length must be at least 2")
    Jh, Jv = _nn_box_couplings(length, width, couplings)
    if width == 1:
        Jv = np.zeros((length, 0))
    tm = BoxTransfer(Jh, Jv, beta)
    G = tm.row_correlations(0)
    ents = {((0, r), (c, r)): float(G[r, c]) for r in range(width) for c in range(1, length)}
    return CorrelationTable(beta, ents, "strip")


def box_log_partition(box: Sequence[tuple[int, int]], beta: float, removed: Iterable = (),
                      J: float = 1.0) -> float:
    """log Z of the n.n. model on an integer box with some edges deleted."""
    (x0, x1), (y0, y1) = box
    removed = [tuple(sorted(e)) for e in removed]
    if y1 - y0 > x1 - x0:
        # keep the transfer direction along the longer side
        (x0, x1), (y0, y1) = (y0, y1), (x0, x1)
        removed = [tuple(sorted(((u[1], u[0]), (v[1], v[0])))) for u, v in removed]
    L, W = x1 - x0 + 1, y1 - y0 + 1
    Jh = np.full((L - 1, W), J)
    Jv = np.full((L, W - 1), J)
    for (a, b), (c, d) in removed:
        if b == d:
            Jh[a - x0, b - y0] = 0.0
        else:
            Jv[a - x0, b - y0] = 0.0
    return BoxTransfer(Jh, Jv, beta).log_partition()


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


def _sw_chain(L: int, beta: float, sweeps: int, warmup: int, rmax: int, seed, n_batches: int):
    """Swendsen-Wang chain on an L x L torus; returns per-batch FK connectivities."""
    rng = np.random.default_rng(seed)
    N = L * L
    idx = np.arange(N).reshape(L, L)
    right = np.roll(idx, -1, axis=0).ravel()
    up = np.roll(idx, -1, axis=1).ravel()
    src = np.concatenate([idx.ravel(), idx.ravel()])
    dst = np.concatenate([right, up])
    p = -math.expm1(-2 * beta)
    spins = rng.choice(np.array([-1, 1], dtype=np.int8), size=N)
    acc = np.zeros((n_batches, rmax + 1))
    per_batch = sweeps // n_batches
    for it in range(warmup + per_batch * n_batches):
        same = spins[src] == spins[dst]
        open_ = same & (rng.random(2 * N) < p)
        g = coo_matrix((np.ones(open_.sum()), (src[open_], dst[open_])), shape=(N, N))
        _, lab = connected_components(g, directed=False)
        flips = rng.choice(np.array([-1, 1], dtype=np.int8), size=lab.max() + 1)
        spins = flips[lab]
        if it >= warmup:
            b = (it - warmup) // per_batch
            lab2 = lab.reshape(L, L)
            row = np.empty(rmax + 1)
            for r in range(rmax + 1):
                row[r] = 0.5 * ((lab2 == np.roll(lab2, -r, axis=0)).mean()
                                + (lab2 == np.roll(lab2, -r, axis=1)).mean())
            acc[b] += row
    return acc / per_batch


def monte_carlo_two_point(box_side: int, beta: float, sweeps: int, seed: int,
                          warmup: int = 200, rmax: int | None = None, chains: int = 1,
                          threads: int = 1, n_batches: int = 20) -> CorrelationTable:
    """Cluster Monte Carlo estimate of g(0, (r, 0)) on a periodic box.

    Uses Swendsen-Wang updates and the connectivity estimator
    g(x) = P(0 <-> x) averaged over translations and both axes.
    Standard errors come from batch means pooled over chains.
    """
    if box_side > 256 or box_side < 2:
        raise ValueError("box side must be in [2, 256]")
    if sweeps < warmup:
        raise ValueError("insufficient sampling budget")
    rmax = box_side // 2 if rmax is None else min(rmax, box_side // 2)
    ss = np.random.SeedSequence(seed)
    seeds = ss.spawn(chains)
    args = [(box_side, beta, sweeps, warmup, rmax, s, n_batches) for s in seeds]
    if threads > 1 and chains > 1:
        with ThreadPoolExecutor(threads) as ex:
            res = list(ex.map(lambda a: _sw_chain(*a), args))
    else:
        res = [_sw_chain(*a) for a in args]
    batches = np.vstack(res)
    mean = batches.mean(axis=0)
    se = batches.std(axis=0, ddof=1) / math.sqrt(len(batches))
    ents = {((0, 0), (r, 0)): float(mean[r]) for r in range(1, rmax + 1)}
    errs = {((0, 0), (r, 0)): float(se[r]) for r in range(1, rmax + 1)}
    return CorrelationTable(beta, ents, "monte-carlo", errs)


# ---------------------------------------------------------------------------
# toy tables and decay-rate fits
# ---------------------------------------------------------------------------


def directed_walk_table(weight: float = 0.4, nmax: int = 40) -> CorrelationTable:
    """G((n, n)) = C(2n, n) w^(2n) for the walk with steps (1,0), (0,1) of weight w."""
    ents = {}
    for n in range(1, nmax + 1):
        lg = math.lgamma(2 * n + 1) - 2 * math.lgamma(n + 1) + 2 * n * math.log(weight)
        ents[((0, 0), (n, n))] = math.exp(lg)
    return CorrelationTable(0.0, ents, "toy-model")


def chain_table(beta: float, length: int, J: float = 1.0) -> CorrelationTable:
    u = math.tanh(beta * J)
    return CorrelationTable(beta, {((0,), (x,)): u ** x for x in range(1, length)}, "toy-model")


def _window_rows(table: CorrelationTable, direction, window):
    rows = {}
    for disp, g, se in table.displacement_series(direction):
        r = float(np.linalg.norm(disp))
        if window[0] <= r <= window[1] and g > 0:
            rows.setdefault(r, []).append((g, se))
    rs = np.array(sorted(rows))
    gs = np.array([np.mean([a for a, _ in rows[r]]) for r in rs])
    ses = np.array([np.mean([b for _, b in rows[r]]) for r in rs])
    return rs, gs, ses


def inverse_correlation_length(table: CorrelationTable, direction, window=(8, 32),
                               prefactor_correction: bool = False, griffiths_check: bool = False,
                               tolerance: float = 1e-9) -> XiEstimate:
    """Fit log g = a - xi |x| (optionally with -(d-1)/2 log|x| held fixed)."""
    n = np.asarray(direction, float)
    n = n / np.linalg.norm(n)
    rs, gs, _ = _window_rows(table, n, window)
    if len(rs) < 4:
        raise ValueError("window too small")
    d = len(n)
    y = np.log(gs)
    if prefactor_correction:
        y = y + 0.5 * (d - 1) * np.log(rs)
    X = np.stack([np.ones_like(rs), -rs], axis=1)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = float(np.sqrt(np.mean((X @ coef - y) ** 2)))
    ok = None
    if griffiths_check:
        ok = bool(np.all(gs <= np.exp(-coef[1] * rs) * (1 + tolerance)))
    if coef[1] <= 0:
        raise ArithmeticError("non-positive decay rate fitted")
    return XiEstimate(tuple(n), float(coef[1]), (float(rs[0]), float(rs[-1])), resid,
                      prefactor_correction, float(coef[0]), ok)
