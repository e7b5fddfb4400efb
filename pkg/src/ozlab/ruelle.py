"""Ruelle transfer operators on finite alphabets with an absorbing empty symbol.

A depth-m operator acts on functions of contexts: tuples of length m over the
alphabet, padded on the right by EMPTY (-1).  Once EMPTY appears it fills the
rest of the tuple.  For a context c and symbol z,

    (L f)(c) = sum_z exp(psi(z, c)) f(next(z, c)),   next(z, c) = ((z,) + c)[:m].

Contexts without EMPTY form a closed block; the remaining contexts are
transient, so the spectral radius is the Perron root of the full block.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

EMPTY = -1


class RuelleError(RuntimeError):
    """Numerical failure (non-convergence, degenerate eigenfunction)."""


@dataclass(frozen=True)
class Alphabet:
    names: tuple
    V: np.ndarray            # (N, d) integer observable

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.V, dtype=np.int64))
        if V.shape[0] != len(self.names):
            V = V.T if V.shape[1] == len(self.names) else V
        if V.shape[0] != len(self.names):
            raise ValueError("observable does not match alphabet size")
        object.__setattr__(self, "V", V)

    @property
    def size(self) -> int:
        return len(self.names)

    @property
    def d(self) -> int:
        return self.V.shape[1]

    @classmethod
    def simple(cls, V: Sequence) -> "Alphabet":
        V = np.asarray(V)
        if V.ndim == 1:
            V = V[:, None]
        return cls(tuple(str(i) for i in range(len(V))), V)


def check_aperiodic(V: np.ndarray) -> None:
    """Aperiodicity guard: differences V(z) - V(z0) span Z^d (rank d, minors with gcd 1)."""
    V = np.asarray(V, dtype=np.int64)
    d = V.shape[1]
    D = V[1:] - V[0]
    if len(D) < d or np.linalg.matrix_rank(D.astype(float)) < d:
        raise ValueError("observable not truly d-dimensional")
    g = 0
    for rows in itertools.combinations(range(len(D)), d):
        g = math.gcd(g, int(round(abs(np.linalg.det(D[list(rows)].astype(float))))))
        if g == 1:
            return
    raise ValueError("observable not truly d-dimensional")


def _contexts(N: int, m: int) -> list:
    out = []
    for k in range(m, -1, -1):
        for head in itertools.product(range(N), repeat=k):
            out.append(tuple(head) + (EMPTY,) * (m - k))
    return out


@dataclass
class SpectralData:
    rho: float
    h: np.ndarray                  # on all contexts, h(EMPTY^m) = 1
    left: np.ndarray               # left Perron vector on the full block
    gap: float
    iterations: int
    residual: float
    lam2: float = 0.0
    bounds: tuple = (0.0, 0.0)     # Collatz-Wielandt bracket


class RuelleOperator:
    """Finite-context realisation of L with weights w[c, z] = exp(psi(z, c))."""

    def __init__(self, alphabet: Alphabet, m: int, logw: np.ndarray | None = None,
                 weights: np.ndarray | None = None, theta: float = 0.5):
        if m < 0:
            raise ValueError("depth must be >= 0")
        if not 0 < theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        self.alphabet = alphabet
        self.m = m
        self.theta = theta
        N = alphabet.size
        self.contexts = _contexts(N, m)
        self.index = {c: i for i, c in enumerate(self.contexts)}
        self.succ = np.array([[self.index[((z,) + c)[:m]] for z in range(N)] for c in self.contexts],
                             dtype=np.int64).reshape(len(self.contexts), N)
        self.full = np.array([EMPTY not in c for c in self.contexts])
        if weights is None:
            logw = np.asarray(logw, float)
            if logw.shape != (len(self.contexts), N):
                raise ValueError("potential table shape mismatch")
            weights = np.exp(logw)
        weights = np.asarray(weights)
        if weights.shape != (len(self.contexts), N):
            raise ValueError("potential table shape mismatch")
        if not np.all(np.isfinite(weights)):
            raise ValueError("potential not summable")
        self.weights = weights

    # construction -------------------------------------------------------
    @classmethod
    def from_function(cls, alphabet: Alphabet, m: int, psi: Callable, theta: float = 0.5) -> "RuelleOperator":
        """psi(z, context) with context a length-m tuple padded by EMPTY."""
        ctx = _contexts(alphabet.size, m)
        logw = np.array([[psi(z, c) for z in range(alphabet.size)] for c in ctx], float)
        return cls(alphabet, m, logw=logw.reshape(len(ctx), alphabet.size), theta=theta)

    @classmethod
    def iid(cls, alphabet: Alphabet, p: Sequence, theta: float = 0.5) -> "RuelleOperator":
        p = np.asarray(p, float)
        return cls(alphabet, 0, logw=np.log(p)[None, :], theta=theta)

    @classmethod
    def from_table(cls, alphabet: Alphabet, m: int, table: np.ndarray, theta: float = 0.5) -> "RuelleOperator":
        """Weights table[z, x_1, ..., x_m] on full contexts.

        Contexts with EMPTY padding receive the mean weight over all
        completions of the padded coordinates.
        """
        N = alphabet.size
        table = np.asarray(table, float)
        if table.shape != (N,) * (m + 1):
            raise ValueError("weight table must have shape (N,)*(m+1)")
        if np.any(table < 0):
            raise ValueError("weights must be nonnegative")

        def w(z, c):
            k = c.index(EMPTY) if EMPTY in c else m
            sub = table[(z,) + c[:k]]
            return float(np.mean(sub))

        with np.errstate(divide="ignore"):
            return cls.from_function(alphabet, m, lambda z, c: math.log(w(z, c)) if w(z, c) > 0 else -np.inf,
                                     theta=theta)

    @classmethod
    def from_matrix(cls, alphabet: Alphabet, M: np.ndarray, theta: float = 0.5) -> "RuelleOperator":
        """Depth-1 operator with psi(z, x_1) = log M[z, x_1]."""
        return cls.from_table(alphabet, 1, np.asarray(M, float), theta=theta)

    # basic access -------------------------------------------------------
    @property
    def logw(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.weights))

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.weights)

    def psi(self, z: int, context: tuple) -> float:
        return float(self.logw[self.index[tuple(context)], z])

    def apply(self, f, context=None):
        """L f on every context, or at one context if given."""
        f = np.asarray(f)
        if f.shape[0] != len(self.contexts):
            raise ValueError("depth mismatch: function must live on depth-%d contexts" % self.m)
        Lf = np.einsum("cz,cz...->c...", self.weights, f[self.succ])
        if context is None:
            return Lf
        return Lf[self.index[tuple(context)]]

    def cylinder_function(self, func: Callable) -> np.ndarray:
        return np.array([func(c) for c in self.contexts], dtype=float)

    def matrix(self) -> np.ndarray:
        C = len(self.contexts)
        A = np.zeros((C, C), dtype=self.weights.dtype)
        np.add.at(A, (np.repeat(np.arange(C), self.alphabet.size), self.succ.ravel()), self.weights.ravel())
        return A

    def full_block(self) -> np.ndarray:
        idx = np.flatnonzero(self.full)
        return self.matrix()[np.ix_(idx, idx)]

    def _with_weights(self, weights: np.ndarray) -> "RuelleOperator":
        out = object.__new__(RuelleOperator)
        out.__dict__.update(self.__dict__)
        out.weights = weights
        return out

    def lift(self, k: int) -> "RuelleOperator":
        """Same potential on depth-k contexts (k >= m); extra coordinates are ignored."""
        if k < self.m:
            raise ValueError("cannot lower the depth")
        if k == self.m:
            return self
        ctx = _contexts(self.alphabet.size, k)
        rows = [self.index[c[:self.m]] for c in ctx]
        op = RuelleOperator.__new__(RuelleOperator)
        RuelleOperator.__init__(op, self.alphabet, k, weights=self.weights[rows], theta=self.theta)
        return op

    # transformations ----------------------------------------------------
    def tilted(self, xi) -> "RuelleOperator":
        xi = np.atleast_1d(np.asarray(xi, float))
        return self._with_weights(self.weights * np.exp(self.alphabet.V @ xi)[None, :])

    def fourier_symbol(self, tau) -> "RuelleOperator":
        tau = np.atleast_1d(np.asarray(tau, float))
        return self._with_weights(self.weights * np.exp(1j * (self.alphabet.V @ tau))[None, :])

    def truncate(self, N: int) -> "RuelleOperator":
        """Restrict to the first N symbols (plus EMPTY)."""
        if N < 1:
            raise ValueError("truncation level must be >= 1")
        if N > self.alphabet.size:
            raise ValueError("truncation level exceeds alphabet size")
        alph = Alphabet(self.alphabet.names[:N], self.alphabet.V[:N])
        ctx = _contexts(N, self.m)
        rows = [self.index[c] for c in ctx]
        return RuelleOperator(alph, self.m, weights=self.weights[rows][:, :N], theta=self.theta)

    # Hölder data --------------------------------------------------------
    def holder_seminorm(self) -> float:
        """max_k var_k(psi)/theta^k, var_k over strings first differing at coordinate k >= 2."""
        if self.m == 0:
            return 0.0
        lw = self.logw
        best = 0.0
        for k in range(2, self.m + 2):
            groups: dict = {}
            for i, c in enumerate(self.contexts):
                groups.setdefault(c[:k - 2], []).append(i)
            var = 0.0
            for rows in groups.values():
                block = lw[rows]
                finite = np.where(np.isfinite(block), block, np.nan)
                if np.all(np.isnan(finite)):
                    continue
                var = max(var, float(np.nanmax(np.nanmax(finite, 0) - np.nanmin(finite, 0))))
            best = max(best, var / self.theta ** k)
        return best

    @property
    def beta_bar(self) -> float:
        return self.holder_seminorm() / (1 - self.theta)

    # spectra ------------------------------------------------------------
    def _full_indices(self):
        idx = np.flatnonzero(self.full)
        pos = -np.ones(len(self.contexts), dtype=np.int64)
        pos[idx] = np.arange(len(idx))
        return idx, pos[self.succ[idx]]

    def dense_eigenvalues(self) -> np.ndarray:
        ev = np.linalg.eigvals(self.full_block())
        return ev[np.argsort(-np.abs(ev))]

    def spectral_radius(self) -> float:
        return float(np.abs(self.dense_eigenvalues()[0]))

    def spectral_data(self, tol: float = 1e-12, max_iter: int = 100_000, gap_iter: int = 400) -> SpectralData:
        if self.is_complex:
            raise ValueError("spectral_data needs a real operator")
        idx, succ = self._full_indices()
        W = self.weights[idx]
        n = len(idx)

        def mv(f):
            return (W * f[succ]).sum(1)

        def vm(l):
            out = np.zeros(n)
            np.add.at(out, succ.ravel(), (W * l[:, None]).ravel())
            return out

        h = np.ones(n)
        lo = hi = 0.0
        for it in range(1, max_iter + 1):
            Lh = mv(h)
            if np.any(Lh <= 0):
                raise RuelleError("eigenfunction touches zero: full block not irreducible")
            r = Lh / h
            lo, hi = float(r.min()), float(r.max())
            h = Lh / Lh.max()
            if hi - lo <= tol * hi:
                break
        else:
            raise RuelleError("power iteration did not converge: residual %.3e" % (hi - lo))
        rho = 0.5 * (lo + hi)
        l = np.ones(n)
        for _ in range(max_iter):
            ln = vm(l)
            ln = ln / ln.sum()
            done = np.max(np.abs(ln - l)) <= tol * np.max(ln)
            l = ln
            if done:
                break
        l = l / (l @ h)
        # deflated iteration for |lambda_2|
        lam2 = 0.0
        if n > 1:
            v = np.random.default_rng(12345).standard_normal(n)
            v -= h * (l @ v)
            v /= np.linalg.norm(v)
            logs = []
            for _ in range(gap_iter):
                v = mv(v) - rho * h * (l @ v)
                nv = float(np.linalg.norm(v))
                if nv <= 1e-14 * rho:
                    logs = []
                    break
                logs.append(math.log(nv))
                v /= nv
            if logs:
                lam2 = math.exp(float(np.mean(logs[len(logs) // 2:])))
        hall = self._extend_h(h, rho)
        resid = float(np.max(np.abs(self.apply(hall) - rho * hall)))
        return SpectralData(rho, hall, l, lam2 / rho, it, resid, lam2, (lo, hi))

    def _extend_h(self, hfull: np.ndarray, rho: float) -> np.ndarray:
        """Fill transient contexts from h(c) = rho^-1 sum_z w h(next); h(EMPTY^m) = 1."""
        h = np.full(len(self.contexts), np.nan)
        h[self.full] = hfull
        order = sorted(range(len(self.contexts)), key=lambda i: self.contexts[i].count(EMPTY))
        for i in order:
            if not self.full[i]:
                h[i] = float((self.weights[i] * h[self.succ[i]]).sum()) / rho
        return h / h[self.index[(EMPTY,) * self.m]]

    def normalize(self, spectral: SpectralData | None = None, tol: float = 1e-10) -> "RuelleOperator":
        sd = spectral or self.spectral_data()
        if sd.residual > 1e-8 * max(1.0, sd.rho):
            raise RuelleError("spectral residual too large: %.3e" % sd.residual)
        h = sd.h
        if np.any(h <= 0):
            raise RuelleError("eigenfunction touches zero")
        w = self.weights * h[self.succ] / h[:, None] / sd.rho
        op = self._with_weights(w)
        err = float(np.max(np.abs(op.apply(np.ones(len(self.contexts))) - 1)))
        if err > tol:
            raise RuelleError("normalization failed: |L1-1| = %.3e" % err)
        return op

    # projector ----------------------------------------------------------
    def projector_coefficient(self, g, max_iter: int = 10_000, tol: float = 1e-13) -> dict:
        """c(g) = lim L^n g on a normalized operator, with per-context spread and rate."""
        g = np.asarray(g, float)
        if np.any(g <= 0):
            raise ValueError("g must be positive")
        f = g.copy()
        diffs = []
        for it in range(1, max_iter + 1):
            fn = self.apply(f)
            diffs.append(float(np.max(np.abs(fn - f))))
            f = fn
            if diffs[-1] <= tol * max(1.0, float(np.max(np.abs(f)))):
                break
        else:
            raise RuelleError("projector iteration did not converge")
        full = f[self.full]
        ratios = [diffs[i + 1] / diffs[i] for i in range(len(diffs) - 1)
                  if diffs[i] > 1e3 * tol and diffs[i + 1] > 1e3 * tol]
        rate = float(np.median(ratios[-5:])) if ratios else 0.0
        return {"c": float(full.mean()), "per_context": f, "spread": float(full.max() - full.min()),
                "iterations": it, "rate": rate}

    # scans ----------------------------------------------------------------
    def string_sup_sum(self, n: int) -> float:
        """sum over z in S^n of sup_x exp(Psi_n(z|x)), by enumeration."""
        N = self.alphabet.size
        total = 0.0
        for zs in itertools.product(range(N), repeat=n):
            # Psi_n(z|x) = sum_k psi(z_k, (z_{k+1},...,z_n, x))
            cur = np.arange(len(self.contexts))
            lw = np.zeros(len(self.contexts))
            for z in reversed(zs):
                lw = lw + self.logw[cur, z]
                cur = self.succ[cur, z]
            total += float(np.exp(lw).max())
        return total


def log_rho(op: RuelleOperator, xi) -> float:
    return math.log(op.tilted(xi).spectral_radius())


def off_axis_scan(op: RuelleOperator, delta: float, n_grid: int = 64) -> dict:
    """max |rho(L_{i tau})| over the grid part of [-pi, pi)^d with |tau|_inf >= delta."""
    check_aperiodic(op.alphabet.V)
    d = op.alphabet.d
    axis = np.concatenate([np.linspace(-np.pi, np.pi, n_grid, endpoint=False), [-delta, delta]])
    axis = np.unique(axis)
    best, arg = 0.0, None
    for tau in itertools.product(axis, repeat=d):
        tau = np.asarray(tau)
        if np.max(np.abs(tau)) < delta - 1e-15:
            continue
        r = float(np.abs(op.fourier_symbol(tau).dense_eigenvalues()[0]))
        if r > best:
            best, arg = r, tau
    rho0 = op.spectral_radius()
    return {"max": best / rho0, "argmax": arg, "eta": 1 - best / rho0, "delta": delta}


def parse_alphabet(text: str) -> tuple:
    """Alphabet file: `symbol : V components : weights`.

    One weight gives an i.i.d. model; N**m weights (row-major over the context
    x_1..x_m) give a depth-m table.  Returns (Alphabet, RuelleOperator).
    """
    names, Vs, ws = [], [], []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(":")]
        if len(parts) != 3:
            raise ValueError("alphabet line must read 'symbol : V : weights': %r" % raw)
        names.append(parts[0])
        Vs.append([int(v) for v in parts[1].replace(",", " ").split()])
        ws.append([float(v) for v in parts[2].replace(",", " ").split()])
    if not names:
        raise ValueError("empty alphabet")
    if len({len(v) for v in Vs}) != 1:
        raise ValueError("inconsistent observable dimension")
    N = len(names)
    counts = {len(w) for w in ws}
    if len(counts) != 1:
        raise ValueError("inconsistent weight-table sizes")
    k = counts.pop()
    m = round(math.log(k, N)) if N > 1 else 0
    if N ** m != k:
        raise ValueError("weight count must be a power of the alphabet size")
    alph = Alphabet(tuple(names), np.array(Vs))
    if m == 0:
        return alph, RuelleOperator.iid(alph, [w[0] for w in ws])
    table = np.array(ws).reshape((N,) * (m + 1))
    return alph, RuelleOperator.from_table(alph, m, table)
