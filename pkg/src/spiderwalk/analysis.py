"""Electrical-network and spectral diagnostics on finite window graphs.

Resistances use the unnormalized reversible weights, so R_e is the same
from both endpoints of an edge. The congestion constant uses the
normalized weights, which makes 1/A a lower bound on the spectral gap.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .env import Environment, hill_height, potential
from .errors import DisconnectedWindowError, PathFailure, TooLargeError
from .spider import (LocalConfigSet, SpiderGraphWindow, SpiderState, log_pi,
                     measure_sandwich_constants)


def environment_hash(env: Environment, lo: int, hi: int) -> str:
    """Short digest of the right-jump probabilities on sites lo..hi."""
    h = hashlib.sha256(np.ascontiguousarray(env.omegas(lo, hi)).tobytes())
    h.update(f"{lo}:{hi}".encode())
    return h.hexdigest()[:16]


# --------------------------------------------------------------------------
# resistance series
# --------------------------------------------------------------------------


def edge_resistance(env: Environment, x, y, rate: float) -> float:
    """R = 1 / (q(x, y) pi(x)) with unnormalized pi; ``y`` is informational."""
    return math.exp(-math.log(rate) - log_pi(env, x))


def _move_rate(env, x, y):
    diff = [i for i, (u, v) in enumerate(zip(x, y)) if u != v]
    if len(diff) != 1 or abs(y[diff[0]] - x[diff[0]]) != 1:
        raise ValueError(f"{x} -> {y} is not a single-leg move")
    leg = diff[0]
    w = env.omega(x[leg])
    return w if y[leg] > x[leg] else 1.0 - w


def connector_path(L: LocalConfigSet):
    """gamma_0: canonical within-level shape path from r2 to r1 (shape indices)."""
    p = L.level_path(L.anchor[1], L.anchor[0])
    if p is None:
        raise PathFailure("anchor shapes are not connected inside L")
    return p


@dataclass(frozen=True)
class ResistanceSeries:
    """Partial sums R_0..R_n of the linear sub-network G'.

    ``tail_fraction`` is (R_n - R_{floor(3n/4)}) / R_n; the series is called
    converged when it is below ``tol``.
    """

    partial_sums: np.ndarray
    majorant: np.ndarray
    tail_fraction: float
    tol: float

    @property
    def n(self):
        return self.partial_sums.size - 1

    @property
    def converged(self):
        return self.tail_fraction < self.tol

    @property
    def verdict(self):
        return "converged" if self.converged else "diverging"

    def to_dict(self):
        return {"n": self.n, "R_n": float(self.partial_sums[-1]),
                "majorant_n": float(self.majorant[-1]),
                "tail_fraction": self.tail_fraction, "tol": self.tol,
                "verdict": self.verdict}


def resistance_series(L: LocalConfigSet, env: Environment, n: int, tol: float = 1e-3,
                      delta: float | None = None) -> ResistanceSeries:
    """Resistances of G' level by level.

    Level x contributes the connector gamma_0 from Theta_x r2 to Theta_x r1
    and the leg-1 up edge from Theta_x r1 to Theta_{x+1} r2; the pieces are
    in series, so R_n is their cumulative sum over x = 0..n.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    delta = env.spec.delta if delta is None else delta
    K3, _ = measure_sandwich_constants(L, delta)
    r1 = L.r1
    gamma0 = [L.configs[s] for s in connector_path(L)]
    per_level = np.empty(n + 1)
    for x in range(n + 1):
        R = 0.0
        for u, v in zip(gamma0[:-1], gamma0[1:]):
            su = tuple(x + c for c in u)
            sv = tuple(x + c for c in v)
            R += edge_resistance(env, su, sv, _move_rate(env, su, sv))
        top = tuple(x + c for c in r1)
        R += edge_resistance(env, top, None, env.omega(x))
        per_level[x] = R
    sums = np.cumsum(per_level)
    V = potential(env, 0, n).segment(0, n)
    major = len(L) / (delta * K3) * np.cumsum(np.exp(L.n_legs * V))
    q = (3 * n) // 4
    tail = float((sums[n] - sums[q]) / sums[n])
    return ResistanceSeries(sums, major, tail, tol)


def conductance_edges(graph: SpiderGraphWindow):
    """Undirected edges ``(u, v, C)`` with C = q(u, v) pi(u), u < v."""
    pi = graph.pi
    out = []
    for u, v, r in zip(graph.src, graph.dst, graph.rate):
        if u < v:
            out.append((int(u), int(v), float(r * pi[u])))
    return out


def effective_resistance(n_vertices: int, edges, A, B, max_vertices: int = 20) -> float:
    """Effective resistance between vertex sets A (potential 1) and B (0).

    ``edges`` is a list of ``(u, v, conductance)``. Returns inf when no
    current can flow.
    """
    if n_vertices > max_vertices:
        raise TooLargeError(f"{n_vertices} vertices > {max_vertices}")
    A, B = set(A), set(B)
    if A & B:
        raise ValueError("A and B must be disjoint")
    W = np.zeros((n_vertices, n_vertices))
    for u, v, c in edges:
        W[u, v] += c
        W[v, u] += c
    Lap = np.diag(W.sum(axis=1)) - W
    phi = np.zeros(n_vertices)
    phi[list(A)] = 1.0
    free = [i for i in range(n_vertices) if i not in A and i not in B]
    if free:
        M = Lap[np.ix_(free, free)]
        rhs = -Lap[np.ix_(free, sorted(A))].sum(axis=1)
        sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
        phi[free] = sol
    current = float((Lap @ phi)[sorted(A)].sum())
    return math.inf if current <= 0 else 1.0 / current


# --------------------------------------------------------------------------
# canonical paths and congestion
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CanonicalPathSet:
    """gamma(x, y) for every ordered pair of window vertices, as vertex-id lists."""

    graph: SpiderGraphWindow
    paths: dict

    def path(self, x, y):
        return self.paths[(x, y)]

    def length(self, x, y):
        return len(self.paths[(x, y)]) - 1

    @property
    def max_length(self):
        return max((len(p) - 1 for p in self.paths.values()), default=0)

    def edges(self, x, y):
        p = self.paths[(x, y)]
        return list(zip(p[:-1], p[1:]))


def _upward_path(graph, L, i, s, j, t):
    """Vertex ids from (level i, shape s) to (level j, shape t), i < j."""
    r1, r2 = L.anchor
    out = []

    def within(level, a, b):
        p = L.level_path(a, b)
        if p is None:
            raise PathFailure(f"shapes {L.configs[a]} and {L.configs[b]} not connected")
        return [graph.vertex_id(level, q) for q in p]

    out.extend(within(i, s, r1))
    for level in range(i + 1, j):
        out.extend(within(level, r2, r1))
    out.extend(within(j, r2, t))
    return out


def canonical_paths(graph: SpiderGraphWindow) -> CanonicalPathSet:
    """Build gamma for all ordered pairs.

    Same level: the canonical within-level path. Different levels: go to r1,
    climb the anchor ladder (leg-1 up to r2 then within-level to r1) and
    finish with the within-level path from r2. Downward paths are reversals.
    """
    L = graph.L
    S = len(L)
    edges = set(zip(graph.src.tolist(), graph.dst.tolist()))
    paths = {}
    for x in range(graph.n):
        i, s = graph.a + x // S, x % S
        for y in range(graph.n):
            j, t = graph.a + y // S, y % S
            if j < i or (j == i and y < x):
                continue
            if i == j:
                p = L.level_path(s, t)
                if p is None:
                    raise PathFailure(f"shapes {L.configs[s]} and {L.configs[t]} not connected")
                p = [graph.vertex_id(i, q) for q in p]
            else:
                p = _upward_path(graph, L, i, s, j, t)
            for e in zip(p[:-1], p[1:]):
                if e not in edges:
                    raise PathFailure(f"path uses missing edge {e}")
            paths[(x, y)] = p
            paths[(y, x)] = p[::-1]
    return CanonicalPathSet(graph, paths)


@dataclass(frozen=True)
class GapBoundReport:
    A: float
    bound: float
    exact_gap: float | None
    window: tuple
    env_hash: str
    worst_edge: tuple

    @property
    def holds(self):
        return None if self.exact_gap is None else self.exact_gap >= self.bound * (1 - 1e-9)

    def to_dict(self):
        return {"A": self.A, "bound": self.bound, "exact_gap": self.exact_gap,
                "window": list(self.window), "env_hash": self.env_hash,
                "worst_edge": list(self.worst_edge), "holds": self.holds}


def inflated_window(L: LocalConfigSet, interval, steps: int = 0):
    """Extend [a, b] to [a, b + steps * d], d the diameter of L.

    steps = 1, 2, 3 give the windows ending at b_1, b_2, b_3. The bound
    1/A <= gap is checked on whatever window is passed; inflation only
    changes which graph that is.
    """
    a, b = int(interval[0]), int(interval[1])
    if steps < 0:
        raise ValueError("steps must be >= 0")
    return a, b + steps * L.diameter


def congestion(paths: CanonicalPathSet):
    """A = max over oriented edges e of R_e sum_{gamma ∋ e} |gamma| pi^(x) pi^(y).

    R_e = 1 / (q(e) pi^(e-)) with the normalized weights pi^. Returns
    ``(A, worst edge)``.
    """
    g = paths.graph
    ph = g.pi_hat
    rate = g.edge_map()
    load = {}
    for (x, y), p in paths.paths.items():
        if x == y:
            continue
        w = (len(p) - 1) * ph[x] * ph[y]
        for e in zip(p[:-1], p[1:]):
            load[e] = load.get(e, 0.0) + w
    best, worst = 0.0, (-1, -1)
    for e, s in load.items():
        val = s / (rate[e] * ph[e[0]])
        if val > best:
            best, worst = val, e
    return best, worst


def congestion_bound(paths: CanonicalPathSet, env: Environment | None = None,
                     with_exact: bool = False) -> GapBoundReport:
    g = paths.graph
    A, worst = congestion(paths)
    lam = exact_gap(g) if with_exact else None
    h = ""
    if env is not None:
        lo, hi = g.L.offset_range
        h = environment_hash(env, g.a + lo, g.b + hi)
    return GapBoundReport(A=A, bound=(1.0 / A if A > 0 else math.inf), exact_gap=lam,
                          window=(g.a, g.b), env_hash=h,
                          worst_edge=tuple(tuple(int(c) for c in g.vertices[v]) for v in worst))


# --------------------------------------------------------------------------
# exact spectrum and transition probabilities
# --------------------------------------------------------------------------


def generator_gap(Q: np.ndarray, weights: np.ndarray) -> float:
    """Smallest nonzero eigenvalue of -Q for a generator reversible w.r.t. ``weights``."""
    Q = np.asarray(Q, dtype=float)
    w = np.asarray(weights, dtype=float)
    n = Q.shape[0]
    if n < 2:
        raise DisconnectedWindowError("a single vertex has no gap")
    off = (Q > 0) | (Q.T > 0)
    np.fill_diagonal(off, False)
    adj = csr_matrix(off)
    k, _ = connected_components(adj, directed=False)
    if k > 1:
        raise DisconnectedWindowError(f"window graph has {k} components")
    d = np.sqrt(w / w.sum())
    S = (d[:, None] * Q) / d[None, :]
    S = 0.5 * (S + S.T)
    ev = np.sort(np.linalg.eigvalsh(-S))
    return float(ev[1])


def exact_gap(graph: SpiderGraphWindow, cap: int = 200) -> float:
    """Spectral gap of the window chain via the pi^-symmetrized generator."""
    if graph.n > cap:
        raise TooLargeError(f"{graph.n} vertices > cap {cap}")
    return generator_gap(graph.generator(), graph.pi_hat)


def transition_probabilities(Q: np.ndarray, u: float, tol: float = 1e-15) -> np.ndarray:
    """P(u) = exp(uQ) by uniformization: sum_k Poisson(Lambda u; k) P^k."""
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    lam = float(np.max(-np.diag(Q))) if n else 0.0
    if lam == 0.0 or u == 0.0:
        return np.eye(n)
    P = np.eye(n) + Q / lam
    mu = lam * u
    term = np.eye(n)
    weight = math.exp(-mu)
    out = weight * term
    acc = weight
    k = 0
    while 1.0 - acc > tol or k < mu:
        k += 1
        term = term @ P
        weight *= mu / k
        out += weight * term
        acc += weight
        if k > 10 * mu + 200:
            break
    return out


def occupation_asymmetry(graph: SpiderGraphWindow, u: float) -> float:
    """max_{x,y} |pi(x)P_x[S(u)=y] - pi(y)P_y[S(u)=x]| / max pi(x)P_x[S(u)=y]."""
    P = transition_probabilities(graph.generator(), u)
    F = graph.pi_hat[:, None] * P
    return float(np.max(np.abs(F - F.T)) / np.max(np.abs(F)))


# --------------------------------------------------------------------------
# confinement
# --------------------------------------------------------------------------


def confinement_height(env: Environment, L: LocalConfigSet, a: int, b: int) -> float:
    """H over [a, b + d], d the diameter of L."""
    b1 = b + L.diameter
    prof = potential(env, min(a, 0), max(b1, 0))
    return hill_height(prof, a, b1)


def confinement_bound(env: Environment, L: LocalConfigSet, a: int, b: int, t: float,
                      K5: float = 1.0) -> float:
    """exp(-t / (K5 (b - a)^5 e^{N H})), an upper bound shape for P[tau_{a,b} > t]."""
    if b <= a:
        raise ValueError("need a < b")
    H = confinement_height(env, L, a, b)
    log_scale = math.log(K5) + 5 * math.log(b - a) + L.n_legs * H
    return math.exp(-t * math.exp(-log_scale))


def empirical_survival(times: np.ndarray, censored: np.ndarray, ts) -> np.ndarray:
    """P[tau > t] for each t; censored samples count as survivors."""
    times = np.asarray(times, dtype=float)
    censored = np.asarray(censored, dtype=bool)
    return np.array([np.mean(censored | (times > t)) for t in np.atleast_1d(ts)])


def window_states(graph: SpiderGraphWindow):
    return [SpiderState(v) for v in graph.vertices]
