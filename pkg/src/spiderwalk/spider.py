"""Local configuration sets, spider graphs and the reversible measure.

A spider state is an N-tuple of leg positions; its *shape* is the tuple
shifted so that leg 1 sits at 0. Moves are single-leg +-1 jumps whose
target shape is again in L. Move ``k`` moves leg ``k // 2`` up when ``k`` is
even and down when ``k`` is odd; every table below uses that order.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .env import Environment, potential
from .errors import (
    DisconnectedError,
    InvalidStateError,
    NoForwardEdgeError,
    NotAnchoredError,
)


class SpiderState(tuple):
    """Leg positions ``(x_1, ..., x_N)``."""

    def __new__(cls, positions):
        return super().__new__(cls, (int(p) for p in positions))

    @property
    def x1(self):
        return self[0]

    @property
    def shape(self):
        return tuple(p - self[0] for p in self)

    def shifted(self, by):
        return SpiderState(p + by for p in self)


def _fmt_tuple(t):
    return "(" + ",".join(str(int(v)) for v in t) + ")"


@dataclass(frozen=True)
class LocalConfigSet:
    """A validated restriction set L; build with :func:`validate_L`."""

    n_legs: int
    configs: tuple
    diameter: int
    anchor: tuple  # (r1 index, r2 index)
    _index: dict = field(repr=False, compare=False)

    def __len__(self):
        return len(self.configs)

    def index(self, shape):
        return self._index[tuple(shape)]

    def __contains__(self, shape):
        return tuple(shape) in self._index

    def label(self, shape):
        """Enumeration n(.) in 1..|L| (lexicographic order)."""
        return self._index[tuple(shape)] + 1

    @property
    def r1(self):
        return self.configs[self.anchor[0]]

    @property
    def r2(self):
        return self.configs[self.anchor[1]]

    @property
    def reach(self):
        """max over shapes of max_i |x_i - x_1|."""
        return max(max(abs(c) for c in cfg) for cfg in self.configs)

    @property
    def offset_range(self):
        return (min(min(cfg) for cfg in self.configs),
                max(max(cfg) for cfg in self.configs))

    @cached_property
    def tables(self):
        """``(to_shape, dx1, site_off, is_up)`` arrays for the kernels."""
        S, M = len(self.configs), 2 * self.n_legs
        to_shape = np.full((S, M), -1, dtype=np.int64)
        dx1 = np.zeros((S, M), dtype=np.int64)
        site_off = np.zeros((S, M), dtype=np.int64)
        is_up = np.array([k % 2 == 0 for k in range(M)])
        for s, cfg in enumerate(self.configs):
            for k in range(M):
                leg, step = k // 2, (1 if k % 2 == 0 else -1)
                site_off[s, k] = cfg[leg]
                if leg == 0:
                    new = (0,) + tuple(c - step for c in cfg[1:])
                    dx1[s, k] = step
                else:
                    new = cfg[:leg] + (cfg[leg] + step,) + cfg[leg + 1:]
                to_shape[s, k] = self._index.get(new, -1)
        for arr in (to_shape, dx1, site_off, is_up):
            arr.flags.writeable = False
        return to_shape, dx1, site_off, is_up

    @cached_property
    def level_adjacency(self):
        """Within-level neighbours of each shape (legs 2..N moving)."""
        to_shape = self.tables[0]
        adj = []
        for s in range(len(self.configs)):
            nb = {int(to_shape[s, k]) for k in range(2, 2 * self.n_legs) if to_shape[s, k] >= 0}
            adj.append(tuple(sorted(nb)))
        return tuple(adj)

    def _greedy_path(self, src, dst):
        adj = self.level_adjacency
        dist = {dst: 0}
        queue = deque([dst])
        while queue:
            u = queue.popleft()
            for w in adj[u]:
                if w not in dist:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        if src not in dist:
            return None
        path = [src]
        u = src
        while u != dst:
            u = min(w for w in adj[u] if dist.get(w, -1) == dist[u] - 1)
            path.append(u)
        return path

    def level_path(self, src, dst):
        """Canonical within-level path between shape indices.

        Shortest first, then lexicographically smallest label sequence,
        computed from the lower-labelled end and reversed otherwise.
        Returns ``None`` if the shapes are not connected inside L.
        """
        cache = self.__dict__.setdefault("_path_cache", {})
        key = (src, dst)
        if key not in cache:
            if src <= dst:
                cache[key] = self._greedy_path(src, dst)
            else:
                p = self.level_path(dst, src)
                cache[key] = None if p is None else p[::-1]
        return cache[key]

    def to_text(self):
        lines = [f"N {self.n_legs}"] + [" ".join(str(c) for c in cfg) for cfg in self.configs]
        return "\n".join(lines) + "\n"


def _parse_L_text(text):
    n_legs = None
    configs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "N":
            n_legs = int(parts[1])
            continue
        cfg = tuple(int(p) for p in parts)
        if n_legs is not None and len(cfg) != n_legs:
            raise ValueError(f"line {lineno}: expected {n_legs} integers, got {len(cfg)}")
        configs.append(cfg)
    if n_legs is None:
        raise ValueError("L file has no 'N <int>' header")
    return n_legs, configs


def load_L(path):
    with open(path, encoding="utf-8") as fh:
        n_legs, configs = _parse_L_text(fh.read())
    return validate_L(configs, n_legs)


def parse_L(text):
    n_legs, configs = _parse_L_text(text)
    return validate_L(configs, n_legs)


def validate_L(configs, n_legs=None) -> LocalConfigSet:
    """Validate conditions (i) and (ii) and enumerate L.

    Raises NotAnchoredError, DisconnectedError or NoForwardEdgeError.
    """
    configs = [tuple(int(c) for c in cfg) for cfg in configs]
    if not configs:
        raise ValueError("L is empty")
    if n_legs is None:
        n_legs = len(configs[0])
    if any(len(cfg) != n_legs for cfg in configs):
        raise ValueError("all configurations must have N coordinates")
    for cfg in configs:
        if cfg[0] != 0:
            raise NotAnchoredError(f"configuration {cfg} has x_1 = {cfg[0]} != 0")
    configs = tuple(sorted(set(configs)))
    index = {cfg: i for i, cfg in enumerate(configs)}
    diameter = max(max(abs(a - b) for a, b in zip(u, v)) for u in configs for v in configs)

    probe = LocalConfigSet(n_legs, configs, diameter, (-1, -1), index)
    adj = probe.level_adjacency
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    if len(seen) != len(configs):
        missing = [configs[i] for i in range(len(configs)) if i not in seen]
        raise DisconnectedError(f"L is not connected by single-leg moves; unreachable: {missing}")

    to_shape = probe.tables[0]
    anchor = None
    for s in range(len(configs)):
        if to_shape[s, 0] >= 0:
            anchor = (s, int(to_shape[s, 0]))
            break
    if anchor is None:
        raise NoForwardEdgeError("no edge joins L and L_1")
    return LocalConfigSet(n_legs, configs, diameter, anchor, index)


def random_local_config_set(gen: np.random.Generator, n_legs: int, size: int,
                            spread: int = 2, max_tries: int = 10_000) -> LocalConfigSet:
    """Rejection-sample a valid L with ``size`` shapes and offsets in [-spread, spread]."""
    if n_legs == 1:
        return validate_L([(0,)])
    for _ in range(max_tries):
        cfgs = set()
        while len(cfgs) < size:
            cfgs.add((0,) + tuple(int(v) for v in gen.integers(-spread, spread + 1, n_legs - 1)))
        try:
            return validate_L(sorted(cfgs), n_legs)
        except (DisconnectedError, NoForwardEdgeError):
            continue
    raise RuntimeError(f"no valid L with N={n_legs}, |L|={size} after {max_tries} tries")


def check_state(state, L: LocalConfigSet) -> SpiderState:
    state = SpiderState(state)
    if len(state) != L.n_legs or state.shape not in L:
        raise InvalidStateError(f"{tuple(state)} is not a vertex of the spider graph")
    return state


def neighbors(state, env: Environment, L: LocalConfigSet):
    """Legal single-leg moves from ``state`` with their rates, in move order."""
    state = check_state(state, L)
    to_shape, dx1, site_off, is_up = L.tables
    s = L.index(state.shape)
    out = []
    for k in range(2 * L.n_legs):
        if to_shape[s, k] < 0:
            continue
        leg = k // 2
        w = env.omega(state[leg])
        rate = w if is_up[k] else 1.0 - w
        step = 1 if is_up[k] else -1
        target = list(state)
        target[leg] += step
        out.append((SpiderState(target), rate))
    return out


# --------------------------------------------------------------------------
# reversible measure
# --------------------------------------------------------------------------


def log_theta(env: Environment, x):
    """ln theta_x with theta_x = e^{-V(x)} + e^{-V(x+1)} = e^{-V(x)} / (1 - w(x)).

    This is the single-walker reversible weight for right-jump probability
    w(x) at site x.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=np.int64))
    lo, hi = int(min(xs.min(), 0)), int(max(xs.max(), 0))
    prof = potential(env, lo, hi)
    V = prof.segment(lo, hi)[xs - lo]
    w = env.omegas(lo, hi)[xs - lo]
    out = -V - np.log1p(-w)
    return out if np.ndim(x) else float(out[0])


def theta(env: Environment, x):
    return np.exp(log_theta(env, x))


def log_pi(env: Environment, state):
    return float(np.sum(log_theta(env, list(state))))


def pi(env: Environment, state):
    """Unnormalized reversible weight prod_i theta_{x_i}."""
    return math.exp(log_pi(env, state))


def measure_sandwich_constants(L: LocalConfigSet, delta: float):
    """(K3, K4) with K3 e^{-N V(x_1)} <= pi(x) <= K4 e^{-N V(x_1)} for every state.

    Each theta factor lies in e^{-V(x_i)} [1 + 1/r, 1 + r] with
    r = (1 - delta)/delta, and |V(x_i) - V(x_1)| <= reach * ln r.
    """
    N = L.n_legs
    r = (1.0 - delta) / delta
    e = (L.reach + 1) * N
    return (1.0 + 1.0 / r) ** N * r ** (-e), (1.0 + r) ** N * r ** e


# --------------------------------------------------------------------------
# window graphs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SpiderGraphWindow:
    """Finite graph G_I on levels a..b with rates and reversible weights.

    Vertices are ordered by (level, shape index). ``src``, ``dst``, ``rate``
    list directed edges; both orientations are present.
    """

    L: LocalConfigSet
    a: int
    b: int
    vertices: tuple
    src: np.ndarray
    dst: np.ndarray
    rate: np.ndarray
    log_pi: np.ndarray
    _index: dict = field(repr=False, compare=False)

    @property
    def n(self):
        return len(self.vertices)

    @property
    def pi(self):
        return np.exp(self.log_pi)

    @property
    def pi_hat(self):
        m = self.log_pi.max()
        w = np.exp(self.log_pi - m)
        return w / w.sum()

    def index(self, state):
        return self._index[tuple(state)]

    def vertex_id(self, level, shape_idx):
        return (level - self.a) * len(self.L) + shape_idx

    def generator(self):
        """Dense generator matrix Q with Q[x, y] = q(x, y), rows summing to 0."""
        Q = np.zeros((self.n, self.n))
        np.add.at(Q, (self.src, self.dst), self.rate)
        Q[np.diag_indices(self.n)] = -Q.sum(axis=1)
        return Q

    def edge_map(self):
        return {(int(u), int(v)): float(r) for u, v, r in zip(self.src, self.dst, self.rate)}

    def dump_edges(self):
        """One line per directed edge: ``x-tuple y-tuple rate``."""
        lines = [
            f"{_fmt_tuple(self.vertices[u])} {_fmt_tuple(self.vertices[v])} {r:.17g}"
            for u, v, r in zip(self.src, self.dst, self.rate)
        ]
        return "\n".join(lines) + ("\n" if lines else "")


def build_graph(L: LocalConfigSet, env: Environment, interval) -> SpiderGraphWindow:
    a, b = int(interval[0]), int(interval[1])
    if b < a:
        raise ValueError(f"empty interval [{a}, {b}]")
    lo_off, hi_off = L.offset_range
    lo, hi = min(a + lo_off, 0), max(b + hi_off, 0)
    prof = potential(env, lo, hi)
    w = env.omegas(lo, hi)
    site_log_theta = -prof.segment(lo, hi) - np.log1p(-w)

    to_shape, _, site_off, is_up = L.tables
    S = len(L)
    vertices = []
    lp = np.empty(S * (b - a + 1))
    for level in range(a, b + 1):
        for s, cfg in enumerate(L.configs):
            pos = tuple(level + c for c in cfg)
            vertices.append(SpiderState(pos))
            lp[len(vertices) - 1] = site_log_theta[np.asarray(pos) - lo].sum()
    index = {tuple(v): i for i, v in enumerate(vertices)}

    src, dst, rate = [], [], []
    for i, v in enumerate(vertices):
        s = i % S
        for k in range(2 * L.n_legs):
            t = to_shape[s, k]
            if t < 0:
                continue
            leg, step = k // 2, (1 if is_up[k] else -1)
            target = list(v)
            target[leg] += step
            j = index.get(tuple(target))
            if j is None:
                continue
            wx = w[v[leg] - lo]
            src.append(i)
            dst.append(j)
            rate.append(wx if is_up[k] else 1.0 - wx)
    return SpiderGraphWindow(
        L=L, a=a, b=b, vertices=tuple(vertices),
        src=np.asarray(src, dtype=np.int64), dst=np.asarray(dst, dtype=np.int64),
        rate=np.asarray(rate, dtype=np.float64), log_pi=lp, _index=index,
    )
