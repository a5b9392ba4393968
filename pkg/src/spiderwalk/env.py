"""Random environments on Z and their potential landscape.

The environment stores the right-jump probability ``w(x)`` of every site
directly; the left-jump probability is ``1 - w(x)`` and the odds ratio is
``rho(x) = (1 - w(x)) / w(x)``. The potential satisfies ``V(0) = 0`` and
``V(x + 1) - V(x) = ln rho(x)`` on both sides of the origin.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import (
    EllipticityError,
    EmptyRangeError,
    NoRootError,
    ProbabilityMassError,
    WindowTooSmallError,
)

MASS_TOL = 1e-12
# |E ln rho| below this counts as zero drift (symmetric laws round to +-1e-17)
DRIFT_TOL = 1e-12


# --------------------------------------------------------------------------
# distributions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EnvironmentSpec:
    """Finite-atom law of the right-jump probability.

    ``atoms`` is a sequence of ``(probability, value)`` pairs. Set
    ``require_nestling=False`` to build symmetric or non-nestling laws for
    oracle checks; validation then skips condition (v).
    """

    atoms: tuple
    delta: float
    require_nestling: bool = True

    def __post_init__(self):
        atoms = tuple((float(p), float(v)) for p, v in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "delta", float(self.delta))

    @classmethod
    def uniform(cls, values, delta, require_nestling=True):
        """Equiprobable atoms."""
        values = list(values)
        p = 1.0 / len(values)
        return cls(tuple((p, v) for v in values), delta, require_nestling)

    @property
    def probs(self):
        return np.array([p for p, _ in self.atoms])

    @property
    def values(self):
        return np.array([v for _, v in self.atoms])

    @property
    def cumulative(self):
        """CDF over atoms with the last entry forced above every uniform."""
        cum = np.cumsum(self.probs)
        cum[-1] = 2.0
        return cum

    @property
    def log_rho(self):
        v = self.values
        return np.log((1.0 - v) / v)

    @property
    def mean_log_rho(self):
        return float(np.dot(self.probs, self.log_rho))

    @property
    def mean_rho(self):
        v = self.values
        return float(np.dot(self.probs, (1.0 - v) / v))

    def moment(self, kappa):
        """E[rho^kappa]."""
        return float(np.dot(self.probs, np.exp(kappa * self.log_rho)))

    def to_text(self):
        lines = [f"delta {self.delta!r}"]
        lines += [f"{p!r} {v!r}" for p, v in self.atoms]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text, require_nestling=True):
        delta = None
        atoms = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "delta":
                if len(parts) != 2:
                    raise ValueError(f"line {lineno}: expected 'delta <value>'")
                delta = float(parts[1])
                continue
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected 'prob value'")
            atoms.append((float(parts[0]), float(parts[1])))
        if delta is None:
            raise ValueError("environment file has no 'delta' header")
        if not atoms:
            raise ValueError("environment file lists no atoms")
        return cls(tuple(atoms), delta, require_nestling)

    @classmethod
    def from_file(cls, path, require_nestling=True):
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read(), require_nestling)


@dataclass(frozen=True)
class SpecReport:
    conditions: dict
    mean_log_rho: float
    nestling: bool

    @property
    def ok(self):
        return all(self.conditions.values())

    @property
    def failed(self):
        return [name for name, passed in self.conditions.items() if not passed]

    def to_dict(self):
        return {
            "conditions": dict(self.conditions),
            "mean_log_rho": self.mean_log_rho,
            "nestling": self.nestling,
            "ok": self.ok,
        }


def validate_spec(spec: EnvironmentSpec) -> SpecReport:
    """Check conditions (iii)-(v) on a finite-atom law.

    Mass and ellipticity defects raise; drift and nestling are reported.
    """
    if not spec.atoms:
        raise ValueError("spec has no atoms")
    probs, values = spec.probs, spec.values
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > MASS_TOL:
        raise ProbabilityMassError(f"atom probabilities sum to {probs.sum()!r}, not 1")
    if not 0.0 < spec.delta < 0.5:
        raise EllipticityError(f"delta={spec.delta} outside (0, 1/2)")
    bad = values[(values < spec.delta) | (values > 1.0 - spec.delta)]
    if bad.size:
        raise EllipticityError(f"atoms {bad.tolist()} outside [delta, 1 - delta]")

    support = probs > 0
    mlr = spec.mean_log_rho
    nestling = bool(np.any(values[support] > 0.5) and np.any(values[support] <= 0.5))
    conditions = {
        "iii": mlr < -DRIFT_TOL,
        "iv": True,
        "v": nestling if spec.require_nestling else True,
    }
    return SpecReport(conditions=conditions, mean_log_rho=mlr, nestling=nestling)


def kappa_solve(spec: EnvironmentSpec, tol: float = 1e-12) -> float:
    """Positive root of E[rho^kappa] = 1.

    f(kappa) = E[rho^kappa] is log-convex with f(0) = 1 and f'(0) = E[ln rho],
    so with negative drift and P[rho > 1] > 0 the positive root is unique.
    Bracketed by doubling, then bisected.
    """
    log_rho = spec.log_rho[spec.probs > 0]
    if not np.any(log_rho > 0):
        raise NoRootError("P[rho > 1] = 0: E[rho^kappa] < 1 for every kappa > 0")
    if spec.mean_log_rho >= -DRIFT_TOL:
        raise NoRootError("E[ln rho] >= 0: no positive root")

    def g(k):
        return spec.moment(k) - 1.0

    lo, hi = 0.0, 1.0
    while g(hi) < 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e6:
            raise NoRootError("failed to bracket the root")
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if abs(gm) <= tol and hi - lo < 1e-12:
            return mid
        if gm < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            break
    mid = 0.5 * (lo + hi)
    if abs(g(mid)) > tol:
        raise NoRootError(f"bisection stalled with |f - 1| = {abs(g(mid)):.3g} > tol")
    return mid


# --------------------------------------------------------------------------
# realizations
# --------------------------------------------------------------------------


class Environment:
    """Seeded realization of an i.i.d. environment.

    The value at site ``x`` is a pure function of ``(seed, x)``; the cached
    window only grows. ``overrides`` pins chosen sites to explicit values
    (used to hand-build landscapes for tests); pinned values need not be
    atoms of ``spec``.
    """

    def __init__(self, spec: EnvironmentSpec, seed: int = 0, overrides=None):
        self.spec = spec
        self.seed = int(seed)
        self.key = np.uint64(rng.env_key(self.seed))
        self._cum = spec.cumulative
        self._values = spec.values
        self._overrides = {int(k): float(v) for k, v in (overrides or {}).items()}
        self._lo = 0
        self._win = np.empty(0)
        if self._overrides:
            self.ensure(min(self._overrides), max(self._overrides))

    @classmethod
    def from_values(cls, values, origin=0, spec=None, seed=0):
        """Pin sites ``origin, origin+1, ...`` to ``values``.

        Sites outside fall back to ``spec`` (default: a single 1/2 atom).
        """
        values = [float(v) for v in values]
        if spec is None:
            lo = min(values + [0.5])
            delta = min(lo, 1 - max(values + [0.5]))
            spec = EnvironmentSpec(((1.0, 0.5),), max(min(delta, 0.49), 1e-9),
                                   require_nestling=False)
        return cls(spec, seed, {origin + i: v for i, v in enumerate(values)})

    @property
    def has_overrides(self):
        return bool(self._overrides)

    def _hashed(self, a, b):
        u = rng.uniforms(self.key, np.arange(a, b + 1, dtype=np.int64))
        idx = np.searchsorted(self._cum, u, side="right")
        return self._values[idx]

    def ensure(self, a, b):
        """Materialize sites ``a..b`` (inclusive) into the window."""
        a, b = int(a), int(b)
        if self._win.size == 0:
            lo, hi = a, b
        else:
            lo = min(a, self._lo)
            hi = max(b, self._lo + self._win.size - 1)
            if lo == self._lo and hi == self._lo + self._win.size - 1:
                return
        win = np.empty(hi - lo + 1)
        if self._win.size:
            off = self._lo - lo
            win[:off] = self._hashed(lo, self._lo - 1) if off else win[:0]
            win[off:off + self._win.size] = self._win
            tail = off + self._win.size
            if tail < win.size:
                win[tail:] = self._hashed(self._lo + self._win.size, hi)
        else:
            win[:] = self._hashed(lo, hi)
        for x, v in self._overrides.items():
            if lo <= x <= hi:
                win[x - lo] = v
        self._lo, self._win = lo, win

    def omegas(self, a, b):
        """Right-jump probabilities at sites ``a..b`` (inclusive), as a copy."""
        if b < a:
            return np.empty(0)
        self.ensure(a, b)
        return self._win[a - self._lo:b - self._lo + 1].copy()

    def omega(self, x):
        return float(self.omegas(x, x)[0])

    def window(self):
        """``(lo, array)`` of the materialized window (read-only view)."""
        view = self._win.view()
        view.flags.writeable = False
        return self._lo, view

    def kernel_view(self):
        """Arguments the simulation kernels need to evaluate any site."""
        lo, win = self.window()
        return self.key, self._cum, self._values, np.ascontiguousarray(win), np.int64(lo)

    def __repr__(self):
        return (f"Environment(seed={self.seed}, atoms={self.spec.atoms}, "
                f"overrides={len(self._overrides)})")


def sample_site(env: Environment, x: int) -> float:
    return env.omega(x)


# --------------------------------------------------------------------------
# potential
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PotentialProfile:
    """V on the integer interval [a, b]; ``values[k] = V(a + k)``."""

    a: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "a", int(self.a))

    @property
    def b(self):
        return self.a + self.values.size - 1

    def __call__(self, x):
        if not self.a <= x <= self.b:
            raise IndexError(f"site {x} outside profile window [{self.a}, {self.b}]")
        return float(self.values[x - self.a])

    def segment(self, lo, hi):
        """V(lo..hi) as an array."""
        if lo < self.a or hi > self.b:
            raise WindowTooSmallError(
                f"need [{lo}, {hi}] but profile covers [{self.a}, {self.b}]")
        return self.values[lo - self.a:hi - self.a + 1]

    @classmethod
    def from_increments(cls, increments, a=0):
        """Profile on [a, a + len(increments)] starting at V(a) = 0."""
        return cls(a, np.concatenate([[0.0], np.cumsum(increments)]))

    def to_dict(self):
        return {"a": self.a, "b": self.b, "values": self.values.tolist()}


def potential(env: Environment, a: int, b: int) -> PotentialProfile:
    if not a <= 0 <= b:
        raise ValueError(f"window [{a}, {b}] must contain the anchor 0")
    w = env.omegas(a, b - 1)
    inc = np.log((1.0 - w) / w)
    vals = np.empty(b - a + 1)
    k0 = -a
    vals[k0] = 0.0
    vals[k0 + 1:] = np.cumsum(inc[k0:])
    if k0:
        vals[:k0] = -np.cumsum(inc[:k0][::-1])[::-1]
    return PotentialProfile(a, vals)


def hill_height(profile: PotentialProfile, a: int, b1: int) -> float:
    """max over x in (a, b1] of max_{y in [x, b1]} V(y) - min_{y in [a, x)} V(y).

    x = a contributes nothing (empty left range).
    """
    if b1 <= a:
        raise EmptyRangeError(f"[{a}, {b1}] has no x with a non-empty left range")
    v = profile.segment(a, b1)
    suffix_max = np.maximum.accumulate(v[::-1])[::-1]
    prefix_min = np.minimum.accumulate(v)
    return float(np.max(suffix_max[1:] - prefix_min[:-1]))


# --------------------------------------------------------------------------
# t-good environments
# --------------------------------------------------------------------------


def default_K7(spec: EnvironmentSpec, n_legs: int) -> float:
    return 8.0 / (n_legs * abs(spec.mean_log_rho))


def good_window(t, K7):
    lt = math.log(t)
    return math.floor(-K7 * lt), math.ceil(K7 * lt)


@dataclass(frozen=True)
class GoodEnvReport:
    t: float
    eps: float
    K7: float
    n_legs: int
    x_left: int
    x_right: int
    lookahead_edge: int
    left_height: float
    right_height: float
    max_rise: float
    boundary_threshold: float
    rise_threshold: float
    left_high: bool
    right_low: bool
    no_deep_trap: bool

    @property
    def verdict(self):
        return self.left_high and self.right_low and self.no_deep_trap

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["verdict"] = self.verdict
        return d


def is_t_good(profile: PotentialProfile, t: float, eps: float = 0.1,
              K7: float = 1.0, n_legs: int = 1, lookahead: int | None = None) -> GoodEnvReport:
    """Evaluate the three clauses of the t-good definition literally.

    The inner ``max_{j >= i}`` runs to ``x_right + lookahead``; the default
    lookahead equals the window width. Boundary cases count as passing.
    """
    if t <= 1:
        raise ValueError("t must exceed 1")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    xl, xr = good_window(t, K7)
    if lookahead is None:
        lookahead = max(1, xr - xl)
    edge = xr + lookahead
    if profile.a > xl or profile.b < edge:
        raise WindowTooSmallError(
            f"t-good check needs V on [{xl}, {edge}], profile covers [{profile.a}, {profile.b}]")
    lt = math.log(t)
    bound = (2.0 + eps) / n_legs * lt
    rise_bound = (1.0 - eps) / n_legs * lt
    seg = profile.segment(xl, edge)
    suffix_max = np.maximum.accumulate(seg[::-1])[::-1]
    n_inner = xr - xl + 1
    max_rise = float(np.max(suffix_max[:n_inner] - seg[:n_inner]))
    v_left, v_right = profile(xl), profile(xr)
    return GoodEnvReport(
        t=float(t), eps=float(eps), K7=float(K7), n_legs=int(n_legs),
        x_left=xl, x_right=xr, lookahead_edge=edge,
        left_height=v_left, right_height=v_right, max_rise=max_rise,
        boundary_threshold=bound, rise_threshold=rise_bound,
        left_high=v_left >= bound,
        right_low=v_right <= -bound,
        no_deep_trap=max_rise <= rise_bound,
    )


# --------------------------------------------------------------------------
# valleys
# --------------------------------------------------------------------------


def valley_threshold(t, kappa):
    return 3.0 / min(1.0, kappa) * math.log(t)


def certification_margin(t, kappa, mean_log_rho):
    """Sites of lookahead required beyond a reported boundary."""
    return 4 * math.ceil(valley_threshold(t, kappa) / abs(mean_log_rho))


@dataclass(frozen=True)
class ValleyDecomposition:
    t: float
    kappa: float
    threshold: float
    window: int
    margin: int
    boundaries: tuple
    depths: tuple
    truncated: bool
    descending: bool

    @property
    def n_valleys(self):
        return len(self.depths)

    def to_dict(self):
        return {
            "t": self.t,
            "kappa": self.kappa,
            "threshold": self.threshold,
            "window": self.window,
            "margin": self.margin,
            "boundaries": list(self.boundaries),
            "depths": list(self.depths),
            "truncated": self.truncated,
            "descending": self.descending,
        }


def _depth(seg):
    """max_{j < l} (seg[l] - seg[j]); None for fewer than two sites."""
    if seg.size < 2:
        return None
    prefix_min = np.minimum.accumulate(seg)
    return float(np.max(seg[1:] - prefix_min[:-1]))


def valleys(profile: PotentialProfile, t: float, kappa: float, window: int | None = None,
            margin: int = 0) -> ValleyDecomposition:
    """Valley boundaries J_0 = 0 < J_1 < ... and depths on the scan window [0, W].

    J_{i+1} is the first j >= J_i where the potential has dropped at least
    ``3 / min(1, kappa) * ln t`` below V(J_i) somewhere in [J_i, j] and V(j)
    is the maximum of V over [j, W]. Boundaries are searched only up to
    ``W - margin`` so every reported boundary has ``margin`` sites of
    lookahead behind its suffix maximum.
    """
    if t <= 1:
        raise ValueError("t must exceed 1")
    W = profile.b if window is None else int(window)
    seg = profile.segment(0, W)
    limit = W - int(margin)
    D = valley_threshold(t, kappa)
    suffix_max = np.maximum.accumulate(seg[::-1])[::-1]
    is_record = seg >= suffix_max

    bounds = [0]
    while True:
        start = bounds[-1]
        if start >= limit:
            break
        part = seg[start:limit + 1]
        dropped = seg[start] - np.minimum.accumulate(part) >= D
        ok = np.flatnonzero(dropped & is_record[start:limit + 1])
        if ok.size == 0:
            break
        bounds.append(start + int(ok[0]))
    if len(bounds) < 2:
        raise WindowTooSmallError(f"no valley boundary in [0, {limit}] at threshold {D:.4g}")

    depths = tuple(_depth(seg[bounds[i]:bounds[i + 1]]) for i in range(len(bounds) - 1))
    vb = seg[bounds]
    return ValleyDecomposition(
        t=float(t), kappa=float(kappa), threshold=D, window=W, margin=int(margin),
        boundaries=tuple(bounds), depths=depths,
        truncated=bool(limit < W),
        descending=bool(np.all(np.diff(vb) < 0)),
    )


def census_eps(t):
    return 4.0 * math.log(math.log(t)) / math.log(t)


def slow_time_scale(t, gamma2=1.0):
    """s_0 = t / (4 gamma_2 (ln t)^4)."""
    return t / (4.0 * gamma2 * math.log(t) ** 4)


@dataclass(frozen=True)
class CensusReport:
    t: float
    nu: float
    nu0: float
    eps: float
    depth_threshold: float
    horizon: int
    deep_valleys: tuple
    required: float
    small_t: bool

    @property
    def count(self):
        return len(self.deep_valleys)

    @property
    def psi(self):
        return self.count >= self.required

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["deep_valleys"] = list(self.deep_valleys)
        d["count"] = self.count
        d["psi"] = self.psi
        return d


def deep_valley_census(decomp: ValleyDecomposition, t: float, kappa: float, nu: float,
                       n_legs: int, eps: float | None = None) -> CensusReport:
    """Count valleys i >= 1 meeting [0, floor(t^nu)) with depth >= (1 - eps)/kappa ln t."""
    nu0 = kappa / n_legs
    if not nu0 < nu < 1:
        raise ValueError(f"need kappa/N = {nu0:.4g} < nu < 1, got nu = {nu}")
    if eps is None:
        eps = census_eps(t)
    horizon = math.floor(t ** nu)
    if decomp.boundaries[-1] < horizon:
        raise WindowTooSmallError(
            f"decomposition ends at {decomp.boundaries[-1]} < floor(t^nu) = {horizon}")
    thr = (1.0 - eps) / kappa * math.log(t)
    deep = tuple(
        i for i in range(1, decomp.n_valleys)
        if decomp.boundaries[i] < horizon
        and decomp.depths[i] is not None and decomp.depths[i] >= thr
    )
    return CensusReport(
        t=float(t), nu=float(nu), nu0=nu0, eps=float(eps), depth_threshold=thr,
        horizon=horizon, deep_valleys=deep, required=t ** (nu - nu0) / 3.0,
        small_t=t < math.exp(math.e),
    )


def random_spec(gen: np.random.Generator, n_atoms: int = 2, max_tries: int = 10_000) -> EnvironmentSpec:
    """Rejection-sample a law satisfying (iii)-(v) with random atoms and weights."""
    for _ in range(max_tries):
        delta = float(gen.uniform(0.05, 0.2))
        values = gen.uniform(delta, 1.0 - delta, n_atoms)
        probs = gen.dirichlet(np.ones(n_atoms))
        probs[-1] = 1.0 - probs[:-1].sum()
        spec = EnvironmentSpec(tuple(zip(probs.tolist(), values.tolist())), delta)
        if validate_spec(spec).ok:
            return spec
    raise RuntimeError(f"no valid law after {max_tries} tries")
