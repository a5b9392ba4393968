"""Exact simulation of the spider jump process and speed estimators.

Budgets count jumps. Each replica draws from its own counter-based stream
keyed by ``(master seed, replica index)``; the environment stream is
separate, so quenched experiments reuse one environment across replicas.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .env import Environment, EnvironmentSpec
from .errors import DeadlockError, InsufficientDataError, TimedOut
from .kernels import layout as lay
from .kernels import simulate
from .spider import LocalConfigSet, SpiderState, check_state, neighbors


class ClockMode(enum.Enum):
    """How holding times are drawn.

    RATE_EXACT: exponential with the state's total exit rate.
    UNIT_JUMPS: unit-rate exponentials, independent of the state.
    Both share the same embedded jump chain for a given stream.
    """

    RATE_EXACT = "rate-exact"
    UNIT_JUMPS = "unit-jumps"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).lower().replace("_", "-"))


class Stream:
    """Counter-based uniform stream for one replica."""

    def __init__(self, master_seed=0, replica=0):
        self.master_seed = int(master_seed)
        self.replica = int(replica)
        self.key = np.uint64(rng.trajectory_key(master_seed, replica))
        self.counter = 0

    def pair(self):
        u = rng.uniforms(self.key, np.array([self.counter, self.counter + 1]))
        self.counter += 2
        return float(u[0]), float(u[1])


def step(state, env: Environment, L: LocalConfigSet, mode=ClockMode.RATE_EXACT,
         stream: Stream | None = None):
    """One jump: returns ``(next_state, holding_time)``.

    The move is picked with probability rate/total. Draw order and
    arithmetic match the batch kernels.
    """
    mode = ClockMode.parse(mode)
    stream = stream or Stream()
    moves = neighbors(state, env, L)
    if not moves:
        raise DeadlockError(f"no legal move from {tuple(state)}")
    total = 0.0
    for _, r in moves:
        total += r
    u1, u2 = stream.pair()
    target = u1 * total
    acc = 0.0
    chosen = moves[-1][0]
    for nxt, r in moves:
        acc += r
        if acc > target and r > 0.0:
            chosen = nxt
            break
    e = -math.log(u2)
    return chosen, (e if mode is ClockMode.UNIT_JUMPS else e / total)


# --------------------------------------------------------------------------
# single trajectories
# --------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Checkpointed record of one replica.

    ``checkpoints`` are jump counts; ``times``/``s1``/``max_s1`` are the
    continuous time, leg-1 position and running maximum there. ``trace``
    holds the full jump chain ``(shapes, x1, times)`` when requested.
    """

    x0: SpiderState
    mode: ClockMode
    checkpoints: np.ndarray
    times: np.ndarray
    s1: np.ndarray
    max_s1: np.ndarray
    final_state: SpiderState
    jumps: int
    time: float
    status: str
    stream: tuple
    trace: tuple | None = None

    def states(self, L):
        """Full jump chain as SpiderStates (requires ``trace``)."""
        if self.trace is None:
            raise ValueError("trajectory was run without a trace")
        shapes, x1, _ = self.trace
        return [SpiderState(x + c for c in L.configs[s]) for s, x in zip(shapes, x1)]


def _start(x0, L):
    x0 = check_state(x0, L)
    return x0, L.index(x0.shape), x0.x1


def run(L: LocalConfigSet, env: Environment, x0, budget: int, mode=ClockMode.RATE_EXACT,
        seed: int = 0, replica: int = 0, checkpoints=(), trace: bool = False,
        backend=None) -> Trajectory:
    """Simulate one replica for ``budget`` jumps."""
    mode = ClockMode.parse(mode)
    x0, shape, x1 = _start(x0, L)
    out = simulate(L, env, [rng.trajectory_key(seed, replica)], shape, x1, budget,
                   unit=mode is ClockMode.UNIT_JUMPS, checkpoints=checkpoints,
                   trace_cap=budget + 1 if trace else 0, backend=backend)
    return _trajectory(out, 0, L, x0, mode, seed, replica, trace)


def _trajectory(out, r, L, x0, mode, seed, replica, trace):
    ist, fst = out.ist[r], out.fst[r]
    jumps = int(ist[lay.JUMPS])
    tr = None
    if trace:
        n = min(jumps + 1, out.tr_shape.shape[1])
        tr = (out.tr_shape[r, :n].copy(), out.tr_x1[r, :n].copy(), out.tr_t[r, :n].copy())
    final = SpiderState(ist[lay.X1] + c for c in L.configs[ist[lay.SHAPE]])
    return Trajectory(
        x0=x0, mode=mode, checkpoints=out.ckpt_jumps.copy(),
        times=out.ckpt_t[r].copy(), s1=out.ckpt_x1[r].copy(), max_s1=out.ckpt_max[r].copy(),
        final_state=final, jumps=jumps, time=float(fst[lay.T]),
        status=lay.STATUS_NAMES[int(ist[lay.STATUS])], stream=(seed, replica), trace=tr,
    )


def trace_run(L, env, x0, budget, mode=ClockMode.RATE_EXACT, seed=0, replica=0, backend=None):
    """Trajectory with the complete jump chain recorded."""
    return run(L, env, x0, budget, mode, seed, replica, trace=True, backend=backend)


# --------------------------------------------------------------------------
# stopping times
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Passage:
    time: float
    jumps: int
    side: str | None = None


def _passage(L, env, x0, budget, mode, seed, replica, stop_lo, stop_hi, backend, carry=None):
    _, shape, x1 = _start(x0, L)
    return simulate(L, env, [rng.trajectory_key(seed, replica)], shape, x1, budget,
                    unit=mode is ClockMode.UNIT_JUMPS, stop_lo=stop_lo, stop_hi=stop_hi,
                    backend=backend, carry=carry)


def _partial(out, L, x0, mode, seed, replica):
    return _trajectory(out, 0, L, SpiderState(x0), mode, seed, replica, False)


def hitting_time(start, env: Environment, L: LocalConfigSet, y: int, budget: int,
                 mode=ClockMode.RATE_EXACT, seed: int = 0, replica: int = 0,
                 backend=None) -> Passage:
    """tau_y = inf{s > 0 : S_1(s) = y}.

    Starting on level y, this is the first return after leg 1 leaves y.
    Raises TimedOut when the jump budget runs out first.
    """
    mode = ClockMode.parse(mode)
    start = check_state(start, L)
    x1 = start.x1
    carry = None
    if x1 == y:
        out = _passage(L, env, start, budget, mode, seed, replica, y - 1, y + 1, backend)
        if out.ist[0, lay.STATUS] not in (lay.STOP_LOW, lay.STOP_HIGH):
            raise TimedOut(f"never left level {y} within {budget} jumps",
                           _partial(out, L, start, mode, seed, replica))
        carry = (out.ist, out.fst)
        x1 = int(out.ist[0, lay.X1])
    lo, hi = (y, None) if x1 > y else (None, y)
    out = _passage(L, env, start, budget, mode, seed, replica, lo, hi, backend, carry)
    if out.ist[0, lay.STATUS] not in (lay.STOP_LOW, lay.STOP_HIGH):
        raise TimedOut(f"level {y} not hit within {budget} jumps",
                       _partial(out, L, start, mode, seed, replica))
    return Passage(float(out.fst[0, lay.T]), int(out.ist[0, lay.JUMPS]))


def exit_time(start, env: Environment, L: LocalConfigSet, a: int, b: int, budget: int,
              mode=ClockMode.RATE_EXACT, seed: int = 0, replica: int = 0,
              backend=None) -> Passage:
    """tau_{a,b}: first time leg 1 sits at a or b; ``side`` is 'a' or 'b'."""
    mode = ClockMode.parse(mode)
    start = check_state(start, L)
    if not a < start.x1 < b:
        raise ValueError(f"need a < S_1(start) < b, got {a} < {start.x1} < {b}")
    out = _passage(L, env, start, budget, mode, seed, replica, a, b, backend)
    status = out.ist[0, lay.STATUS]
    if status not in (lay.STOP_LOW, lay.STOP_HIGH):
        raise TimedOut(f"no exit from ({a}, {b}) within {budget} jumps",
                       _partial(out, L, start, mode, seed, replica))
    return Passage(float(out.fst[0, lay.T]), int(out.ist[0, lay.JUMPS]),
                   "a" if status == lay.STOP_LOW else "b")


@dataclass(frozen=True)
class ExitSample:
    """Batch of exit experiments; censored replicas have ``side == ''``."""

    times: np.ndarray
    jumps: np.ndarray
    side: np.ndarray

    @property
    def censored(self):
        return self.side == ""


def exit_times(start, env, L, a, b, budget, replicas, mode=ClockMode.RATE_EXACT,
               seed=0, backend=None) -> ExitSample:
    mode = ClockMode.parse(mode)
    start = check_state(start, L)
    if not a < start.x1 < b:
        raise ValueError(f"need a < S_1(start) < b, got {a} < {start.x1} < {b}")
    keys = [rng.trajectory_key(seed, r) for r in range(replicas)]
    out = simulate(L, env, keys, L.index(start.shape), start.x1, budget,
                   unit=mode is ClockMode.UNIT_JUMPS, stop_lo=a, stop_hi=b, backend=backend)
    st = out.ist[:, lay.STATUS]
    side = np.where(st == lay.STOP_LOW, "a", np.where(st == lay.STOP_HIGH, "b", ""))
    return ExitSample(out.fst[:, lay.T].copy(), out.ist[:, lay.JUMPS].copy(), side)


# --------------------------------------------------------------------------
# batches of replicas
# --------------------------------------------------------------------------


@dataclass
class Runs:
    """Replica batch with checkpoints and online regeneration bookkeeping."""

    x0: SpiderState
    mode: ClockMode
    budget: int
    master_seed: int
    quenched: bool
    checkpoints: np.ndarray
    ckpt_t: np.ndarray
    ckpt_s1: np.ndarray
    ckpt_max: np.ndarray
    final_t: np.ndarray
    final_s1: np.ndarray
    max_s1: np.ndarray
    jumps: np.ndarray
    status: np.ndarray
    n_epochs: np.ndarray
    first_epoch: tuple  # (jumps, time, S_1) arrays; jumps = -1 if censored
    last_epoch: tuple
    upsilon: tuple  # (jumps, time) of first return to the start shape
    epochs: tuple | None = field(default=None, repr=False)

    @property
    def replicas(self):
        return self.final_t.size


def make_environments(environment, replicas, master_seed, quenched=True, env_seed=None):
    """One shared Environment (quenched) or one fresh Environment per replica."""
    if isinstance(environment, Environment):
        return environment
    if not isinstance(environment, EnvironmentSpec):
        raise TypeError("environment must be an Environment or EnvironmentSpec")
    if quenched:
        seed = rng.replica_env_seed(master_seed, -1) if env_seed is None else env_seed
        return Environment(environment, seed)
    return [Environment(environment, rng.replica_env_seed(master_seed, r)) for r in range(replicas)]


def run_replicas(L: LocalConfigSet, environment, x0, replicas: int, budget: int,
                 mode=ClockMode.RATE_EXACT, seed: int = 0, quenched: bool = False,
                 checkpoints=(), env_seed=None, epoch_cap: int = 0, backend=None) -> Runs:
    """Run independent replicas started from ``x0``.

    ``environment`` is an Environment (always quenched) or an
    EnvironmentSpec, realized once (quenched) or per replica (annealed).
    """
    mode = ClockMode.parse(mode)
    x0, shape, x1 = _start(x0, L)
    envs = make_environments(environment, replicas, seed, quenched, env_seed)
    keys = [rng.trajectory_key(seed, r) for r in range(replicas)]
    out = simulate(L, envs, keys, shape, x1, budget, unit=mode is ClockMode.UNIT_JUMPS,
                   regen_shape=shape, checkpoints=checkpoints, epoch_cap=epoch_cap,
                   backend=backend)
    ist, fst = out.ist, out.fst
    epochs = None
    if epoch_cap:
        epochs = (out.ep_j, out.ep_t, out.ep_x1)
    return Runs(
        x0=x0, mode=mode, budget=int(budget), master_seed=int(seed),
        quenched=isinstance(envs, Environment),
        checkpoints=out.ckpt_jumps, ckpt_t=out.ckpt_t, ckpt_s1=out.ckpt_x1,
        ckpt_max=out.ckpt_max,
        final_t=fst[:, lay.T].copy(), final_s1=ist[:, lay.X1].copy(),
        max_s1=ist[:, lay.MAXX1].copy(), jumps=ist[:, lay.JUMPS].copy(),
        status=ist[:, lay.STATUS].copy(), n_epochs=ist[:, lay.NEP].copy(),
        first_epoch=(ist[:, lay.FIRST_J].copy(), fst[:, lay.FIRST_T].copy(),
                     ist[:, lay.FIRST_X1].copy()),
        last_epoch=(ist[:, lay.LAST_J].copy(), fst[:, lay.LAST_T].copy(),
                    ist[:, lay.LAST_X1].copy()),
        upsilon=(ist[:, lay.UPS_J].copy(), fst[:, lay.UPS_T].copy()),
        epochs=epochs,
    )


# --------------------------------------------------------------------------
# regeneration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RegenerationRecord:
    """Epochs zeta_k (jump indices), their times and S_1 values.

    ``first_time`` is the regeneration time T (NaN when no epoch was seen);
    ``upsilon`` is the first jump index at which the start shape recurs.
    """

    epochs: np.ndarray
    times: np.ndarray
    s1: np.ndarray
    upsilon: int | None

    @property
    def first_time(self):
        return float(self.times[0]) if self.epochs.size else math.nan

    @property
    def increments(self):
        """(dS_1, dT) between consecutive epochs, starting from epoch 0 at time 0."""
        return np.diff(self.s1, prepend=np.nan), np.diff(self.times, prepend=0.0)

    def __len__(self):
        return int(self.epochs.size)


def regeneration_scan(traj: Trajectory, L: LocalConfigSet, x0=None) -> RegenerationRecord:
    """Scan a traced trajectory for regeneration epochs.

    zeta_n is the first jump after zeta_{n-1} at which the spider is in the
    start shape with S_1 strictly above its value at zeta_{n-1}.
    """
    if traj.trace is None:
        raise ValueError("regeneration_scan needs a traced trajectory (trace_run)")
    x0 = traj.x0 if x0 is None else SpiderState(x0)
    target = L.index(x0.shape)
    shapes, x1, times = traj.trace
    epochs, ets, es1 = [], [], []
    ref = int(x1[0])
    upsilon = None
    for j in range(1, shapes.size):
        if shapes[j] != target:
            continue
        if upsilon is None:
            upsilon = j
        if x1[j] > ref:
            ref = int(x1[j])
            epochs.append(j)
            ets.append(times[j])
            es1.append(ref)
    return RegenerationRecord(np.asarray(epochs, dtype=np.int64), np.asarray(ets, dtype=float),
                              np.asarray(es1, dtype=np.int64), upsilon)


# --------------------------------------------------------------------------
# estimators
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SpeedEstimate:
    v_time: float
    v_time_ci: tuple
    v_regen: float
    v_regen_ci: tuple
    censored_fraction: float
    replicas: int
    level: float

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


MIN_REPLICAS = 30


def _percentile_ci(samples, level):
    lo, hi = np.nanpercentile(samples, [50 * (1 - level), 50 * (1 + level)])
    return float(lo), float(hi)


def speed_estimators(runs: Runs, level: float = 0.95, n_boot: int = 2000,
                     seed: int | None = None) -> SpeedEstimate:
    """Time-average and regeneration speed estimates with bootstrap CIs.

    v_time is the replica mean of S_1(t)/t at the end of the budget.
    v_regen is the ratio of summed S_1 increments to summed times over
    completed regeneration segments; the unfinished tail after the last
    epoch is censored. Replicas are the resampling unit.
    """
    R = runs.replicas
    if R < MIN_REPLICAS:
        raise InsufficientDataError(f"{R} replicas < {MIN_REPLICAS}")
    start = runs.x0.x1
    per_rep = (runs.final_s1 - start) / runs.final_t
    dx = (runs.last_epoch[2] - start).astype(float)
    dt = runs.last_epoch[1]
    seen = runs.n_epochs > 0
    dx = np.where(seen, dx, 0.0)
    dt = np.where(seen, dt, 0.0)

    gen = rng.bootstrap_generator(runs.master_seed if seed is None else seed)
    idx = gen.integers(0, R, size=(n_boot, R))
    boot_time = per_rep[idx].mean(axis=1)
    den = dt[idx].sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        boot_regen = np.where(den > 0, dx[idx].sum(axis=1) / den, np.nan)
    v_regen = float(dx.sum() / dt.sum()) if dt.sum() > 0 else math.nan
    return SpeedEstimate(
        v_time=float(per_rep.mean()), v_time_ci=_percentile_ci(boot_time, level),
        v_regen=v_regen,
        v_regen_ci=_percentile_ci(boot_regen, level) if np.any(den > 0) else (math.nan, math.nan),
        censored_fraction=float(1.0 - seen.mean()), replicas=R, level=level,
    )


def annealed_speed_oracle(spec: EnvironmentSpec) -> float:
    """(1 - E[rho]) / (1 + E[rho]): speed of a single walker with unit total rate."""
    m = spec.mean_rho
    return (1.0 - m) / (1.0 + m) if m < 1 else 0.0


@dataclass(frozen=True)
class OccupationEstimate:
    """Both sides of the escape/occupation comparison for level ``y``."""

    y: int
    s: float
    p_hit: float
    p_hit_ci: tuple
    occupation: float
    occupation_ci: tuple
    replicas: int

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def occupation_estimate(start, env: Environment, L: LocalConfigSet, y: int, s: float,
                        replicas: int, mode=ClockMode.RATE_EXACT, seed: int = 0,
                        budget: int = 10_000_000, level: float = 0.95,
                        backend=None) -> OccupationEstimate:
    """Monte Carlo estimates of P[tau_y < s] and E int_0^{s+1} 1{S_1(u) = y} du.

    The occupation integral is measured exactly on each replica by summing
    holding times spent on level y up to time s + 1.
    """
    if replicas < 100:
        raise InsufficientDataError(f"{replicas} replicas < 100")
    mode = ClockMode.parse(mode)
    start = check_state(start, L)
    keys = [rng.trajectory_key(seed, r) for r in range(replicas)]
    out = simulate(L, env, keys, L.index(start.shape), start.x1, budget,
                   unit=mode is ClockMode.UNIT_JUMPS, t_max=float(s) + 1.0, occ_level=y,
                   backend=backend)
    if np.any(out.ist[:, lay.STATUS] == lay.BUDGET):
        raise TimedOut(f"jump budget {budget} exhausted before time {s + 1}")
    hit_t = out.fst[:, lay.HIT_T]
    hits = np.where(np.isnan(hit_t), False, hit_t < s).astype(float)
    occ = out.fst[:, lay.OCC]
    z = _normal_quantile(level)
    p = hits.mean()
    se_p = math.sqrt(max(p * (1 - p), 0.0) / replicas)
    se_o = occ.std(ddof=1) / math.sqrt(replicas)
    return OccupationEstimate(
        y=int(y), s=float(s), p_hit=float(p), p_hit_ci=(float(max(0.0, p - z * se_p)), float(min(1.0, p + z * se_p))),
        occupation=float(occ.mean()),
        occupation_ci=(float(occ.mean() - z * se_o), float(occ.mean() + z * se_o)),
        replicas=replicas,
    )


def _normal_quantile(level):
    from scipy.stats import norm

    return float(norm.ppf(0.5 + level / 2))


def level_hitting_times(L, env, x0, budget, levels, mode=ClockMode.RATE_EXACT, seed=0,
                        replica=0, backend=None):
    """First hitting times of levels ``levels[0]..levels[1]`` (NaN if never hit)."""
    mode = ClockMode.parse(mode)
    x0, shape, x1 = _start(x0, L)
    lo, hi = levels
    out = simulate(L, env, [rng.trajectory_key(seed, replica)], shape, x1, budget,
                   unit=mode is ClockMode.UNIT_JUMPS, level_lo=lo, n_levels=hi - lo + 1,
                   backend=backend)
    return out.level_hit_t[0].copy()


def checkpoint_speeds(runs: Runs) -> np.ndarray:
    """Replica-mean S_1(t)/t at each checkpoint.

    A run truncated at checkpoint budget B is identical to a fresh run with
    budget B, since streams are counter-based.
    """
    return np.nanmean((runs.ckpt_s1 - runs.x0.x1) / runs.ckpt_t, axis=0)


@dataclass(frozen=True)
class ExponentFit:
    """Least-squares slope of log mean max-S_1 against log jump budget."""

    slope: float
    ci: tuple
    budgets: tuple
    mean_max: tuple
    level: float

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in ((f, getattr(self, f)) for f in self.__dataclass_fields__)}


def _slope(logx, Y):
    """OLS slopes of each row of log(Y) against ``logx``."""
    ly = np.log(Y)
    xc = logx - logx.mean()
    return (ly - ly.mean(axis=-1, keepdims=True)) @ xc / (xc @ xc)


def exponent_fit(runs: Runs, level: float = 0.95, n_boot: int = 2000,
                 seed: int | None = None) -> ExponentFit:
    """Displacement exponent from the running maximum at the checkpoints."""
    if runs.checkpoints.size < 2:
        raise InsufficientDataError("need at least two checkpoint budgets")
    if runs.replicas < MIN_REPLICAS:
        raise InsufficientDataError(f"{runs.replicas} replicas < {MIN_REPLICAS}")
    disp = (runs.ckpt_max - runs.x0.x1).astype(float)
    logx = np.log(runs.checkpoints.astype(float))
    mean = disp.mean(axis=0)
    if np.any(mean <= 0):
        raise InsufficientDataError("mean maximal displacement is zero at some checkpoint")
    gen = rng.bootstrap_generator(runs.master_seed if seed is None else seed)
    idx = gen.integers(0, runs.replicas, size=(n_boot, runs.replicas))
    boot = disp[idx].mean(axis=1)
    with np.errstate(divide="ignore"):
        slopes = _slope(logx, boot)
    return ExponentFit(slope=float(_slope(logx, mean[None, :])[0]),
                       ci=_percentile_ci(slopes[np.isfinite(slopes)], level),
                       budgets=tuple(int(b) for b in runs.checkpoints),
                       mean_max=tuple(float(m) for m in mean), level=level)


def log_grid(budget: int, per_decade: int = 1, start: int = 10) -> list:
    """Checkpoint budgets start, ..., budget on a log grid (budget always included)."""
    if budget < 1:
        return []
    pts = set()
    k = 0
    while True:
        v = int(round(start * 10 ** (k / per_decade)))
        if v >= budget:
            break
        pts.add(v)
        k += 1
    pts.add(int(budget))
    return sorted(pts)
