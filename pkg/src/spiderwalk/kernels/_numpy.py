"""Pure-numpy fallback: all replicas advance in lockstep, one jump per sweep.

Semantics and random draws match ``_numba.advance`` replica by replica.
"""
import numpy as np

from .. import rng
from .layout import (
    BUDGET, CKPT, CTR, DEADLOCK, FIRST_J, FIRST_T, FIRST_X1, HIT_J, HIT_T, JUMPS,
    LAST_J, LAST_T, LAST_X1, LEVEL_LO, MAX_JUMPS, MAXX1, MINX1, NEP, OCC, OCC_LEVEL,
    REF_X1, REGEN_SHAPE, RUNNING, SHAPE, STATUS, STOP_HI, STOP_HIGH, STOP_LO,
    STOP_LOW, T, T_MAX, TIME_UP, UNIT, UPS_J, UPS_T, X1,
)


def site_omegas(sites, keys, cum, vals, win, win_lo):
    """Right-jump probabilities at ``sites`` (any shape); ``keys`` broadcast."""
    u = rng.uniforms(keys, sites)
    out = vals[np.searchsorted(cum, u, side="right")]
    if win.size:
        k = sites - win_lo
        inside = (k >= 0) & (k < win.size)
        out[inside] = win[k[inside]]
    return out


def _record_checkpoints(idx, ist, fst, ckpt_jumps, ckpt_t, ckpt_x1, ckpt_max):
    n_ck = ckpt_jumps.size
    while idx.size:
        ck = ist[idx, CKPT]
        due = ck < n_ck
        due[due] = ckpt_jumps[ck[due]] <= ist[idx[due], JUMPS]
        if not due.any():
            break
        r, c = idx[due], ck[due]
        ckpt_t[r, c] = fst[r, T]
        ckpt_x1[r, c] = ist[r, X1]
        ckpt_max[r, c] = ist[r, MAXX1]
        ist[r, CKPT] += 1
        idx = r


def _record_trace(idx, ist, fst, tr_shape, tr_x1, tr_t):
    j = ist[idx, JUMPS]
    ok = j < tr_shape.shape[1]
    r, j = idx[ok], j[ok]
    tr_shape[r, j] = ist[r, SHAPE]
    tr_x1[r, j] = ist[r, X1]
    tr_t[r, j] = fst[r, T]


def advance_batch(to_shape, dx1, site_off, is_up,
                  env_keys, cum, vals, win, win_lo,
                  traj_keys, ist, fst, ip, fp,
                  ckpt_jumps, ckpt_t, ckpt_x1, ckpt_max,
                  ep_j, ep_t, ep_x1,
                  tr_shape, tr_x1, tr_t,
                  level_hit_t):
    """Advance every row of ``ist``/``fst`` in place; 2-D outputs are per replica."""
    R = ist.shape[0]
    env_keys = np.asarray(env_keys, dtype=np.uint64)
    traj_keys = np.asarray(traj_keys, dtype=np.uint64)
    max_jumps = ip[MAX_JUMPS]
    unit = ip[UNIT] != 0
    occ_level = ip[OCC_LEVEL]
    t_max = fp[T_MAX]
    n_lv = level_hit_t.shape[1]
    ep_cap = ep_j.shape[1]

    idx = np.arange(R)
    _record_checkpoints(idx, ist, fst, ckpt_jumps, ckpt_t, ckpt_x1, ckpt_max)
    _record_trace(idx, ist, fst, tr_shape, tr_x1, tr_t)
    ist[:, STATUS] = RUNNING
    active = idx[ist[:, JUMPS] < max_jumps]
    ist[ist[:, JUMPS] >= max_jumps, STATUS] = BUDGET

    while active.size:
        s = ist[active, SHAPE]
        x1 = ist[active, X1]
        ts = to_shape[s]
        legal = ts >= 0
        sites = x1[:, None] + site_off[s]
        w = site_omegas(sites, env_keys[active, None], cum, vals, win, win_lo)
        rates = np.where(legal, np.where(is_up[None, :], w, 1.0 - w), 0.0)
        csum = np.cumsum(rates, axis=1)
        total = csum[:, -1]

        dead = ~legal.any(axis=1)
        if dead.any():
            ist[active[dead], STATUS] = DEADLOCK
            keep = ~dead
            active, s, x1, ts, rates, csum, total, legal = (
                a[keep] for a in (active, s, x1, ts, rates, csum, total, legal))
            if not active.size:
                break

        ctr = ist[active, CTR]
        keys = traj_keys[active]
        u1 = rng.uniforms(keys, ctr)
        u2 = rng.uniforms(keys, ctr + 1)
        ist[active, CTR] = ctr + 2
        target = u1 * total
        hit = (csum > target[:, None]) & (rates > 0.0)
        last_legal = legal.shape[1] - 1 - np.argmax(legal[:, ::-1], axis=1)
        kk = np.where(hit.any(axis=1), np.argmax(hit, axis=1), last_legal)
        e = -np.log(u2)
        hold = e if unit else e / total

        t = fst[active, T]
        at_occ = x1 == occ_level
        late = t + hold > t_max
        if late.any():
            r = active[late]
            fst[r, OCC] += np.where(at_occ[late], t_max - t[late], 0.0)
            fst[r, T] = t_max
            ist[r, STATUS] = TIME_UP
            keep = ~late
            active, s, x1, kk, hold, t, at_occ = (
                a[keep] for a in (active, s, x1, kk, hold, t, at_occ))
            if not active.size:
                break

        fst[active, OCC] += np.where(at_occ, hold, 0.0)
        t = t + hold
        fst[active, T] = t
        step = dx1[s, kk]
        s = to_shape[s, kk]
        x1 = x1 + step
        ist[active, SHAPE] = s
        ist[active, X1] = x1
        ist[active, JUMPS] += 1
        jumps = ist[active, JUMPS]
        ist[active, MAXX1] = np.maximum(ist[active, MAXX1], x1)
        ist[active, MINX1] = np.minimum(ist[active, MINX1], x1)

        moved = step != 0
        if n_lv and moved.any():
            lv = x1 - ip[LEVEL_LO]
            ok = moved & (lv >= 0) & (lv < n_lv)
            r, c = active[ok], lv[ok]
            fresh = np.isnan(level_hit_t[r, c])
            level_hit_t[r[fresh], c[fresh]] = t[ok][fresh]
        first_hit = moved & (x1 == occ_level) & (ist[active, HIT_J] < 0)
        if first_hit.any():
            r = active[first_hit]
            ist[r, HIT_J] = jumps[first_hit]
            fst[r, HIT_T] = t[first_hit]

        at_shape = s == ip[REGEN_SHAPE]
        if at_shape.any():
            ups = at_shape & (ist[active, UPS_J] < 0)
            r = active[ups]
            ist[r, UPS_J] = jumps[ups]
            fst[r, UPS_T] = t[ups]
            epoch = at_shape & (x1 > ist[active, REF_X1])
            if epoch.any():
                r = active[epoch]
                n = ist[r, NEP]
                room = n < ep_cap
                ep_j[r[room], n[room]] = jumps[epoch][room]
                ep_t[r[room], n[room]] = t[epoch][room]
                ep_x1[r[room], n[room]] = x1[epoch][room]
                first = n == 0
                ist[r[first], FIRST_J] = jumps[epoch][first]
                ist[r[first], FIRST_X1] = x1[epoch][first]
                fst[r[first], FIRST_T] = t[epoch][first]
                ist[r, NEP] = n + 1
                ist[r, REF_X1] = x1[epoch]
                ist[r, LAST_J] = jumps[epoch]
                ist[r, LAST_X1] = x1[epoch]
                fst[r, LAST_T] = t[epoch]

        _record_checkpoints(active, ist, fst, ckpt_jumps, ckpt_t, ckpt_x1, ckpt_max)
        _record_trace(active, ist, fst, tr_shape, tr_x1, tr_t)

        low = x1 <= ip[STOP_LO]
        high = ~low & (x1 >= ip[STOP_HI])
        done = jumps >= max_jumps
        ist[active[done], STATUS] = BUDGET
        ist[active[low], STATUS] = STOP_LOW
        ist[active[high], STATUS] = STOP_HIGH
        active = active[~(low | high | done)]
