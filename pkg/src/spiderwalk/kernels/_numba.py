"""numba kernels: one replica at a time, scalar loop."""
import math

import numpy as np
from numba import njit

from .layout import (
    BUDGET, CKPT, CTR, DEADLOCK, FIRST_J, FIRST_T, FIRST_X1, HIT_J, HIT_T, JUMPS,
    LAST_J, LAST_T, LAST_X1, LEVEL_LO, MAX_JUMPS, MAXX1, MINX1, NEP, OCC, OCC_LEVEL,
    REF_X1, REGEN_SHAPE, SHAPE, STATUS, STOP_HI, STOP_HIGH, STOP_LO, STOP_LOW, T,
    T_MAX, TIME_UP, UNIT, UPS_J, UPS_T, X1,
)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_ONE = np.uint64(1)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 2.0 ** -53


@njit(cache=True, inline="always")
def uniform(key, counter):
    z = key + (np.uint64(counter) + _ONE) * _GOLDEN
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    z = z ^ (z >> _S31)
    return (np.float64(z >> _S11) + 0.5) * _INV53


@njit(cache=True, inline="always")
def site_omega(x, key, cum, vals, win, win_lo):
    k = x - win_lo
    if k >= 0 and k < win.size:
        return win[k]
    u = uniform(key, x)
    for i in range(cum.size):
        if u < cum[i]:
            return vals[i]
    return vals[vals.size - 1]


@njit(cache=True)
def uniforms(key, counters):
    out = np.empty(counters.size)
    for i in range(counters.size):
        out[i] = uniform(key, counters[i])
    return out


@njit(cache=True)
def advance(to_shape, dx1, site_off, is_up,
            env_key, cum, vals, win, win_lo,
            traj_key, ist, fst, ip, fp,
            ckpt_jumps, ckpt_t, ckpt_x1, ckpt_max,
            ep_j, ep_t, ep_x1,
            tr_shape, tr_x1, tr_t,
            level_hit_t):
    """Run one replica until its budget, time horizon or stop level.

    Reads and writes the carry arrays ``ist``/``fst`` in place.
    """
    M = to_shape.shape[1]
    s = ist[SHAPE]
    x1 = ist[X1]
    jumps = ist[JUMPS]
    ctr = ist[CTR]
    ck = ist[CKPT]
    mx = ist[MAXX1]
    mn = ist[MINX1]
    nep = ist[NEP]
    ref = ist[REF_X1]
    t = fst[T]
    occ = fst[OCC]

    max_jumps = ip[MAX_JUMPS]
    unit = ip[UNIT] != 0
    stop_lo = ip[STOP_LO]
    stop_hi = ip[STOP_HI]
    occ_level = ip[OCC_LEVEL]
    regen_shape = ip[REGEN_SHAPE]
    level_lo = ip[LEVEL_LO]
    t_max = fp[T_MAX]
    n_ck = ckpt_jumps.size
    n_lv = level_hit_t.size

    while ck < n_ck and ckpt_jumps[ck] <= jumps:
        ckpt_t[ck] = t
        ckpt_x1[ck] = x1
        ckpt_max[ck] = mx
        ck += 1
    if jumps < tr_shape.size:
        tr_shape[jumps] = s
        tr_x1[jumps] = x1
        tr_t[jumps] = t

    rates = np.empty(M)
    status = BUDGET
    while jumps < max_jumps:
        total = 0.0
        last = -1
        for k in range(M):
            if to_shape[s, k] < 0:
                rates[k] = 0.0
                continue
            w = site_omega(x1 + site_off[s, k], env_key, cum, vals, win, win_lo)
            r = w if is_up[k] else 1.0 - w
            rates[k] = r
            total += r
            last = k
        if last < 0:
            status = DEADLOCK
            break
        u1 = uniform(traj_key, ctr)
        u2 = uniform(traj_key, ctr + 1)
        ctr += 2
        target = u1 * total
        acc = 0.0
        kk = last
        for k in range(M):
            acc += rates[k]
            if acc > target and rates[k] > 0.0:
                kk = k
                break
        e = -math.log(u2)
        hold = e if unit else e / total
        if t + hold > t_max:
            if x1 == occ_level:
                occ += t_max - t
            t = t_max
            status = TIME_UP
            break
        if x1 == occ_level:
            occ += hold
        t += hold
        step = dx1[s, kk]
        s = to_shape[s, kk]
        x1 += step
        jumps += 1
        if x1 > mx:
            mx = x1
        if x1 < mn:
            mn = x1
        if step != 0:
            lv = x1 - level_lo
            if lv >= 0 and lv < n_lv and level_hit_t[lv] != level_hit_t[lv]:
                level_hit_t[lv] = t
            if x1 == occ_level and ist[HIT_J] < 0:
                ist[HIT_J] = jumps
                fst[HIT_T] = t
        if s == regen_shape:
            if ist[UPS_J] < 0:
                ist[UPS_J] = jumps
                fst[UPS_T] = t
            if x1 > ref:
                if nep < ep_j.size:
                    ep_j[nep] = jumps
                    ep_t[nep] = t
                    ep_x1[nep] = x1
                if nep == 0:
                    ist[FIRST_J] = jumps
                    ist[FIRST_X1] = x1
                    fst[FIRST_T] = t
                nep += 1
                ref = x1
                ist[LAST_J] = jumps
                ist[LAST_X1] = x1
                fst[LAST_T] = t
        while ck < n_ck and ckpt_jumps[ck] <= jumps:
            ckpt_t[ck] = t
            ckpt_x1[ck] = x1
            ckpt_max[ck] = mx
            ck += 1
        if jumps < tr_shape.size:
            tr_shape[jumps] = s
            tr_x1[jumps] = x1
            tr_t[jumps] = t
        if x1 <= stop_lo:
            status = STOP_LOW
            break
        if x1 >= stop_hi:
            status = STOP_HIGH
            break

    ist[SHAPE] = s
    ist[X1] = x1
    ist[JUMPS] = jumps
    ist[CTR] = ctr
    ist[CKPT] = ck
    ist[STATUS] = status
    ist[MAXX1] = mx
    ist[MINX1] = mn
    ist[NEP] = nep
    ist[REF_X1] = ref
    fst[T] = t
    fst[OCC] = occ
