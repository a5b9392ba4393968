"""Batch driver over the two kernel backends.

``simulate`` runs independent replicas of the spider jump process and
returns raw per-replica arrays; :mod:`spiderwalk.sim` builds the public API
on top of it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _backend
from . import layout as lay
from ._numpy import advance_batch


@dataclass
class KernelOutput:
    ist: np.ndarray
    fst: np.ndarray
    ckpt_jumps: np.ndarray
    ckpt_t: np.ndarray
    ckpt_x1: np.ndarray
    ckpt_max: np.ndarray
    ep_j: np.ndarray
    ep_t: np.ndarray
    ep_x1: np.ndarray
    tr_shape: np.ndarray
    tr_x1: np.ndarray
    tr_t: np.ndarray
    level_lo: int
    level_hit_t: np.ndarray
    backend: str


def _alloc(R, n_ck, epoch_cap, trace_cap, n_levels):
    return dict(
        ckpt_t=np.full((R, n_ck), np.nan),
        ckpt_x1=np.zeros((R, n_ck), dtype=np.int64),
        ckpt_max=np.zeros((R, n_ck), dtype=np.int64),
        ep_j=np.full((R, epoch_cap), -1, dtype=np.int64),
        ep_t=np.full((R, epoch_cap), np.nan),
        ep_x1=np.zeros((R, epoch_cap), dtype=np.int64),
        tr_shape=np.full((R, trace_cap), -1, dtype=np.int64),
        tr_x1=np.zeros((R, trace_cap), dtype=np.int64),
        tr_t=np.full((R, trace_cap), np.nan),
        level_hit_t=np.full((R, n_levels), np.nan),
    )


def simulate(L, envs, traj_keys, start_shape, start_x1, max_jumps, *,
             unit=False, t_max=np.inf, stop_lo=None, stop_hi=None, occ_level=None,
             regen_shape=None, level_lo=0, n_levels=0, checkpoints=(),
             epoch_cap=0, trace_cap=0, backend=None, carry=None):
    """Run ``len(traj_keys)`` replicas.

    ``envs`` is one Environment shared by every replica or a list with one
    per replica. ``carry=(ist, fst)`` resumes from a previous output.
    """
    backend = _backend.resolve(backend)
    traj_keys = np.asarray(traj_keys, dtype=np.uint64)
    R = traj_keys.size
    env_list = list(envs) if isinstance(envs, (list, tuple)) else [envs] * R
    if len(env_list) != R:
        raise ValueError("need one environment per replica")

    to_shape, dx1, site_off, is_up = L.tables
    ckpt_jumps = np.asarray(sorted(checkpoints), dtype=np.int64)
    out = _alloc(R, ckpt_jumps.size, epoch_cap, trace_cap, n_levels)

    if carry is None:
        ist = np.empty((R, lay.N_IST), dtype=np.int64)
        fst = np.empty((R, lay.N_FST))
        for r in range(R):
            ist[r], fst[r] = lay.initial_carry(start_shape, start_x1)
    else:
        ist, fst = (np.array(a, copy=True) for a in carry)

    ip = np.zeros(lay.N_IP, dtype=np.int64)
    ip[lay.MAX_JUMPS] = max_jumps
    ip[lay.UNIT] = int(bool(unit))
    ip[lay.STOP_LO] = lay.FAR_LOW if stop_lo is None else stop_lo
    ip[lay.STOP_HI] = lay.FAR_HIGH if stop_hi is None else stop_hi
    ip[lay.OCC_LEVEL] = lay.NO_LEVEL if occ_level is None else occ_level
    ip[lay.REGEN_SHAPE] = start_shape if regen_shape is None else regen_shape
    ip[lay.LEVEL_LO] = level_lo
    fp = np.array([t_max], dtype=np.float64)

    if backend == "numba":
        from ._numba import advance

        views = {}
        for r in range(R):
            env = env_list[r]
            if id(env) not in views:
                views[id(env)] = env.kernel_view()
            key, cum, vals, win, win_lo = views[id(env)]
            row = {k: v[r] for k, v in out.items()}
            advance(to_shape, dx1, site_off, is_up, key, cum, vals, win, win_lo,
                    traj_keys[r], ist[r], fst[r], ip, fp,
                    ckpt_jumps, row["ckpt_t"], row["ckpt_x1"], row["ckpt_max"],
                    row["ep_j"], row["ep_t"], row["ep_x1"],
                    row["tr_shape"], row["tr_x1"], row["tr_t"], row["level_hit_t"])
    else:
        distinct = {id(e): e for e in env_list}
        if len(distinct) == 1 or not any(e.has_overrides for e in distinct.values()):
            groups = [np.arange(R)]
        else:
            groups = [np.array([r]) for r in range(R)]
        for g in groups:
            first = env_list[g[0]]
            _, cum, vals, win, win_lo = first.kernel_view()
            if len(distinct) > 1 and not first.has_overrides:
                win = np.empty(0)
            keys = np.array([env_list[r].key for r in g], dtype=np.uint64)
            sub = {k: v[g] for k, v in out.items()}
            ist_g, fst_g = ist[g], fst[g]
            advance_batch(to_shape, dx1, site_off, is_up, keys, cum, vals, win, win_lo,
                          traj_keys[g], ist_g, fst_g, ip, fp,
                          ckpt_jumps, sub["ckpt_t"], sub["ckpt_x1"], sub["ckpt_max"],
                          sub["ep_j"], sub["ep_t"], sub["ep_x1"],
                          sub["tr_shape"], sub["tr_x1"], sub["tr_t"], sub["level_hit_t"])
            ist[g], fst[g] = ist_g, fst_g
            for k, v in sub.items():
                out[k][g] = v

    return KernelOutput(ist=ist, fst=fst, ckpt_jumps=ckpt_jumps, level_lo=level_lo,
                        backend=backend, **out)
