"""Slot layout of the per-replica carry arrays shared by both backends."""
import numpy as np

# integer carry
SHAPE, X1, JUMPS, CTR, CKPT, STATUS, MAXX1, MINX1 = range(8)
NEP, FIRST_J, FIRST_X1, LAST_J, LAST_X1, UPS_J, REF_X1, HIT_J = range(8, 16)
N_IST = 16

# float carry
T, OCC, FIRST_T, LAST_T, UPS_T, HIT_T = range(6)
N_FST = 6

# integer parameters
MAX_JUMPS, UNIT, STOP_LO, STOP_HI, OCC_LEVEL, REGEN_SHAPE, LEVEL_LO = range(7)
N_IP = 7

# float parameters
T_MAX = 0
N_FP = 1

# status codes
RUNNING, BUDGET, TIME_UP, STOP_LOW, STOP_HIGH, DEADLOCK = range(6)
STATUS_NAMES = {
    RUNNING: "running",
    BUDGET: "budget",
    TIME_UP: "time",
    STOP_LOW: "stop-low",
    STOP_HIGH: "stop-high",
    DEADLOCK: "deadlock",
}

NO_LEVEL = np.iinfo(np.int64).min // 2
FAR_LOW = np.iinfo(np.int64).min // 2
FAR_HIGH = np.iinfo(np.int64).max // 2


def initial_carry(shape, x1):
    ist = np.zeros(N_IST, dtype=np.int64)
    ist[SHAPE] = shape
    ist[X1] = x1
    ist[MAXX1] = x1
    ist[MINX1] = x1
    ist[REF_X1] = x1
    for slot in (FIRST_J, LAST_J, UPS_J, HIT_J):
        ist[slot] = -1
    ist[FIRST_X1] = x1
    ist[LAST_X1] = x1
    fst = np.zeros(N_FST)
    for slot in (FIRST_T, UPS_T, HIT_T):
        fst[slot] = np.nan
    fst[LAST_T] = 0.0
    return ist, fst
