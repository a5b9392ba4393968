"""Backend selection for the hot simulation kernels.

``SPIDERWALK_BACKEND=numpy`` forces the vectorized numpy path; the default
is numba when it imports cleanly.
"""
import os

_ENV_FLAG = "SPIDERWALK_BACKEND"
BACKENDS = ("numba", "numpy")


def _numba_available():
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


HAS_NUMBA = _numba_available()


def default_backend():
    choice = os.environ.get(_ENV_FLAG, "").strip().lower()
    if choice:
        if choice not in BACKENDS:
            raise ValueError(f"{_ENV_FLAG}={choice!r}; expected one of {BACKENDS}")
        if choice == "numba" and not HAS_NUMBA:
            raise ImportError(f"{_ENV_FLAG}=numba but numba is not importable")
        return choice
    return "numba" if HAS_NUMBA else "numpy"


def resolve(backend=None):
    if backend is None:
        return default_backend()
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAS_NUMBA:
        raise ImportError("numba backend requested but numba is not importable")
    return backend
