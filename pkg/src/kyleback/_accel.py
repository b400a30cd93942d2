"""numba toggle.

Kernels are decorated with ``njit`` from here.  Set ``KB_DISABLE_NUMBA=1`` to
route every simulation through the generic numpy stepper instead; the choice
can also be flipped at runtime with ``set_backend``.
"""
import os

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

_FALSY = ("", "0", "false", "no", "off")


def _env_disabled():
    return os.environ.get("KB_DISABLE_NUMBA", "").strip().lower() not in _FALSY


_backend = "numba" if (HAVE_NUMBA and not _env_disabled()) else "numpy"


def njit(*args, **kwargs):
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def backend():
    return _backend


def set_backend(name):
    """Select 'numba' or 'numpy'; returns the previous backend."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    prev, _backend = _backend, name
    return prev
