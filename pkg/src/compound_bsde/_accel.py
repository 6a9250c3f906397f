"""Backend selection for the hot numeric kernels.

Every kernel ships twice: a numba ``@njit`` loop version and a vectorised
numpy version.  The numba path is the default when numba imports; set
``COMPOUND_BSDE_BACKEND=numpy`` to force the fallback.  ``set_backend`` does
the same at runtime (used by the tests and the benchmark).
"""

from __future__ import annotations

import contextlib
import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_BACKENDS = ("numba", "numpy")


def _initial_backend() -> str:
    value = os.environ.get("COMPOUND_BSDE_BACKEND", "numba").strip().lower()
    if value not in _BACKENDS:
        raise ValueError(f"COMPOUND_BSDE_BACKEND must be one of {_BACKENDS}, got {value!r}")
    if value == "numba" and not HAVE_NUMBA:
        return "numpy"
    return value


_backend = _initial_backend()


def backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in _BACKENDS:
        raise ValueError(f"backend must be one of {_BACKENDS}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


@contextlib.contextmanager
def use_backend(name: str):
    previous = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def set_threads(n: int) -> None:
    """Cap numba's worker pool. Results do not depend on this."""
    if HAVE_NUMBA and n and n > 0:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity otherwise."""
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)


if HAVE_NUMBA:
    prange = numba.prange
else:  # pragma: no cover
    prange = range


def dispatch(numba_impl, numpy_impl):
    """Route a call to one of two implementations based on the active backend."""

    def call(*args, **kwargs):
        if _backend == "numba":
            return numba_impl(*args, **kwargs)
        return numpy_impl(*args, **kwargs)

    call.numba_impl = numba_impl
    call.numpy_impl = numpy_impl
    call.__name__ = getattr(numpy_impl, "__name__", "kernel").replace("_numpy", "")
    call.__doc__ = numpy_impl.__doc__
    return call
