"""Backend selection for the hot kernels.

The compiled ``_core`` extension is used when it imports; otherwise, or when
``VK_BACKEND=python`` is set, the numpy fallback is used.  ``use_backend``
switches temporarily, which the tests and the benchmark rely on.
"""
import contextlib
import os

import numpy as np

from . import _fallback

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

_IMPLS = {"python": _fallback}
if _core is not None:
    _IMPLS["cython"] = _core

available = tuple(sorted(_IMPLS))

if os.environ.get("VK_BACKEND", "").lower() == "python" or _core is None:
    _active = "python"
else:
    _active = "cython"


def backend():
    """Name of the active backend, ``"cython"`` or ``"python"``."""
    return _active


@contextlib.contextmanager
def use_backend(name):
    """Temporarily select a backend by name."""
    global _active
    if name not in _IMPLS:
        raise ValueError(f"backend {name!r} unavailable; have {available}")
    prev, _active = _active, name
    try:
        yield
    finally:
        _active = prev


# Above this many kernel entries the BLAS-backed numpy contraction beats the
# compiled loop (see benchmarks/bench_kernels.py), so the compiled backend
# hands those over.
BLAS_CROSSOVER = 1024


def contract_windows(kernel, signals, base, taps, order):
    impl = _IMPLS[_active]
    if np.size(kernel) >= BLAS_CROSSOVER:
        impl = _fallback
    return impl.contract_windows(
        np.ascontiguousarray(kernel, dtype=np.float64).reshape(-1),
        np.ascontiguousarray(signals, dtype=np.float64),
        np.ascontiguousarray(base, dtype=np.int64),
        np.ascontiguousarray(taps, dtype=np.int64),
        int(order),
    )


def outer_accumulate(result, product, offsets, weights, bases):
    _IMPLS[_active].outer_accumulate(
        result,
        np.ascontiguousarray(product, dtype=np.float64).reshape(-1),
        np.ascontiguousarray(offsets, dtype=np.int64),
        np.ascontiguousarray(weights, dtype=np.float64),
        np.ascontiguousarray(bases, dtype=np.int64),
    )


def jacobi_rotate(cols, right, tol, floor, max_sweeps):
    return _IMPLS[_active].jacobi_rotate(cols, right, float(tol), float(floor),
                                         int(max_sweeps))
