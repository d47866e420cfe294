"""Backend selection for the coordinate-sweep kernel.

Prefers the compiled extension, falls back to the numpy twin when it is
missing or when OMNISURF_NO_EXT is set.  Both expose the same
`ascent_sweep` / `sum_rate` contract and are interchangeable to float
round-off; `backend()` reports which one is live.
"""

import os

import numpy as np

from . import _sweep_py

if os.environ.get("OMNISURF_NO_EXT"):
    _impl = _sweep_py
    BACKEND = "python"
else:
    try:
        from . import _sweep_cy as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _sweep_py
        BACKEND = "python"


def backend() -> str:
    """Name of the active kernel backend: 'cython' or 'python'."""
    return BACKEND


def ascent_sweep(contrib, bias, z, states, noise):
    """Dispatch one in-place coordinate pass to the active backend.

    Arrays must be C-contiguous with dtypes complex128 (contrib, z),
    float64 (bias) and int64 (states); z and states are mutated.
    """
    if contrib.dtype != np.complex128 or z.dtype != np.complex128:
        raise TypeError("contrib and z must be complex128")
    if states.dtype != np.int64:
        raise TypeError("states must be int64")
    if bias.dtype != np.float64:
        raise TypeError("bias must be float64")
    return _impl.ascent_sweep(contrib, bias, z, states, float(noise))


def sum_rate(z, noise):
    """Sum rate of a stream-product matrix via the active backend."""
    return _impl.sum_rate(np.ascontiguousarray(z, dtype=np.complex128), float(noise))
