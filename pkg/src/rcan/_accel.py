"""Backend selection for the hot kernels.

``RCAN_BACKEND`` is read once at import time:

* ``auto`` (default): per call, the compiled loops for narrow convolutions and
  the BLAS-backed numpy path for wide ones (see ``kernels.pick_backend``);
* ``numba``: always the ``@njit`` loop kernels;
* ``numpy``: always the pure-numpy path.

Without numba installed, ``auto`` and ``numba`` both fall back to numpy.
"""

import os
import warnings

BACKENDS = ("auto", "numba", "numpy")

try:
    import numba  # noqa: F401
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn


def _requested_backend():
    name = os.environ.get("RCAN_BACKEND", "auto").strip().lower()
    if name not in BACKENDS:
        raise ValueError(f"RCAN_BACKEND must be one of {BACKENDS}, got {name!r}")
    if name != "numpy" and not HAS_NUMBA:
        if name == "numba":
            warnings.warn("numba is not installed; falling back to numpy kernels", RuntimeWarning)
        return "numpy"
    return name


BACKEND = _requested_backend()
