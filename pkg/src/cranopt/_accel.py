"""Numba acceleration toggle.

Hot kernels are compiled with numba's ``@njit`` by default. Setting the
environment variable ``CRANOPT_DISABLE_NUMBA=1`` (or ``true``/``yes``/``on``)
before import selects vectorized pure-numpy implementations instead; results
are numerically equivalent, only the speed differs. The flag is read once at
import time.
"""

import os
import warnings

_flag = os.environ.get("CRANOPT_DISABLE_NUMBA", "").strip().lower()
DISABLED_BY_ENV = _flag in ("1", "true", "yes", "on")

NUMBA_ENABLED = False
if not DISABLED_BY_ENV:
    try:
        from numba import njit as _njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        warnings.warn(
            "numba is not importable; falling back to pure-numpy kernels",
            RuntimeWarning,
            stacklevel=2,
        )


if NUMBA_ENABLED:

    def accelerated(func):
        """Compile ``func`` with njit (identity when numba is off)."""
        return _njit(cache=True)(func)

else:

    def accelerated(func):
        return func


def set_num_threads(n: int) -> None:
    """Cap numba's worker pool; no-op on the pure-numpy path.

    The kernels here are single-threaded by design (deterministic reduction
    order), so n=1 skips touching numba's threading layer entirely.
    """
    n = max(1, int(n))
    if NUMBA_ENABLED and n > 1:
        import numba

        numba.set_num_threads(n)
