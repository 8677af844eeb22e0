"""Switch between numba-compiled kernels and the plain Python/numpy path.

Set ``CAPDERIV_DISABLE_NUMBA=1`` before import to run every kernel as ordinary
Python. Both paths draw from the same splitmix64 stream and consume it
identically, so they return the same numbers.
"""
import os

DISABLED = os.environ.get("CAPDERIV_DISABLE_NUMBA", "").lower() in ("1", "true", "yes")

if DISABLED:
    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
else:
    from numba import njit  # noqa: F401

BACKEND = "python" if DISABLED else "numba"
