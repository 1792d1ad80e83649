"""Allocator tuning for large temporary arrays.

Fresh pages are expensive on some virtual machines. Keeping freed memory in
the heap (instead of returning it to the kernel after every large temporary)
makes repeated curvature evaluations several times faster.
"""

import ctypes
import ctypes.util
import os

_M_TRIM_THRESHOLD = -1
_M_TOP_PAD = -2
_M_MMAP_THRESHOLD = -3

_done = False


def tune_allocator() -> bool:
    """Raise glibc trim/mmap thresholds once per process; returns True if applied.

    Set ``TOPOVAR_NO_MALLOC_TUNING=1`` to skip.
    """
    global _done
    if _done:
        return True
    if os.environ.get("TOPOVAR_NO_MALLOC_TUNING"):
        return False
    name = ctypes.util.find_library("c")
    if not name:
        return False
    try:
        libc = ctypes.CDLL(name)
        mallopt = libc.mallopt
    except (OSError, AttributeError):
        return False
    mallopt.argtypes = [ctypes.c_int, ctypes.c_int]
    ok = all(
        mallopt(param, value) == 1
        for param, value in ((_M_MMAP_THRESHOLD, 1 << 30), (_M_TRIM_THRESHOLD, 2**31 - 1), (_M_TOP_PAD, 64 << 20))
    )
    _done = ok
    return ok
