"""Hot scalar kernels, JIT-compiled when numba is available.

The kernels run with the GIL released so engine blocks (threads) overlap
on real cores.  Pure-Python fallbacks keep the package importable and
correct without numba, just slower.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


@njit(nogil=True, cache=True)
def levenshtein_u32(a: np.ndarray, b: np.ndarray) -> int:
    """Edit distance between two codepoint arrays (two-row DP)."""
    n, m = len(a), len(b)
    if n == 0:
        return m
    if m == 0:
        return n
    prev = np.arange(m + 1, dtype=np.int64)
    cur = np.empty(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        cur[0] = i
        ai = a[i - 1]
        for j in range(1, m + 1):
            cost = 0 if ai == b[j - 1] else 1
            best = prev[j - 1] + cost
            if prev[j] + 1 < best:
                best = prev[j] + 1
            if cur[j - 1] + 1 < best:
                best = cur[j - 1] + 1
            cur[j] = best
        prev, cur = cur, prev
    return prev[m]


@njit(nogil=True, cache=True)
def jaccard_sorted(a: np.ndarray, b: np.ndarray) -> float:
    """Jaccard similarity of two sorted, duplicate-free id arrays."""
    n, m = len(a), len(b)
    if n == 0 and m == 0:
        return 0.0
    i = 0
    j = 0
    inter = 0
    while i < n and j < m:
        if a[i] == b[j]:
            inter += 1
            i += 1
            j += 1
        elif a[i] < b[j]:
            i += 1
        else:
            j += 1
    union = n + m - inter
    return inter / union


@njit(nogil=True, cache=True)
def sorted_equal(a: np.ndarray, b: np.ndarray) -> bool:
    if len(a) != len(b):
        return False
    for i in range(len(a)):
        if a[i] != b[i]:
            return False
    return True


def warmup() -> None:
    """Trigger JIT compilation outside timed sections."""
    a = np.array([1, 2, 3], dtype=np.uint32)
    b = np.array([1, 3], dtype=np.uint32)
    levenshtein_u32(a, b)
    ia = np.array([1, 2, 3], dtype=np.int64)
    ib = np.array([2, 3, 4], dtype=np.int64)
    jaccard_sorted(ia, ib)
    sorted_equal(ia, ib)
