# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels; see ``_pykernels`` for semantics."""

from libc.stdlib cimport malloc, free
from libc.stdint cimport int64_t


def levenshtein(str a, str b):
    cdef Py_ssize_t la = len(a), lb = len(b), i, j
    cdef Py_UCS4 ca
    cdef Py_ssize_t *prev
    cdef Py_ssize_t *cur
    cdef Py_ssize_t *tmp
    cdef Py_ssize_t best, v
    if la < lb:
        a, b = b, a
        la, lb = lb, la
    if lb == 0:
        return la
    prev = <Py_ssize_t *> malloc((lb + 1) * sizeof(Py_ssize_t))
    cur = <Py_ssize_t *> malloc((lb + 1) * sizeof(Py_ssize_t))
    if prev == NULL or cur == NULL:
        free(prev)
        free(cur)
        raise MemoryError()
    try:
        for j in range(lb + 1):
            prev[j] = j
        for i in range(1, la + 1):
            ca = a[i - 1]
            cur[0] = i
            for j in range(1, lb + 1):
                best = prev[j] + 1
                v = cur[j - 1] + 1
                if v < best:
                    best = v
                v = prev[j - 1] + (0 if ca == b[j - 1] else 1)
                if v < best:
                    best = v
                cur[j] = best
            tmp = prev
            prev = cur
            cur = tmp
        return prev[lb]
    finally:
        free(prev)
        free(cur)


def dominance_counts(a, b):
    cdef Py_ssize_t m = len(a), n = len(b), i, j
    cdef double x
    cdef int64_t gt = 0, lt = 0
    cdef double *av = <double *> malloc((m + 1) * sizeof(double))
    cdef double *bv = <double *> malloc((n + 1) * sizeof(double))
    if av == NULL or bv == NULL:
        free(av)
        free(bv)
        raise MemoryError()
    try:
        for i in range(m):
            av[i] = a[i]
        for j in range(n):
            bv[j] = b[j]
        for i in range(m):
            x = av[i]
            for j in range(n):
                if x > bv[j]:
                    gt += 1
                elif x < bv[j]:
                    lt += 1
        return int(gt), int(lt)
    finally:
        free(av)
        free(bv)


def mann_whitney_null_counts(int m, int n):
    cdef int i, j, u, size
    cdef int64_t *f
    cdef int64_t *g
    cdef int64_t *tmp
    if m < 0 or n < 0:
        raise ValueError("sample sizes must be non-negative")
    if m + n > 60:
        # int64 overflows past C(60, 30); defer to arbitrary precision
        from memetron._pykernels import mann_whitney_null_counts as py_counts
        return py_counts(m, n)
    size = m * n + 1
    # row-major table over (j, u) with stride `size`, rolled over i
    f = <int64_t *> malloc((n + 1) * size * sizeof(int64_t))
    g = <int64_t *> malloc((n + 1) * size * sizeof(int64_t))
    if f == NULL or g == NULL:
        free(f)
        free(g)
        raise MemoryError()
    try:
        for j in range(n + 1):
            for u in range(size):
                f[j * size + u] = 1 if u == 0 else 0
        for i in range(1, m + 1):
            for u in range(size):
                g[u] = 1 if u == 0 else 0
            for j in range(1, n + 1):
                for u in range(size):
                    g[j * size + u] = g[(j - 1) * size + u]
                    if u >= j:
                        g[j * size + u] += f[j * size + u - j]
            tmp = f
            f = g
            g = tmp
        return [int(f[n * size + u]) for u in range(size)]
    finally:
        free(f)
        free(g)
