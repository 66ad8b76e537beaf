# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled arrival-sweep kernels.

Both kernels return one emissions value per valid arrival slot, for a job of
``full`` whole hours plus a fractional tail ``frac`` and ``slack`` whole
slots of start delay.
"""
import numpy as np
cimport numpy as cnp
from libc.string cimport memmove

cnp.import_array()


cdef inline Py_ssize_t _n_slots(Py_ssize_t full, double frac):
    return full + (1 if frac > 0.0 else 0)


def sweep_deferred(const double[::1] values, Py_ssize_t full, double frac, Py_ssize_t slack):
    """Per-arrival (baseline, deferred) emissions."""
    cdef Py_ssize_t n = values.shape[0]
    cdef Py_ssize_t n_slots = _n_slots(full, frac)
    cdef Py_ssize_t n_arr = n - (n_slots + slack) + 1
    cdef Py_ssize_t n_cost = n - n_slots + 1
    if n_arr <= 0:
        return np.empty(0), np.empty(0)

    cost_arr = np.empty(n_cost, dtype=np.float64)
    base_arr = np.empty(n_arr, dtype=np.float64)
    def_arr = np.empty(n_arr, dtype=np.float64)
    dq_arr = np.empty(n_cost, dtype=np.intp)
    cdef double[::1] cost = cost_arr
    cdef double[::1] base = base_arr
    cdef double[::1] deferred = def_arr
    cdef Py_ssize_t[::1] dq = dq_arr
    cdef Py_ssize_t s, i, head = 0, tail = 0, a
    cdef double acc

    for s in range(n_cost):
        acc = 0.0
        for i in range(full):
            acc += values[s + i]
        if frac > 0.0:
            acc += frac * values[s + full]
        cost[s] = acc

    # monotone deque; strict pop keeps the earliest of equal minima in front
    for s in range(n_cost):
        while tail > head and cost[dq[tail - 1]] > cost[s]:
            tail -= 1
        dq[tail] = s
        tail += 1
        a = s - slack
        if a >= 0:
            while dq[head] < a:
                head += 1
            base[a] = cost[a]
            deferred[a] = cost[dq[head]]
    return base_arr, def_arr


cdef Py_ssize_t _lower_bound(double* buf, Py_ssize_t size, double x) nogil:
    cdef Py_ssize_t lo = 0, hi = size, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if buf[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


def sweep_interrupted(const double[::1] values, Py_ssize_t full, double frac, Py_ssize_t slack):
    """Per-arrival emissions of the k-smallest-slots placement."""
    cdef Py_ssize_t n = values.shape[0]
    cdef Py_ssize_t width = _n_slots(full, frac) + slack
    cdef Py_ssize_t n_arr = n - width + 1
    if n_arr <= 0:
        return np.empty(0)

    out_arr = np.empty(n_arr, dtype=np.float64)
    buf_arr = np.sort(np.asarray(values[:width]))
    cdef double[::1] out = out_arr
    cdef double[::1] bufv = buf_arr
    cdef double* buf = &bufv[0]
    cdef Py_ssize_t a, i, pos
    cdef double acc, old, new

    for a in range(n_arr):
        if a > 0:
            old = values[a - 1]
            new = values[a + width - 1]
            pos = _lower_bound(buf, width, old)
            memmove(buf + pos, buf + pos + 1, (width - pos - 1) * sizeof(double))
            pos = _lower_bound(buf, width - 1, new)
            memmove(buf + pos + 1, buf + pos, (width - 1 - pos) * sizeof(double))
            buf[pos] = new
        acc = 0.0
        for i in range(full):
            acc += buf[i]
        if frac > 0.0:
            acc += frac * buf[full]
        out[a] = acc
    return out_arr
