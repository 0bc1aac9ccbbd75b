# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: regression fit, band scan, child routing.

Contracts mirror hermit._kernels_py; the loops run without the GIL so
multi-threaded construction gets real parallelism.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

FIT_OK = 0
FIT_DEGENERATE = 1
FIT_EMPTY = 2


def fit_line(double[::1] ms, double[::1] ns):
    """Least-squares line through (ms, ns): slope, intercept, status."""
    cdef Py_ssize_t k = ms.shape[0]
    if k == 0:
        return 0.0, 0.0, FIT_EMPTY
    cdef double m0 = ms[0]
    cdef double n0 = ns[0]
    cdef double sm = 0.0, sn = 0.0, smm = 0.0, smn = 0.0
    cdef double dm, dn
    cdef Py_ssize_t i
    with nogil:
        for i in range(k):
            dm = ms[i] - m0
            dn = ns[i] - n0
            sm += dm
            sn += dn
            smm += dm * dm
            smn += dm * dn
    cdef double svar = smm - sm * sm / k
    cdef double scov = smn - sm * sn / k
    cdef double mean_m = m0 + sm / k
    cdef double mean_n = n0 + sn / k
    if svar <= 0.0:
        return 0.0, mean_n, FIT_DEGENERATE
    cdef double slope = scov / svar
    return slope, mean_n - slope * mean_m, FIT_OK


def scan_outliers(double[::1] ms, double[::1] ns, double slope,
                  double intercept, double band, double max_outliers):
    """Outlier indices, or None once the count strictly exceeds the cap."""
    cdef Py_ssize_t k = ms.shape[0]
    out = np.empty(k, dtype=np.int64)
    cdef long long[::1] buf = out
    cdef Py_ssize_t i, count = 0
    cdef bint exceeded = 0
    with nogil:
        for i in range(k):
            if fabs(ns[i] - (slope * ms[i] + intercept)) > band:
                buf[count] = i
                count += 1
                if count > max_outliers:
                    exceeded = 1
                    break
    if exceeded:
        return None
    return out[:count]


def route_values(double[::1] ms, double[::1] inner_bounds):
    """Child ordinal per value (bisect-right against interior boundaries)."""
    cdef Py_ssize_t k = ms.shape[0]
    cdef Py_ssize_t nb = inner_bounds.shape[0]
    out = np.empty(k, dtype=np.int64)
    cdef long long[::1] buf = out
    cdef Py_ssize_t i, lo, hi, mid
    cdef double m
    with nogil:
        for i in range(k):
            m = ms[i]
            lo = 0
            hi = nb
            while lo < hi:
                mid = (lo + hi) >> 1
                if inner_bounds[mid] <= m:
                    lo = mid + 1
                else:
                    hi = mid
            buf[i] = lo
    return out
