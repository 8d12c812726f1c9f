# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled tree-expansion kernels.

Bit-identical to the numpy fallback in ``_pure``: same splitmix64 key chain,
same uniforms, same child ordering and subset-selection tie-breaks.
"""

import numpy as np

cimport numpy as cnp
from libc.stdint cimport int64_t, uint64_t

IMPL = "cython"

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15UL
cdef uint64_t MIX1 = 0xBF58476D1CE4E5B9UL
cdef uint64_t MIX2 = 0x94D049BB133111EBUL
cdef uint64_t CHILD_SALT = 0xD1342543DE82EF95UL
cdef uint64_t COUNT_STREAM = 0xA24BAED4963EE407UL * 0xD1342543DE82EF95UL

cdef double U53 = 2.0 ** -53


cdef inline uint64_t splitmix64(uint64_t x) nogil:
    x = x + GOLDEN
    x = (x ^ (x >> 30)) * MIX1
    x = (x ^ (x >> 27)) * MIX2
    return x ^ (x >> 31)


cdef inline double key_uniform(uint64_t k) nogil:
    return <double> (k >> 11) * U53


def expand_extinction(cnp.ndarray[int64_t, ndim=2] idx,
                      cnp.ndarray[uint64_t, ndim=1] keys,
                      int d, double p):
    cdef Py_ssize_t n = idx.shape[0]
    cdef int two_d = 1 << d
    cdef cnp.ndarray[int64_t, ndim=2] out_idx = np.empty((n * two_d, d), dtype=np.int64)
    cdef cnp.ndarray[uint64_t, ndim=1] out_keys = np.empty(n * two_d, dtype=np.uint64)
    cdef cnp.ndarray[int64_t, ndim=1] out_par = np.empty(n * two_d, dtype=np.int64)
    cdef Py_ssize_t i, w = 0
    cdef int o, a
    cdef uint64_t ck
    with nogil:
        for i in range(n):
            for o in range(two_d):
                ck = splitmix64(keys[i] ^ ((<uint64_t> (o + 1)) * CHILD_SALT))
                if key_uniform(ck) <= p:
                    for a in range(d):
                        out_idx[w, a] = idx[i, a] * 2 + ((o >> (d - 1 - a)) & 1)
                    out_keys[w] = ck
                    out_par[w] = i
                    w += 1
    return out_idx[:w], out_keys[:w], out_par[:w]


def expand_surviving(cnp.ndarray[int64_t, ndim=2] idx,
                     cnp.ndarray[uint64_t, ndim=1] keys,
                     int d,
                     cnp.ndarray[double, ndim=1] offspring_cdf):
    cdef Py_ssize_t n = idx.shape[0]
    cdef int two_d = 1 << d
    cdef cnp.ndarray[int64_t, ndim=2] out_idx = np.empty((n * two_d, d), dtype=np.int64)
    cdef cnp.ndarray[uint64_t, ndim=1] out_keys = np.empty(n * two_d, dtype=np.uint64)
    cdef cnp.ndarray[int64_t, ndim=1] out_par = np.empty(n * two_d, dtype=np.int64)
    cdef uint64_t[64] ck
    cdef double[64] sc
    cdef int[64] sel
    cdef Py_ssize_t i, w = 0
    cdef int o, a, k, nsel, j, best
    cdef double u
    with nogil:
        for i in range(n):
            u = key_uniform(splitmix64(keys[i] ^ COUNT_STREAM))
            k = 1
            while k < two_d and offspring_cdf[k - 1] <= u:
                k += 1
            for o in range(two_d):
                ck[o] = splitmix64(keys[i] ^ ((<uint64_t> (o + 1)) * CHILD_SALT))
                sc[o] = key_uniform(ck[o])
                sel[o] = 0
            # mark the k smallest scores (ties broken by child offset)
            for nsel in range(k):
                best = -1
                for o in range(two_d):
                    if sel[o]:
                        continue
                    if best < 0 or sc[o] < sc[best]:
                        best = o
                sel[best] = 1
            for o in range(two_d):
                if sel[o]:
                    for a in range(d):
                        out_idx[w, a] = idx[i, a] * 2 + ((o >> (d - 1 - a)) & 1)
                    out_keys[w] = ck[o]
                    out_par[w] = i
                    w += 1
    return out_idx[:w], out_keys[:w], out_par[:w]


def offspring_counts(cnp.ndarray[uint64_t, ndim=1] keys,
                     cnp.ndarray[double, ndim=1] offspring_cdf):
    cdef Py_ssize_t n = keys.shape[0]
    cdef int two_d = offspring_cdf.shape[0]
    cdef cnp.ndarray[int64_t, ndim=1] out = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t i
    cdef int k
    cdef double u
    with nogil:
        for i in range(n):
            u = key_uniform(splitmix64(keys[i] ^ COUNT_STREAM))
            k = 1
            while k < two_d and offspring_cdf[k - 1] <= u:
                k += 1
            out[i] = k
    return out
