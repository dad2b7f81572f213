# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled subset kernels for the exhaustive quorum-intersection check."""

from array import array

from libc.stdint cimport int64_t, uint32_t


def subset_weights(powers):
    cdef Py_ssize_t n = len(powers)
    cdef Py_ssize_t size = 1 << n
    cdef int64_t[::1] pw = array("q", powers)
    out = array("q", bytes(8 * size))
    cdef int64_t[::1] o = out
    cdef Py_ssize_t mask, low, bit
    for mask in range(1, size):
        low = mask & -mask
        bit = 0
        while (low >> bit) != 1:
            bit += 1
        o[mask] = o[mask ^ low] + pw[bit]
    return out


def find_bft_violation(const uint32_t[::1] quorums, const uint32_t[::1] byz_sets):
    cdef Py_ssize_t nq = quorums.shape[0]
    cdef Py_ssize_t nb = byz_sets.shape[0]
    cdef Py_ssize_t i, j, k
    cdef uint32_t qi, inter
    for i in range(nq):
        qi = quorums[i]
        for j in range(i, nq):
            inter = qi & quorums[j]
            for k in range(nb):
                if (inter & ~byz_sets[k]) == 0:
                    return (i, j, k)
    return None
