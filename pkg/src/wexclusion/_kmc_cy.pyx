# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled KMC kernel. Must stay bit-compatible with ``_kmc_py.py``."""

from libc.math cimport log, INFINITY
from libc.stdint cimport uint8_t, uint64_t, int64_t

cdef enum:
    REBUILD_EVERY = 1048576


cdef inline double _rate(const uint8_t[::1] eta, const double[::1] xi, double a,
                         double n2, Py_ssize_t n, Py_ssize_t y) noexcept nogil:
    cdef Py_ssize_t yp1 = y + 1 if y + 1 < n else 0
    cdef Py_ssize_t ym1, yp2
    if eta[y] == eta[yp1]:
        return 0.0
    ym1 = y - 1 if y > 0 else n - 1
    yp2 = yp1 + 1 if yp1 + 1 < n else 0
    return n2 * xi[y] * (1.0 + a * <double>(eta[ym1] + eta[yp2]))


cdef inline uint64_t _next(uint64_t* state) noexcept nogil:
    cdef uint64_t z
    state[0] = state[0] + <uint64_t>0x9E3779B97F4A7C15ULL
    z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef void _rebuild(const uint8_t[::1] eta, const double[::1] xi, double a, double n2,
                   double[::1] tree, Py_ssize_t size) noexcept nogil:
    cdef Py_ssize_t n = eta.shape[0]
    cdef Py_ssize_t y, i
    for i in range(2 * size):
        tree[i] = 0.0
    for y in range(n):
        tree[size + y] = _rate(eta, xi, a, n2, n, y)
    i = size - 1
    while i > 0:
        tree[i] = tree[2 * i] + tree[2 * i + 1]
        i -= 1


def rebuild(uint8_t[::1] eta, const double[::1] xi, double a, double n2,
            double[::1] tree, Py_ssize_t size):
    _rebuild(eta, xi, a, n2, tree, size)


def run_events(uint8_t[::1] eta, const double[::1] xi, double a, double n2,
               double[::1] tree, Py_ssize_t size, uint64_t state, double t,
               double pending, double t_target, int64_t events,
               int64_t since_rebuild, int64_t max_events=-1):
    cdef Py_ssize_t n = eta.shape[0]
    cdef Py_ssize_t i, b, bp1, y, j, k
    cdef double total, u, v, left
    cdef uint64_t z
    cdef uint8_t tmp
    cdef int64_t done = 0
    with nogil:
        while True:
            if pending < 0.0:
                total = tree[1]
                if total <= 0.0:
                    pending = INFINITY
                else:
                    z = _next(&state)
                    u = 1.0 - <double>(z >> 11) * (1.0 / 9007199254740992.0)
                    pending = t - log(u) / total
            if pending > t_target or done == max_events:
                if pending > t_target:
                    t = t_target
                break
            t = pending
            pending = -1.0
            z = _next(&state)
            v = <double>(z >> 11) * (1.0 / 9007199254740992.0) * tree[1]
            i = 1
            while i < size:
                left = tree[2 * i]
                if v >= left and tree[2 * i + 1] > 0.0:
                    v -= left
                    i = 2 * i + 1
                else:
                    i = 2 * i
            b = i - size
            bp1 = b + 1 if b + 1 < n else 0
            tmp = eta[b]
            eta[b] = eta[bp1]
            eta[bp1] = tmp
            for k in range(-2, 3):
                y = (b + k + n) % n
                j = size + y
                tree[j] = _rate(eta, xi, a, n2, n, y)
                j >>= 1
                while j >= 1:
                    tree[j] = tree[2 * j] + tree[2 * j + 1]
                    j >>= 1
            events += 1
            done += 1
            since_rebuild += 1
            if since_rebuild >= REBUILD_EVERY:
                _rebuild(eta, xi, a, n2, tree, size)
                since_rebuild = 0
    return t, pending, state, events, since_rebuild
