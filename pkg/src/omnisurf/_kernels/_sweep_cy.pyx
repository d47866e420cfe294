# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled coordinate-sweep kernel.

Mirrors `_sweep_py.ascent_sweep`; the python module is the reference
semantics, this one exists because the sweep dominates the optimizer's
runtime at realistic element counts.
"""

from libc.math cimport log2
from libc.stdint cimport int64_t


cdef double _objective(const double complex[:, :, :, ::1] contrib,
                       double complex[:, ::1] base,
                       Py_ssize_t m, Py_ssize_t s,
                       Py_ssize_t k_count, Py_ssize_t j_count,
                       double noise) noexcept nogil:
    cdef Py_ssize_t a, b
    cdef double total = 0.0
    cdef double sig, interf, pw
    cdef double complex w
    for a in range(k_count):
        sig = 0.0
        interf = 0.0
        for b in range(j_count):
            w = base[a, b] + contrib[m, s, a, b]
            pw = w.real * w.real + w.imag * w.imag
            if b == a:
                sig = pw
            else:
                interf += pw
        total += log2(1.0 + sig / (interf + noise))
    return total


def sum_rate(double complex[:, ::1] z, double noise):
    """Sum rate of a stream-product matrix; row k's own stream is column k."""
    cdef Py_ssize_t k_count = z.shape[0], j_count = z.shape[1]
    cdef Py_ssize_t a, b
    cdef double total = 0.0, sig, interf, pw
    cdef double complex w
    for a in range(k_count):
        sig = 0.0
        interf = 0.0
        for b in range(j_count):
            w = z[a, b]
            pw = w.real * w.real + w.imag * w.imag
            if b == a:
                sig = pw
            else:
                interf += pw
        total += log2(1.0 + sig / (interf + noise))
    return total


def ascent_sweep(const double complex[:, :, :, ::1] contrib,
                 const double[:, ::1] bias,
                 double complex[:, ::1] z,
                 int64_t[::1] states,
                 double noise):
    """One full in-place coordinate pass; see the python twin for semantics."""
    cdef Py_ssize_t m_count = contrib.shape[0], s_count = contrib.shape[1]
    cdef Py_ssize_t k_count = z.shape[0], j_count = z.shape[1]
    cdef Py_ssize_t m, s, a, b, cur, best
    cdef double best_obj, obj
    cdef int changes = 0
    cdef double complex[:, ::1] base = z.copy()

    with nogil:
        for m in range(m_count):
            cur = <Py_ssize_t> states[m]
            for a in range(k_count):
                for b in range(j_count):
                    base[a, b] = z[a, b] - contrib[m, cur, a, b]
            best = cur
            best_obj = _objective(contrib, base, m, cur, k_count, j_count, noise) + bias[m, cur]
            for s in range(s_count):
                if s == cur:
                    continue
                obj = _objective(contrib, base, m, s, k_count, j_count, noise) + bias[m, s]
                if obj > best_obj:
                    best = s
                    best_obj = obj
            if best != cur:
                states[m] = <int64_t> best
                changes += 1
            for a in range(k_count):
                for b in range(j_count):
                    z[a, b] = base[a, b] + contrib[m, best, a, b]

    return changes, sum_rate(z, noise)
