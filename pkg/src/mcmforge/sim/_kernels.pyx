# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled statevector kernels and the counter-based per-shot RNG.

Mirrored exactly by mcmforge.sim._pykernels; both must produce identical
random streams so simulations are reproducible across backends.
"""
from libc.stdint cimport uint64_t
from libc.math cimport sqrt

import numpy as np

BACKEND = "cython"

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL


cdef inline uint64_t _mix(uint64_t z) nogil:
    z ^= z >> 30
    z *= 0xBF58476D1CE4E5B9ULL
    z ^= z >> 27
    z *= 0x94D049BB133111EBULL
    z ^= z >> 31
    return z


cdef class Stream:
    """splitmix64 stream keyed by (seed, shot index); order-independent."""
    cdef uint64_t state

    def __init__(self, seed, shot):
        cdef uint64_t s = (<uint64_t> (seed & 0xFFFFFFFFFFFFFFFF)) * 0xD1B54A32D192ED03ULL
        s += (<uint64_t> (shot & 0xFFFFFFFFFFFFFFFF) + 1ULL) * GOLDEN
        self.state = _mix(s)

    cpdef double next(self):
        self.state += GOLDEN
        return <double> (_mix(self.state) >> 11) * (1.0 / 9007199254740992.0)


def apply_1q(double complex[::1] st, int axis,
             double complex m00, double complex m01,
             double complex m10, double complex m11):
    cdef Py_ssize_t size = st.shape[0]
    cdef Py_ssize_t stride = (<Py_ssize_t> 1) << axis
    cdef Py_ssize_t step = 2 * stride
    cdef Py_ssize_t base = 0, j
    cdef double complex a, b
    with nogil:
        while base < size:
            j = base
            while j < base + stride:
                a = st[j]
                b = st[j + stride]
                st[j] = m00 * a + m01 * b
                st[j + stride] = m10 * a + m11 * b
                j += 1
            base += step


def apply_x(double complex[::1] st, int axis):
    cdef Py_ssize_t size = st.shape[0]
    cdef Py_ssize_t stride = (<Py_ssize_t> 1) << axis
    cdef Py_ssize_t step = 2 * stride
    cdef Py_ssize_t base = 0, j
    cdef double complex tmp
    with nogil:
        while base < size:
            j = base
            while j < base + stride:
                tmp = st[j]
                st[j] = st[j + stride]
                st[j + stride] = tmp
                j += 1
            base += step


def apply_diag(double complex[::1] st, int axis,
               double complex p0, double complex p1):
    cdef Py_ssize_t size = st.shape[0]
    cdef Py_ssize_t stride = (<Py_ssize_t> 1) << axis
    cdef Py_ssize_t step = 2 * stride
    cdef Py_ssize_t base = 0, j
    with nogil:
        while base < size:
            j = base
            while j < base + stride:
                st[j] = p0 * st[j]
                st[j + stride] = p1 * st[j + stride]
                j += 1
            base += step


def apply_cx(double complex[::1] st, int axis_c, int axis_t):
    cdef Py_ssize_t size = st.shape[0]
    cdef Py_ssize_t sc = (<Py_ssize_t> 1) << axis_c
    cdef Py_ssize_t tt = (<Py_ssize_t> 1) << axis_t
    cdef Py_ssize_t i = 0
    cdef double complex tmp
    with nogil:
        while i < size:
            if (i & sc) and not (i & tt):
                tmp = st[i]
                st[i] = st[i | tt]
                st[i | tt] = tmp
            i += 1


def apply_cz(double complex[::1] st, int axis_c, int axis_t):
    cdef Py_ssize_t size = st.shape[0]
    cdef Py_ssize_t sc = (<Py_ssize_t> 1) << axis_c
    cdef Py_ssize_t tt = (<Py_ssize_t> 1) << axis_t
    cdef Py_ssize_t i = 0
    with nogil:
        while i < size:
            if (i & sc) and (i & tt):
                st[i] = -st[i]
            i += 1


def apply_swap(double complex[::1] st, int axis_a, int axis_b):
    cdef Py_ssize_t size = st.shape[0]
    cdef Py_ssize_t sa = (<Py_ssize_t> 1) << axis_a
    cdef Py_ssize_t sb = (<Py_ssize_t> 1) << axis_b
    cdef Py_ssize_t i = 0, k
    cdef double complex tmp
    with nogil:
        while i < size:
            if (i & sa) and not (i & sb):
                k = (i ^ sa) | sb
                tmp = st[i]
                st[i] = st[k]
                st[k] = tmp
            i += 1


def prob_one(double complex[::1] st, int axis):
    cdef Py_ssize_t size = st.shape[0]
    cdef Py_ssize_t stride = (<Py_ssize_t> 1) << axis
    cdef Py_ssize_t step = 2 * stride
    cdef Py_ssize_t base = stride, j
    cdef double acc = 0.0
    cdef double complex v
    with nogil:
        while base < size:
            j = base
            while j < base + stride:
                v = st[j]
                acc += v.real * v.real + v.imag * v.imag
                j += 1
            base += step
    return acc


def collapse_drop(double complex[::1] st, int axis, int outcome, double prob):
    """Project onto ``outcome`` on ``axis``, drop the axis, renormalize."""
    cdef Py_ssize_t size = st.shape[0]
    cdef Py_ssize_t stride = (<Py_ssize_t> 1) << axis
    cdef Py_ssize_t step = 2 * stride
    out_arr = np.empty(size // 2, dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    cdef Py_ssize_t base = 0, j, k = 0
    cdef Py_ssize_t off = stride if outcome else 0
    cdef double inv = 1.0 / sqrt(prob)
    with nogil:
        while base < size:
            j = base + off
            while j < base + off + stride:
                out[k] = st[j] * inv
                k += 1
                j += 1
            base += step
    return out_arr


def damp_nojump(double complex[::1] st, int axis, double gamma, double p1):
    """No-jump amplitude-damping update diag(1, sqrt(1-gamma)), renormalized."""
    cdef Py_ssize_t size = st.shape[0]
    cdef Py_ssize_t stride = (<Py_ssize_t> 1) << axis
    cdef Py_ssize_t step = 2 * stride
    cdef double nrm = sqrt(1.0 - gamma * p1)
    cdef double f0 = 1.0 / nrm
    cdef double f1 = sqrt(1.0 - gamma) / nrm
    cdef Py_ssize_t base = 0, j
    with nogil:
        while base < size:
            j = base
            while j < base + stride:
                st[j] = st[j] * f0
                st[j + stride] = st[j + stride] * f1
                j += 1
            base += step


def damp_jump(double complex[::1] st, int axis, double p1):
    """Quantum-jump update |1> -> |0>, renormalized in place."""
    cdef Py_ssize_t size = st.shape[0]
    cdef Py_ssize_t stride = (<Py_ssize_t> 1) << axis
    cdef Py_ssize_t step = 2 * stride
    cdef double inv = 1.0 / sqrt(p1)
    cdef Py_ssize_t base = 0, j
    with nogil:
        while base < size:
            j = base
            while j < base + stride:
                st[j] = st[j + stride] * inv
                st[j + stride] = 0.0
                j += 1
            base += step


def norm2(double complex[::1] st):
    cdef Py_ssize_t i = 0
    cdef double acc = 0.0
    cdef double complex v
    with nogil:
        while i < st.shape[0]:
            v = st[i]
            acc += v.real * v.real + v.imag * v.imag
            i += 1
    return acc
