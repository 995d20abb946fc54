"""Pure-NumPy fallback for the compiled statevector kernels.

Semantically identical to mcmforge.sim._kernels, including the RNG stream,
so results are reproducible whichever backend gets selected at import time.
Set MCMFORGE_PURE_PYTHON=1 to force this backend.
"""
from __future__ import annotations

from math import sqrt

import numpy as np

BACKEND = "python"

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK
    z ^= z >> 31
    return z


class Stream:
    """splitmix64 stream keyed by (seed, shot index); order-independent."""

    __slots__ = ("state",)

    def __init__(self, seed, shot):
        s = ((seed & _MASK) * 0xD1B54A32D192ED03) & _MASK
        s = (s + ((shot & _MASK) + 1) * _GOLDEN) & _MASK
        self.state = _mix(s)

    def next(self):
        self.state = (self.state + _GOLDEN) & _MASK
        return (_mix(self.state) >> 11) * (1.0 / 9007199254740992.0)


def _pairs(st, axis):
    return st.reshape(-1, 2, 1 << axis)


def apply_1q(st, axis, m00, m01, m10, m11):
    v = _pairs(st, axis)
    a = v[:, 0, :].copy()
    b = v[:, 1, :]
    v[:, 0, :] = m00 * a + m01 * b
    v[:, 1, :] = m10 * a + m11 * b


def apply_x(st, axis):
    v = _pairs(st, axis)
    v[:, [0, 1], :] = v[:, [1, 0], :]


def apply_diag(st, axis, p0, p1):
    v = _pairs(st, axis)
    v[:, 0, :] *= p0
    v[:, 1, :] *= p1


def _bit(i, axis):
    return (i >> axis) & 1


def apply_cx(st, axis_c, axis_t):
    n = st.shape[0].bit_length() - 1
    v = st.reshape((2,) * n)
    ac, at = n - 1 - axis_c, n - 1 - axis_t
    idx1 = [slice(None)] * n
    idx1[ac], idx1[at] = 1, 0
    idx2 = [slice(None)] * n
    idx2[ac], idx2[at] = 1, 1
    tmp = v[tuple(idx1)].copy()
    v[tuple(idx1)] = v[tuple(idx2)]
    v[tuple(idx2)] = tmp


def apply_cz(st, axis_c, axis_t):
    n = st.shape[0].bit_length() - 1
    v = st.reshape((2,) * n)
    idx = [slice(None)] * n
    idx[n - 1 - axis_c] = 1
    idx[n - 1 - axis_t] = 1
    v[tuple(idx)] *= -1


def apply_swap(st, axis_a, axis_b):
    n = st.shape[0].bit_length() - 1
    v = st.reshape((2,) * n)
    aa, ab = n - 1 - axis_a, n - 1 - axis_b
    idx1 = [slice(None)] * n
    idx1[aa], idx1[ab] = 1, 0
    idx2 = [slice(None)] * n
    idx2[aa], idx2[ab] = 0, 1
    tmp = v[tuple(idx1)].copy()
    v[tuple(idx1)] = v[tuple(idx2)]
    v[tuple(idx2)] = tmp


def prob_one(st, axis):
    v = _pairs(st, axis)[:, 1, :]
    return float(np.sum(v.real * v.real + v.imag * v.imag))


def collapse_drop(st, axis, outcome, prob):
    v = _pairs(st, axis)[:, outcome, :]
    out = v.reshape(-1).copy()
    out *= 1.0 / sqrt(prob)
    return out


def damp_nojump(st, axis, gamma, p1):
    nrm = sqrt(1.0 - gamma * p1)
    v = _pairs(st, axis)
    v[:, 0, :] *= 1.0 / nrm
    v[:, 1, :] *= sqrt(1.0 - gamma) / nrm


def damp_jump(st, axis, p1):
    inv = 1.0 / sqrt(p1)
    v = _pairs(st, axis)
    v[:, 0, :] = v[:, 1, :] * inv
    v[:, 1, :] = 0.0


def norm2(st):
    return float(np.sum(st.real * st.real + st.imag * st.imag))
