# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled fixed-step RK4 for piecewise-constant linear systems."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, isfinite

cnp.import_array()


cdef inline void _matvec(const double[:, ::1] M, const double* x, double* out, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc = acc + M[i, j] * x[j]
        out[i] = acc


def rk4_switched(const double[:, :, ::1] mats, const long long[::1] seg_graph,
                 const long long[::1] seg_steps, const double[::1] x0,
                 double h, long long stride, double guard):
    """Integrate ``x' = M_k x`` over consecutive segments with classic RK4.

    Returns ``(states, rec_steps, fail_step)``; ``fail_step`` is -1 unless a
    component left ``[-guard, guard]`` or became non-finite.
    """
    cdef Py_ssize_t n = x0.shape[0]
    cdef Py_ssize_t nseg = seg_graph.shape[0]
    cdef long long total = 0
    cdef Py_ssize_t s
    for s in range(nseg):
        total += seg_steps[s]
    cdef long long n_rec = total // stride + 1 + (1 if total % stride else 0)

    states_arr = np.empty((n_rec, n), dtype=np.float64)
    steps_arr = np.empty(n_rec, dtype=np.int64)
    cdef double[:, ::1] states = states_arr
    cdef long long[::1] rec_steps = steps_arr

    work = np.zeros((6, n), dtype=np.float64)
    cdef double[:, ::1] w = work
    cdef double* x = &w[0, 0]
    cdef double* k1 = &w[1, 0]
    cdef double* k2 = &w[2, 0]
    cdef double* k3 = &w[3, 0]
    cdef double* k4 = &w[4, 0]
    cdef double* tmp = &w[5, 0]

    cdef Py_ssize_t i, r = 0
    cdef long long step = 0, j, kidx
    cdef long long fail = -1
    cdef double hh = 0.5 * h, h6 = h / 6.0, v

    for i in range(n):
        x[i] = x0[i]
        states[0, i] = x0[i]
    rec_steps[0] = 0
    r = 1

    with nogil:
        for s in range(nseg):
            kidx = seg_graph[s]
            for j in range(seg_steps[s]):
                _matvec(mats[kidx], x, k1, n)
                for i in range(n):
                    tmp[i] = x[i] + hh * k1[i]
                _matvec(mats[kidx], tmp, k2, n)
                for i in range(n):
                    tmp[i] = x[i] + hh * k2[i]
                _matvec(mats[kidx], tmp, k3, n)
                for i in range(n):
                    tmp[i] = x[i] + h * k3[i]
                _matvec(mats[kidx], tmp, k4, n)
                for i in range(n):
                    v = x[i] + h6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                    x[i] = v
                    if not isfinite(v) or fabs(v) > guard:
                        fail = step + 1
                step += 1
                if fail >= 0:
                    break
                if step % stride == 0 or step == total:
                    for i in range(n):
                        states[r, i] = x[i]
                    rec_steps[r] = step
                    r += 1
            if fail >= 0:
                break

    return states_arr[:r], steps_arr[:r], fail
