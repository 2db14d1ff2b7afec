# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled Dormand-Prince 5(4) stepping kernel (twin of rk45_py)."""

import numpy as np

from libc.math cimport sqrt, fabs, isfinite, isnan, fmin, fmax, pow

cdef double[7] C_NODES
C_NODES = [0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0]

cdef double[6][6] A_TAB
A_TAB = [
    [0, 0, 0, 0, 0, 0],
    [1.0 / 5, 0, 0, 0, 0, 0],
    [3.0 / 40, 9.0 / 40, 0, 0, 0, 0],
    [44.0 / 45, -56.0 / 15, 32.0 / 9, 0, 0, 0],
    [19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729, 0, 0],
    [9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656, 0],
]

cdef double[7] B_TAB
B_TAB = [35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0]

cdef double[7] E_TAB
E_TAB = [71.0 / 57600, 0, -71.0 / 16695, 71.0 / 1920,
         -17253.0 / 339200, 22.0 / 525, -1.0 / 40]

cdef double SAFETY = 0.9
cdef double FAC_MIN = 0.2
cdef double FAC_MAX = 10.0
cdef double BETA = 0.04
cdef double EXPO = 0.2 - 0.04 * 0.75

OK = 0
UNDERFLOW = 1
NONFINITE = 2
BUDGET = 3

# dense-output polynomial, shared with the pure backend
from vwshoot._kernels.rk45_py import P, dense_eval  # noqa: E402


def run(f, double t0, x0, k1_in, double t_end, double rtol, double atol,
        double h_max, double h_min, double h_start, double facold, int max_steps):
    cdef Py_ssize_t n = len(x0)
    cdef Py_ssize_t i, j, m
    cdef double t = t0, h, err, fac, s, xi_j, errv, finish_slop
    cdef int status = BUDGET
    cdef bint rejected = False, bad, finishing, has_nan

    cdef double[::1] x = np.ascontiguousarray(x0, dtype=np.float64).copy()
    cdef double[::1] k1 = np.ascontiguousarray(k1_in, dtype=np.float64).copy()
    cdef double[::1] x_new = np.empty(n)
    cdef double[::1] xi = np.empty(n)
    cdef double[:, ::1] K = np.empty((7, n))
    cdef double[::1] stage

    ts, xs, ks, hs, Kss = [], [], [], [], []

    h = fmin(h_start, h_max)
    while len(ts) < max_steps:
        if t >= t_end:
            status = OK
            break
        h = fmin(fmin(h, h_max), t_end - t)
        finish_slop = 1e-15 * fmax(fabs(t), fabs(t_end))
        finishing = h >= t_end - t - finish_slop
        if h < h_min and not finishing:
            status = UNDERFLOW
            break

        for j in range(n):
            K[0, j] = k1[j]
        bad = False
        for i in range(1, 6):
            for j in range(n):
                s = 0.0
                for m in range(i):
                    s += A_TAB[i][m] * K[m, j]
                xi[j] = x[j] + h * s
            stage = np.ascontiguousarray(f(t + C_NODES[i] * h, np.asarray(xi).copy()),
                                         dtype=np.float64)
            for j in range(n):
                K[i, j] = stage[j]
                if not isfinite(stage[j]):
                    bad = True
            if bad:
                break
        if not bad:
            for j in range(n):
                s = 0.0
                for m in range(6):
                    s += B_TAB[m] * K[m, j]
                x_new[j] = x[j] + h * s
                if not isfinite(x_new[j]):
                    bad = True
            if not bad:
                stage = np.ascontiguousarray(f(t + h, np.asarray(x_new).copy()),
                                             dtype=np.float64)
                for j in range(n):
                    K[6, j] = stage[j]
                    if not isfinite(stage[j]):
                        bad = True
        if bad:
            has_nan = False
            for i in range(7):
                for j in range(n):
                    if isnan(K[i, j]):
                        has_nan = True
            if has_nan:
                status = NONFINITE
                break
            h *= FAC_MIN
            rejected = True
            continue

        err = 0.0
        for j in range(n):
            s = 0.0
            for m in range(7):
                s += E_TAB[m] * K[m, j]
            errv = h * s / (atol + rtol * fmax(fabs(x[j]), fabs(x_new[j])))
            err += errv * errv
        err = sqrt(err / n)

        if isnan(err):
            status = NONFINITE
            break
        if err <= 1.0:
            ts.append(t + h)
            xs.append(np.asarray(x_new).copy())
            ks.append(np.asarray(K[6]).copy())
            hs.append(h)
            Kss.append(np.asarray(K).copy())
            if err == 0.0:
                fac = FAC_MAX
            else:
                fac = fmin(FAC_MAX, fmax(FAC_MIN, SAFETY / (pow(err, EXPO) / pow(facold, BETA))))
            if rejected:
                fac = fmin(1.0, fac)
            facold = fmax(err, 1e-4)
            t += h
            for j in range(n):
                x[j] = x_new[j]
                k1[j] = K[6, j]
            h *= fac
            rejected = False
        else:
            h *= fmax(FAC_MIN, SAFETY / pow(err, EXPO))
            rejected = True
    if t >= t_end:
        status = OK
    cdef Py_ssize_t ns = len(ts)
    return (status, np.array(ts), np.array(xs).reshape(ns, n),
            np.array(ks).reshape(ns, n), np.array(hs),
            np.array(Kss).reshape(ns, 7, n), np.asarray(k1).copy(), h, facold)
