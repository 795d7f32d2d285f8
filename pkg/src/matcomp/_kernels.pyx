# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for the factorized completion solver.

Mirrors ``matcomp._fallback`` operation for operation; the two are checked
against each other in the test suite.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport isfinite

cnp.import_array()

DEF MAX_BACKTRACK = 60


cdef double _loss_grad(
    const long[::1] rows, const long[::1] cols, const double[::1] y,
    const double[:, ::1] A, const double[:, ::1] B,
    double scale, double balance,
    double[:, ::1] gA, double[:, ::1] gB, double[:, ::1] D,
) noexcept nogil:
    cdef Py_ssize_t n = rows.shape[0]
    cdef Py_ssize_t p = A.shape[0]
    cdef Py_ssize_t q = B.shape[0]
    cdef Py_ssize_t r = A.shape[1]
    cdef Py_ssize_t i, j, k, l
    cdef long a, b
    cdef double s, res, w, fit = 0.0, bal = 0.0

    for j in range(p):
        for k in range(r):
            gA[j, k] = 0.0
    for j in range(q):
        for k in range(r):
            gB[j, k] = 0.0

    for i in range(n):
        a = rows[i]
        b = cols[i]
        s = 0.0
        for k in range(r):
            s += A[a, k] * B[b, k]
        res = s - y[i]
        fit += res * res
        w = 2.0 * scale * res
        for k in range(r):
            gA[a, k] += w * B[b, k]
            gB[b, k] += w * A[a, k]

    # D = A^T A - B^T B
    for k in range(r):
        for l in range(r):
            s = 0.0
            for j in range(p):
                s += A[j, k] * A[j, l]
            for j in range(q):
                s -= B[j, k] * B[j, l]
            D[k, l] = s
            bal += s * s

    if balance != 0.0:
        for j in range(p):
            for k in range(r):
                s = 0.0
                for l in range(r):
                    s += A[j, l] * D[l, k]
                gA[j, k] += 4.0 * balance * s
        for j in range(q):
            for k in range(r):
                s = 0.0
                for l in range(r):
                    s += B[j, l] * D[l, k]
                gB[j, k] -= 4.0 * balance * s

    return scale * fit + balance * bal


def factor_gd(
    const long[::1] rows, const long[::1] cols, const double[::1] y,
    A_init, B_init,
    double scale, double step, double balance, int max_iters, double rel_tol,
):
    """See ``matcomp._fallback.factor_gd``."""
    cdef double[:, ::1] A = np.array(A_init, dtype=np.float64, order="C")
    cdef double[:, ::1] B = np.array(B_init, dtype=np.float64, order="C")
    cdef Py_ssize_t p = A.shape[0], q = B.shape[0], r = A.shape[1]
    cdef double[:, ::1] gA = np.empty((p, r))
    cdef double[:, ::1] gB = np.empty((q, r))
    cdef double[:, ::1] cgA = np.empty((p, r))
    cdef double[:, ::1] cgB = np.empty((q, r))
    cdef double[:, ::1] cA = np.empty((p, r))
    cdef double[:, ::1] cB = np.empty((q, r))
    cdef double[:, ::1] D = np.empty((r, r))
    cdef double[:, ::1] tmp
    cdef double loss, cand, rel
    cdef int it, bt, status
    cdef Py_ssize_t j, k
    losses = []

    loss = _loss_grad(rows, cols, y, A, B, scale, balance, gA, gB, D)
    losses.append(loss)
    if not isfinite(loss):
        return np.asarray(A), np.asarray(B), np.array(losses), -1

    status = 1
    for it in range(max_iters):
        bt = 0
        while True:
            for j in range(p):
                for k in range(r):
                    cA[j, k] = A[j, k] - step * gA[j, k]
            for j in range(q):
                for k in range(r):
                    cB[j, k] = B[j, k] - step * gB[j, k]
            cand = _loss_grad(rows, cols, y, cA, cB, scale, balance, cgA, cgB, D)
            if cand <= loss:
                break
            step *= 0.5
            bt += 1
            if bt > MAX_BACKTRACK:
                break
        if bt > MAX_BACKTRACK:
            status = 2
            break
        tmp = A; A = cA; cA = tmp
        tmp = B; B = cB; cB = tmp
        tmp = gA; gA = cgA; cgA = tmp
        tmp = gB; gB = cgB; cgB = tmp
        rel = (loss - cand) / loss if loss > 0.0 else 0.0
        loss = cand
        losses.append(loss)
        if rel < rel_tol:
            status = 0
            break

    return np.asarray(A), np.asarray(B), np.array(losses), status


def scatter_add(double[:, ::1] out, const long[::1] rows, const long[::1] cols,
                const double[::1] vals):
    """out[rows[i], cols[i]] += vals[i], duplicates accumulated in input order."""
    cdef Py_ssize_t i
    with nogil:
        for i in range(rows.shape[0]):
            out[rows[i], cols[i]] += vals[i]
