"""Independent reference implementations used only by the tests.

Plain-Python/numpy-elementwise algorithms that share no code with LAPACK:
cyclic Jacobi for symmetric eigenproblems, one-sided Jacobi (Hestenes) for
the SVD, and normal equations solved by Gauss-Jordan elimination.
"""
import math

import numpy as np


def jacobi_eigh(a, tol=1e-14, max_sweeps=100):
    """Eigenpairs of a symmetric matrix by cyclic Jacobi rotations, descending order."""
    a = np.array(a, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = math.sqrt(sum(a[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off < tol * max(1.0, np.abs(a).max()):
            break
        for i in range(n - 1):
            for j in range(i + 1, n):
                if abs(a[i, j]) < 1e-300:
                    continue
                theta = (a[j, j] - a[i, i]) / (2.0 * a[i, j])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    aki, akj = a[k, i], a[k, j]
                    a[k, i] = c * aki - s * akj
                    a[k, j] = s * aki + c * akj
                for k in range(n):
                    aik, ajk = a[i, k], a[j, k]
                    a[i, k] = c * aik - s * ajk
                    a[j, k] = s * aik + c * ajk
                for k in range(n):
                    vki, vkj = v[k, i], v[k, j]
                    v[k, i] = c * vki - s * vkj
                    v[k, j] = s * vki + c * vkj
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def jacobi_svd(m, tol=1e-15, max_sweeps=100):
    """Thin SVD by one-sided Jacobi on the columns; singular values descending."""
    m = np.array(m, dtype=float)
    transpose = m.shape[0] < m.shape[1]
    if transpose:
        m = m.T
    rows, n = m.shape
    u = m.copy()
    v = np.eye(n)
    for _ in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                alpha = float(np.dot(u[:, i], u[:, i]))
                beta = float(np.dot(u[:, j], u[:, j]))
                gamma = float(np.dot(u[:, i], u[:, j]))
                if abs(gamma) <= tol * math.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                ui, uj = u[:, i].copy(), u[:, j].copy()
                u[:, i], u[:, j] = c * ui - s * uj, s * ui + c * uj
                vi, vj = v[:, i].copy(), v[:, j].copy()
                v[:, i], v[:, j] = c * vi - s * vj, s * vi + c * vj
        if not rotated:
            break
    sv = np.sqrt((u * u).sum(axis=0))
    order = np.argsort(-sv, kind="stable")
    sv, u, v = sv[order], u[:, order], v[:, order]
    nz = sv > 0
    u[:, nz] = u[:, nz] / sv[nz]
    if transpose:
        return v, sv, u
    return u, sv, v


def solve_normal_equations(x, y):
    """Least squares ``argmin ||x b - y||`` via ``x^T x b = x^T y`` and Gauss-Jordan elimination."""
    x = np.asarray(x, dtype=float)
    g = x.T @ x
    rhs = x.T @ np.asarray(y, dtype=float)
    n = g.shape[0]
    aug = np.hstack([g, rhs.reshape(n, 1)])
    for col in range(n):
        piv = col + int(np.argmax(np.abs(aug[col:, col])))
        if abs(aug[piv, col]) < 1e-300:
            raise ZeroDivisionError("singular normal equations")
        aug[[col, piv]] = aug[[piv, col]]
        aug[col] /= aug[col, col]
        for r in range(n):
            if r != col:
                aug[r] -= aug[r, col] * aug[col]
    return aug[:, n]


def gram_schmidt(m):
    """Modified Gram-Schmidt orthonormal basis of the columns (full column rank assumed)."""
    m = np.array(m, dtype=float)
    q = np.zeros_like(m)
    for j in range(m.shape[1]):
        w = m[:, j].copy()
        for _ in range(2):
            for i in range(j):
                w -= np.dot(q[:, i], w) * q[:, i]
        q[:, j] = w / np.linalg.norm(w)
    return q


def projector(basis):
    b = np.asarray(basis, dtype=float)
    return b @ b.T
