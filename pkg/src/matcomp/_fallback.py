"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np

MAX_BACKTRACK = 60


def _loss_grad(rows, cols, y, A, B, scale, balance):
    res = np.einsum("ij,ij->i", A[rows], B[cols]) - y
    w = 2.0 * scale * res
    r = A.shape[1]
    gA = np.empty_like(A)
    gB = np.empty_like(B)
    for k in range(r):
        gA[:, k] = np.bincount(rows, weights=w * B[cols, k], minlength=A.shape[0])
        gB[:, k] = np.bincount(cols, weights=w * A[rows, k], minlength=B.shape[0])
    D = A.T @ A - B.T @ B
    if balance != 0.0:
        gA += 4.0 * balance * (A @ D)
        gB -= 4.0 * balance * (B @ D)
    return scale * float(res @ res) + balance * float(np.sum(D * D)), gA, gB


def factor_gd(rows, cols, y, A_init, B_init, scale, step, balance, max_iters, rel_tol):
    """Backtracking gradient descent on the balanced factorized squared loss.

    Minimizes ``scale * sum_i (<A[a_i], B[b_i]> - y_i)^2 + balance * ||A^T A - B^T B||_F^2``.
    A step is accepted only if it does not increase the loss; otherwise the
    step size is halved (at most ``MAX_BACKTRACK`` times per iteration).

    Returns
    -------
    A, B : ndarray
        Final factors.
    losses : ndarray
        Loss at the start and after every accepted step (non-increasing).
    status : int
        0 relative decrease fell below ``rel_tol``; 1 hit ``max_iters``;
        2 no descent step found; -1 non-finite initial loss.
    """
    A = np.array(A_init, dtype=float)
    B = np.array(B_init, dtype=float)
    loss, gA, gB = _loss_grad(rows, cols, y, A, B, scale, balance)
    losses = [loss]
    if not np.isfinite(loss):
        return A, B, np.array(losses), -1

    status = 1
    for _ in range(max_iters):
        for bt in range(MAX_BACKTRACK + 1):
            cA = A - step * gA
            cB = B - step * gB
            cand, cgA, cgB = _loss_grad(rows, cols, y, cA, cB, scale, balance)
            if cand <= loss:
                break
            step *= 0.5
        else:
            bt = MAX_BACKTRACK + 1
        if bt > MAX_BACKTRACK:
            status = 2
            break
        A, B, gA, gB = cA, cB, cgA, cgB
        rel = (loss - cand) / loss if loss > 0.0 else 0.0
        loss = cand
        losses.append(loss)
        if rel < rel_tol:
            status = 0
            break
    return A, B, np.array(losses), status


def scatter_add(out, rows, cols, vals):
    """out[rows[i], cols[i]] += vals[i], duplicates accumulated in input order."""
    p, q = out.shape
    out += np.bincount(rows * q + cols, weights=vals, minlength=p * q).reshape(p, q)
