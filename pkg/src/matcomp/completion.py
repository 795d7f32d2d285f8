"""Observation model, crude low-rank completion, and J-fold debiasing.

Observations are entries ``y_i = Theta[a_i, b_i] + noise`` sampled uniformly
with replacement.  The crude solver is a balanced factorized gradient
descent started from a spectral initializer; its output is then debiased
by cross-fitting so that the averaged estimate is entrywise unbiased.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import InvalidInputError, NumericFailureError
from .linalg import thin_svd


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Sampled entries of a ``p x q`` matrix, stored column-wise.

    ``rows`` and ``cols`` are 0-based indices; duplicated cells are kept as
    distinct samples.
    """

    p: int
    q: int
    rows: np.ndarray
    cols: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if int(self.p) < 1 or int(self.q) < 1:
            raise InvalidInputError(f"dimensions must be positive, got ({self.p}, {self.q})")
        rows = np.ascontiguousarray(self.rows, dtype=np.int64).reshape(-1)
        cols = np.ascontiguousarray(self.cols, dtype=np.int64).reshape(-1)
        y = np.ascontiguousarray(self.y, dtype=float).reshape(-1)
        if not (len(rows) == len(cols) == len(y)):
            raise InvalidInputError("rows, cols and y must have equal length")
        if len(rows):
            if rows.min() < 0 or rows.max() >= self.p:
                bad = int(np.flatnonzero((rows < 0) | (rows >= self.p))[0])
                raise InvalidInputError(f"sample {bad}: row index {rows[bad]} outside [0, {self.p})")
            if cols.min() < 0 or cols.max() >= self.q:
                bad = int(np.flatnonzero((cols < 0) | (cols >= self.q))[0])
                raise InvalidInputError(f"sample {bad}: column index {cols[bad]} outside [0, {self.q})")
            if not np.all(np.isfinite(y)):
                bad = int(np.flatnonzero(~np.isfinite(y))[0])
                raise InvalidInputError(f"sample {bad}: non-finite response")
        for arr in (rows, cols, y):
            arr.setflags(write=False)
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "q", int(self.q))
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_samples(cls, p: int, q: int, samples: Iterable[tuple[int, int, float]]):
        samples = list(samples)
        if not samples:
            return cls(p, q, np.zeros(0), np.zeros(0), np.zeros(0))
        a, b, y = zip(*samples)
        return cls(p, q, np.array(a), np.array(b), np.array(y, dtype=float))

    @classmethod
    def concat(cls, sets: Sequence["ObservationSet"]):
        if not sets:
            raise InvalidInputError("cannot concatenate an empty list of observation sets")
        p, q = sets[0].p, sets[0].q
        for s in sets:
            if (s.p, s.q) != (p, q):
                raise InvalidInputError(f"dimension mismatch: ({s.p}, {s.q}) vs ({p}, {q})")
        return cls(
            p,
            q,
            np.concatenate([s.rows for s in sets]),
            np.concatenate([s.cols for s in sets]),
            np.concatenate([s.y for s in sets]),
        )

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def shape(self) -> tuple[int, int]:
        return self.p, self.q

    def subset(self, idx) -> "ObservationSet":
        idx = np.asarray(idx, dtype=np.int64)
        return ObservationSet(self.p, self.q, self.rows[idx], self.cols[idx], self.y[idx])

    def with_responses(self, y) -> "ObservationSet":
        return ObservationSet(self.p, self.q, self.rows, self.cols, y)

    def fitted(self, theta: np.ndarray) -> np.ndarray:
        """``<theta, X_i>`` for every sample."""
        return np.asarray(theta)[self.rows, self.cols]

    def residuals(self, theta: np.ndarray) -> np.ndarray:
        return self.y - self.fitted(theta)

    def samples(self):
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.y.tolist()))


@dataclass(frozen=True)
class CrudeSolverConfig:
    rank: int
    max_iters: int = 500
    step_size: float | str = "auto"
    rel_tol: float = 1e-6
    balance_weight: float = 0.125
    warm_start_extra_rank: int = 4

    def __post_init__(self):
        if int(self.rank) < 1:
            raise InvalidInputError(f"rank must be >= 1, got {self.rank}")
        if not self.rel_tol > 0:
            raise InvalidInputError(f"rel_tol must be positive, got {self.rel_tol}")
        if int(self.max_iters) < 0:
            raise InvalidInputError(f"max_iters must be >= 0, got {self.max_iters}")
        if self.step_size != "auto" and not float(self.step_size) > 0:
            raise InvalidInputError(f"step_size must be 'auto' or positive, got {self.step_size!r}")
        if self.balance_weight < 0:
            raise InvalidInputError("balance_weight must be non-negative")
        if self.warm_start_extra_rank < 0:
            raise InvalidInputError("warm_start_extra_rank must be non-negative")


@dataclass(frozen=True, eq=False)
class DebiasedMatrix:
    """An entrywise-unbiased estimate of one source matrix."""

    estimate: np.ndarray
    n: int
    rank: int
    source_id: str = ""

    def __post_init__(self):
        est = np.array(self.estimate, dtype=float)
        if est.ndim != 2 or not np.all(np.isfinite(est)):
            raise InvalidInputError("estimate must be a finite 2-d array")
        if int(self.n) < 1:
            raise InvalidInputError(f"n must be >= 1, got {self.n}")
        if not 1 <= int(self.rank) <= min(est.shape):
            raise InvalidInputError(f"rank {self.rank} outside [1, {min(est.shape)}]")
        est.setflags(write=False)
        object.__setattr__(self, "estimate", est)

    @property
    def shape(self):
        return self.estimate.shape


@dataclass(frozen=True, eq=False)
class CrudeFit:
    theta: np.ndarray
    left: np.ndarray
    right: np.ndarray
    losses: np.ndarray = field(repr=False)
    status: int = 0

    @property
    def iterations(self) -> int:
        return len(self.losses) - 1


def ipw_fill(obs: ObservationSet) -> np.ndarray:
    """Inverse-propensity fill-in ``(pq/n) * sum_i y_i e_{a_i} e_{b_i}^T``."""
    if obs.n < 1:
        raise InvalidInputError("need at least one observation")
    m = np.zeros((obs.p, obs.q))
    kernels.scatter_add(m, obs.rows, obs.cols, obs.y)
    m *= obs.p * obs.q / obs.n
    return m


def _spectral_factors(obs: ObservationSet, rank: int):
    if not 1 <= rank <= min(obs.p, obs.q):
        raise InvalidInputError(f"rank {rank} outside [1, {min(obs.p, obs.q)}]")
    svd = thin_svd(ipw_fill(obs), rank)
    root = np.sqrt(svd.singular_values)
    return svd.u * root, svd.v * root, float(svd.singular_values[0])


def spectral_init(obs: ObservationSet, rank: int) -> np.ndarray:
    """Best rank-``rank`` approximation of the inverse-propensity fill-in."""
    a, b, _ = _spectral_factors(obs, rank)
    return a @ b.T


def _loss(obs, a, b, scale, balance):
    res = np.einsum("ij,ij->i", a[obs.rows], b[obs.cols]) - obs.y
    d = a.T @ a - b.T @ b
    return scale * float(res @ res) + balance * float(np.sum(d * d))


def _balanced_truncation(a, b, rank):
    svd = thin_svd(a @ b.T, rank)
    root = np.sqrt(svd.singular_values)
    return svd.u * root, svd.v * root


def crude_fit(obs: ObservationSet, cfg: CrudeSolverConfig) -> CrudeFit:
    """Factorized gradient descent for :func:`crude_complete`, with diagnostics."""
    rank = int(cfg.rank)
    if obs.n < 1:
        raise InvalidInputError("need at least one observation")
    if obs.n < rank * (obs.p + obs.q):
        warnings.warn(
            f"n={obs.n} is below rank*(p+q)={rank * (obs.p + obs.q)}; "
            "the completion problem is under-determined",
            stacklevel=3,
        )
    scale = obs.p * obs.q / obs.n
    balance = float(cfg.balance_weight)
    a0, b0, lam1 = _spectral_factors(obs, rank)
    if cfg.step_size == "auto":
        step = 0.25 / lam1 if lam1 > 0 else 1.0
    else:
        step = float(cfg.step_size)

    def descend(a, b):
        a, b, losses, status = kernels.factor_gd(
            obs.rows, obs.cols, obs.y,
            np.ascontiguousarray(a), np.ascontiguousarray(b),
            scale, step, balance, int(cfg.max_iters), float(cfg.rel_tol),
        )
        if status == -1 or not np.all(np.isfinite(a)) or not np.all(np.isfinite(b)):
            raise NumericFailureError(
                f"crude solver loss became non-finite at iteration {len(losses) - 1}",
                iteration=len(losses) - 1,
            )
        return a, b, losses, int(status)

    wide = min(rank + int(cfg.warm_start_extra_rank), obs.p, obs.q)
    if wide > rank and lam1 > 0:
        # fit a wider factorization first, then descend from its rank-r truncation;
        # this avoids the spiky local minima that plain spectral starts fall into
        aw, bw, _ = _spectral_factors(obs, wide)
        aw, bw, _, _ = descend(aw, bw)
        a, b, losses, status = descend(*_balanced_truncation(aw, bw, rank))
        if losses[-1] > _loss(obs, a0, b0, scale, balance):
            a, b, losses, status = descend(a0, b0)
    else:
        a, b, losses, status = descend(a0, b0)
    return CrudeFit(a @ b.T, a, b, losses, status)


def crude_complete(obs: ObservationSet, cfg: CrudeSolverConfig) -> np.ndarray:
    """Low-rank completion ``A @ B.T`` of the observed entries.

    Minimizes ``(pq/n) * sum_i (<A B^T, X_i> - y_i)^2 + w * ||A^T A - B^T B||_F^2``
    by backtracking gradient descent.  The descent starts from the rank-``rank``
    truncation of a wider fit (``rank + cfg.warm_start_extra_rank``, itself
    started from :func:`spectral_init`); if that ends above the loss of the
    plain spectral start, descent is rerun from the spectral start.  Warns
    when ``n < rank * (p + q)``.
    """
    return crude_fit(obs, cfg).theta


def kfold_split(obs: ObservationSet, J: int, seed) -> list[tuple[ObservationSet, ObservationSet]]:
    """Random partition of the samples into ``J`` holdout folds.

    Fold sizes differ by at most one; the first ``n % J`` folds get the extra
    sample.  Returns ``(train, holdout)`` pairs.
    """
    if J < 2:
        raise InvalidInputError(f"J must be >= 2, got {J}")
    if J > obs.n:
        raise InvalidInputError(f"J={J} exceeds the number of samples n={obs.n}")
    perm = np.random.default_rng(seed).permutation(obs.n)
    base, extra = divmod(obs.n, J)
    sizes = [base + (1 if j < extra else 0) for j in range(J)]
    bounds = np.cumsum([0] + sizes)
    folds = []
    for j in range(J):
        hold = np.sort(perm[bounds[j]:bounds[j + 1]])
        train = np.sort(np.concatenate([perm[: bounds[j]], perm[bounds[j + 1]:]]))
        folds.append((obs.subset(train), obs.subset(hold)))
    return folds


def debias_fold(crude: np.ndarray, holdout: ObservationSet, J: int, n_total: int) -> np.ndarray:
    """One-step correction of ``crude`` with held-out residuals.

    Returns ``crude + (J p q / n_total) * sum_{i in holdout} (y_i - crude[a_i, b_i]) X_i``.
    """
    crude = np.asarray(crude, dtype=float)
    if crude.shape != holdout.shape:
        raise InvalidInputError(f"crude shape {crude.shape} does not match holdout {holdout.shape}")
    if n_total <= 0:
        raise InvalidInputError("n_total must be positive")
    out = crude.copy()
    weight = J * holdout.p * holdout.q / n_total
    kernels.scatter_add(out, holdout.rows, holdout.cols, weight * holdout.residuals(crude))
    return out


def debiased_estimate(
    obs: ObservationSet,
    cfg: CrudeSolverConfig,
    J: int = 5,
    seed=0,
    source_id: str = "",
) -> DebiasedMatrix:
    """Cross-fitted debiased estimate: the average over folds of the debiased crude fits."""
    folds = kfold_split(obs, J, seed)
    total = np.zeros((obs.p, obs.q))
    for train, hold in folds:
        total += debias_fold(crude_complete(train, cfg), hold, J, obs.n)
    return DebiasedMatrix(total / J, obs.n, cfg.rank, source_id)


def debiased_from_full(matrix, rank: int, source_id: str = "", n: int = 1) -> DebiasedMatrix:
    """Wrap a fully observed (noisy) source matrix as a debiased dataset entry."""
    return DebiasedMatrix(np.asarray(matrix, dtype=float), n, rank, source_id)
