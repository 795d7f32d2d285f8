"""Per-source singular subspaces and their integration on the Grassmannian.

Each debiased source contributes the projectors onto its leading left and
right singular subspaces.  :func:`barycenter` averages the projectors with
sample-size weights and keeps the top eigenvectors; :func:`rectified_kmeans`
alternates between selecting the sources that align with the current
estimate and re-averaging over the selection.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .completion import DebiasedMatrix
from .errors import DegenerateInputError, InvalidInputError
from .linalg import Subspace, alignment, sym_eigvals_desc, thin_svd, top_eigvecs_sym

SIDES = ("left", "right")


@dataclass(frozen=True, eq=False)
class SourceSubspaces:
    source_id: str
    n: int
    r: int
    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        for name in SIDES:
            proj = getattr(self, name)
            if abs(np.trace(proj) - self.r) > 1e-6:
                raise InvalidInputError(
                    f"{name} projector of source {self.source_id!r} has trace "
                    f"{np.trace(proj):.6g}, expected rank {self.r}"
                )

    def projector(self, side: str) -> np.ndarray:
        if side not in SIDES:
            raise InvalidInputError(f"side must be 'left' or 'right', got {side!r}")
        return getattr(self, side)

    @classmethod
    def from_bases(cls, left: Subspace, right: Subspace, n: int = 1, source_id: str = ""):
        if left.dim != right.dim:
            raise InvalidInputError("left and right subspaces must have equal dimension")
        return cls(source_id, n, left.dim, left.projector, right.projector)


@dataclass(frozen=True)
class SelectionConfig:
    """Tuning for :func:`rectified_kmeans`.

    ``init`` is ``"all-sources"`` (start from the barycenter of every source)
    or an explicit :class:`Subspace`.
    """

    tau: float = 0.5
    max_iters: int = 100
    init: object = "all-sources"

    def __post_init__(self):
        if self.tau < 0:
            raise InvalidInputError(f"tau must be non-negative, got {self.tau}")
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be >= 1")
        if not (self.init == "all-sources" or isinstance(self.init, Subspace)):
            raise InvalidInputError("init must be 'all-sources' or a Subspace")


@dataclass(frozen=True, eq=False)
class IntegrationResult:
    subspace: Subspace | None
    selected: tuple[str, ...]
    iterations: int
    objective: float
    history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def empty(self) -> bool:
        return self.subspace is None


def extract_subspaces(theta: DebiasedMatrix) -> SourceSubspaces:
    """Projectors onto the leading ``theta.rank`` left and right singular vectors."""
    svd = thin_svd(theta.estimate, theta.rank)
    return SourceSubspaces(
        theta.source_id, theta.n, theta.rank, svd.u @ svd.u.T, svd.v @ svd.v.T
    )


def _check_sources(sources, side):
    if not sources:
        raise InvalidInputError("need at least one source")
    if side not in SIDES:
        raise InvalidInputError(f"side must be 'left' or 'right', got {side!r}")
    dim = sources[0].projector(side).shape[0]
    for s in sources:
        if s.projector(side).shape[0] != dim:
            raise InvalidInputError("sources disagree on the ambient dimension")
    return dim


def weighted_projector_mean(sources: Sequence[SourceSubspaces], side: str) -> np.ndarray:
    """``sum_k n_k P_k / sum_k n_k`` over the chosen side."""
    _check_sources(sources, side)
    total = float(sum(s.n for s in sources))
    acc = np.zeros_like(sources[0].projector(side))
    for s in sources:
        acc += (s.n / total) * s.projector(side)
    return acc


def barycenter_objective(sources, side, proj) -> float:
    total = float(sum(s.n for s in sources))
    return float(sum(s.n * alignment(s.projector(side), proj) for s in sources) / total)


def barycenter(sources: Sequence[SourceSubspaces], side: str, cut_dim: int) -> IntegrationResult:
    """Top ``cut_dim`` eigenvectors of the sample-size weighted mean projector."""
    dim = _check_sources(sources, side)
    if not 1 <= cut_dim <= dim:
        raise InvalidInputError(f"cut_dim={cut_dim} outside [1, {dim}]")
    if cut_dim < max(s.r for s in sources):
        warnings.warn(
            f"cut_dim={cut_dim} is smaller than the largest source rank {max(s.r for s in sources)}",
            stacklevel=2,
        )
    sub = top_eigvecs_sym(weighted_projector_mean(sources, side), cut_dim)
    obj = barycenter_objective(sources, side, sub.projector)
    return IntegrationResult(sub, tuple(s.source_id for s in sources), 1, obj, (obj,))


def rectified_objective(sources, side, tau, proj) -> float:
    """``(1/N) sum_k n_k max(trace(P_k proj), r_k - tau)``."""
    total = float(sum(s.n for s in sources))
    return float(
        sum(s.n * max(alignment(s.projector(side), proj), s.r - tau) for s in sources) / total
    )


def _select(sources, side, tau, proj):
    # the selection rule is closed at the boundary; tau = 0 selects nothing by convention
    if tau <= 0:
        return []
    return [k for k, s in enumerate(sources) if alignment(s.projector(side), proj) >= s.r - tau]


def rectified_kmeans(
    sources: Sequence[SourceSubspaces],
    side: str,
    cut_dim: int,
    cfg: SelectionConfig = SelectionConfig(),
) -> IntegrationResult:
    """Jointly select informative sources and estimate their shared subspace.

    Starting from ``cfg.init``, alternate: keep the sources whose alignment
    with the current estimate is at least ``r_k - tau``; replace the estimate
    by the barycenter of the kept sources.  Stops when the selection repeats
    or after ``cfg.max_iters`` rounds.  An empty selection returns a result
    with ``subspace=None``.
    """
    dim = _check_sources(sources, side)
    if not 1 <= cut_dim <= dim:
        raise InvalidInputError(f"cut_dim={cut_dim} outside [1, {dim}]")
    if cfg.tau > cut_dim:
        raise InvalidInputError(f"tau={cfg.tau} exceeds cut_dim={cut_dim}")
    tau = float(cfg.tau)
    ids = [s.source_id for s in sources]

    if isinstance(cfg.init, Subspace):
        if cfg.init.ambient_dim != dim:
            raise InvalidInputError("init subspace has the wrong ambient dimension")
        current = cfg.init
        previous = None
    else:
        current = top_eigvecs_sym(weighted_projector_mean(sources, side), cut_dim)
        # the all-sources start is the barycenter of the full selection
        previous = list(range(len(sources)))

    history = [rectified_objective(sources, side, tau, current.projector)]
    iterations = 0
    for iterations in range(1, cfg.max_iters + 1):
        chosen = _select(sources, side, tau, current.projector)
        if not chosen:
            obj = rectified_objective(sources, side, tau, current.projector)
            return IntegrationResult(None, (), iterations, obj, tuple(history))
        if chosen == previous:
            break
        current = top_eigvecs_sym(
            weighted_projector_mean([sources[k] for k in chosen], side), cut_dim
        )
        history.append(rectified_objective(sources, side, tau, current.projector))
        previous = chosen
    return IntegrationResult(
        current, tuple(ids[k] for k in previous), iterations, history[-1], tuple(history)
    )


def select_cut_dim(sources: Sequence[SourceSubspaces], side: str, max_dim: int) -> int:
    """Eigenvalue-ratio heuristic for the integration dimension.

    Returns the ``j <= max_dim`` maximizing ``lambda_j / lambda_{j+1}`` of the
    weighted mean projector (smallest ``j`` on ties).  This is a stand-in; no
    optimality is claimed.
    """
    dim = _check_sources(sources, side)
    if not 1 <= max_dim < dim:
        raise InvalidInputError(f"max_dim={max_dim} must lie in [1, {dim - 1}]")
    lam = sym_eigvals_desc(weighted_projector_mean(sources, side))
    if lam[0] < 1e-12:
        raise DegenerateInputError("all eigenvalues of the mean projector vanish")
    eps = 1e-12 * lam[0]
    head = lam[:max_dim]
    tail = lam[1 : max_dim + 1]
    ratios = np.zeros(max_dim)
    live = tail > eps
    ratios[live] = head[live] / tail[live]
    # a gap down to numerical zero beats any finite ratio
    ratios[~live & (head > eps)] = np.inf
    return int(np.argmax(ratios)) + 1
