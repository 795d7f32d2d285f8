"""Target estimation in a transferred representation.

Given column and row representations ``u`` (p x p0) and ``v`` (q x q0), the
target matrix is modelled as ``u @ gamma @ v.T`` and ``gamma`` is fitted by
least squares on the projected features ``u^T X_i v``.  The oracle pipeline
learns ``u, v`` from all sources; the non-oracle pipeline selects sources per
side and only adopts a learned representation when it agrees with the
target's own crude estimate.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .completion import CrudeSolverConfig, DebiasedMatrix, ObservationSet, crude_complete, debiased_estimate
from .errors import DegenerateDesignError, InvalidInputError
from .linalg import Subspace, subspace_alignment, thin_svd
from .subspace import SelectionConfig, barycenter, extract_subspaces, rectified_kmeans

LSTSQ_RCOND = 1e-10


@dataclass(frozen=True)
class GateConfig:
    delta_u: float
    delta_v: float
    target_rank: int

    def __post_init__(self):
        if int(self.target_rank) < 1:
            raise InvalidInputError(f"target_rank must be >= 1, got {self.target_rank}")
        for name in ("delta_u", "delta_v"):
            val = getattr(self, name)
            if not 0 <= val <= self.target_rank:
                raise InvalidInputError(f"{name}={val} outside [0, {self.target_rank}]")

    @classmethod
    def default(cls, target_rank: int, fraction: float = 0.3):
        return cls(fraction * target_rank, fraction * target_rank, target_rank)


@dataclass(frozen=True, eq=False)
class TransferModel:
    """A fitted target estimate ``theta_hat = u_hat.basis @ gamma @ v_hat.basis.T``."""

    u_hat: Subspace
    v_hat: Subspace
    gamma: np.ndarray
    theta_hat: np.ndarray
    gate_u_used_transfer: bool
    gate_v_used_transfer: bool
    selected_u: tuple[str, ...]
    selected_v: tuple[str, ...]
    residual_ss: float
    n0: int = 0
    mode: str = "oracle"
    gate_u_alignment: float | None = None
    gate_v_alignment: float | None = None
    config: dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        return self.u_hat.ambient_dim

    @property
    def q(self) -> int:
        return self.v_hat.ambient_dim

    @property
    def p0(self) -> int:
        return self.u_hat.dim

    @property
    def q0(self) -> int:
        return self.v_hat.dim

    def relative_residual(self, obs: ObservationSet) -> float:
        denom = float(obs.y @ obs.y)
        return float(np.sqrt(self.residual_ss / denom)) if denom > 0 else 0.0


def projected_design(obs: ObservationSet, u: Subspace, v: Subspace) -> np.ndarray:
    """Rows ``vec(u^T e_a e_b^T v)`` (row-major) for every sample."""
    ur = u.basis[obs.rows]
    vr = v.basis[obs.cols]
    return (ur[:, :, None] * vr[:, None, :]).reshape(obs.n, -1)


def target_ols(obs: ObservationSet, u: Subspace, v: Subspace) -> np.ndarray:
    """Minimum-norm least-squares fit of ``gamma`` in ``y_i ~ <u gamma v^T, X_i>``.

    Singular values of the design below ``1e-10`` times the largest are
    treated as zero, so rank-deficient designs still return the min-norm fit.
    """
    if u.ambient_dim != obs.p or v.ambient_dim != obs.q:
        raise InvalidInputError(
            f"representation dims ({u.ambient_dim}, {v.ambient_dim}) do not match "
            f"observations ({obs.p}, {obs.q})"
        )
    if obs.n < 1:
        raise InvalidInputError("need at least one observation")
    w = projected_design(obs, u, v)
    uw, s, vwt = np.linalg.svd(w, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        raise DegenerateDesignError("projected design is identically zero")
    keep = s > LSTSQ_RCOND * s[0]
    coef = vwt[keep].T @ ((uw[:, keep].T @ obs.y) / s[keep])
    return coef.reshape(u.dim, v.dim)


def _fit_model(obs, u, v, **meta) -> TransferModel:
    gamma = target_ols(obs, u, v)
    theta = u.basis @ gamma @ v.basis.T
    res = obs.residuals(theta)
    return TransferModel(u, v, gamma, theta, residual_ss=float(res @ res), n0=obs.n, **meta)


def _check_dims(target, sources):
    for s in sources:
        if s.shape != target.shape:
            raise InvalidInputError(
                f"source {s.source_id!r} has shape {s.shape}, target is {target.shape}"
            )


def oracle_transfer(
    target: ObservationSet, sources: Sequence[DebiasedMatrix], p0: int, q0: int
) -> TransferModel:
    """Barycenter representations of every source, then projected least squares on the target."""
    if not sources:
        raise InvalidInputError("oracle transfer needs at least one source")
    _check_dims(target, sources)
    subs = [extract_subspaces(s) for s in sources]
    left = barycenter(subs, "left", p0)
    right = barycenter(subs, "right", q0)
    return _fit_model(
        target,
        left.subspace,
        right.subspace,
        gate_u_used_transfer=True,
        gate_v_used_transfer=True,
        selected_u=left.selected,
        selected_v=right.selected,
        mode="oracle",
        config={"p0": p0, "q0": q0},
    )


class GateDecision(NamedTuple):
    u: Subspace
    v: Subspace
    used_u: bool
    used_v: bool


def optional_gate(
    target_u: Subspace,
    target_v: Subspace,
    candidate_u: Subspace | None,
    candidate_v: Subspace | None,
    cfg: GateConfig,
) -> GateDecision:
    """Per side, adopt the candidate iff its alignment with the target subspace is >= r0 - delta."""

    def decide(target, cand, delta):
        if cand is None:
            return target, False
        if cand.ambient_dim != target.ambient_dim:
            raise InvalidInputError("candidate and target subspaces differ in ambient dimension")
        if subspace_alignment(target, cand) >= cfg.target_rank - delta:
            return cand, True
        return target, False

    u, used_u = decide(target_u, candidate_u, cfg.delta_u)
    v, used_v = decide(target_v, candidate_v, cfg.delta_v)
    return GateDecision(u, v, used_u, used_v)


def target_subspaces(
    target: ObservationSet,
    crude_cfg: CrudeSolverConfig,
    debias: bool = False,
    J: int = 5,
    seed=0,
) -> tuple[Subspace, Subspace]:
    """Leading singular subspaces of the target-only crude (optionally debiased) estimate."""
    if debias:
        est = debiased_estimate(target, crude_cfg, J, seed).estimate
    else:
        est = crude_complete(target, crude_cfg)
    svd = thin_svd(est, crude_cfg.rank)
    return Subspace(svd.u), Subspace(svd.v)


def nora_transfer(
    target: ObservationSet,
    sources: Sequence[DebiasedMatrix],
    p0: int,
    q0: int,
    sel_u: SelectionConfig = SelectionConfig(),
    sel_v: SelectionConfig = SelectionConfig(),
    gate: GateConfig | None = None,
    crude_cfg: CrudeSolverConfig | None = None,
    seed=0,
    debias_target: bool = False,
    J: int = 5,
) -> TransferModel:
    """Selective integration per side, optional-transfer gate, then projected least squares.

    A side whose selection comes back empty has no candidate and falls back
    to the target's own crude subspace.
    """
    _check_dims(target, sources)
    if gate is None:
        gate = GateConfig.default(crude_cfg.rank if crude_cfg else 3)
    if crude_cfg is None:
        crude_cfg = CrudeSolverConfig(rank=gate.target_rank)
    elif crude_cfg.rank != gate.target_rank:
        crude_cfg = replace(crude_cfg, rank=gate.target_rank)

    cand_u = cand_v = None
    sel_ids_u: tuple[str, ...] = ()
    sel_ids_v: tuple[str, ...] = ()
    if sources:
        subs = [extract_subspaces(s) for s in sources]
        left = rectified_kmeans(subs, "left", p0, sel_u)
        right = rectified_kmeans(subs, "right", q0, sel_v)
        cand_u, sel_ids_u = left.subspace, left.selected
        cand_v, sel_ids_v = right.subspace, right.selected

    own_u, own_v = target_subspaces(target, crude_cfg, debias_target, J, seed)
    decision = optional_gate(own_u, own_v, cand_u, cand_v, gate)
    return _fit_model(
        target,
        decision.u,
        decision.v,
        gate_u_used_transfer=decision.used_u,
        gate_v_used_transfer=decision.used_v,
        selected_u=sel_ids_u,
        selected_v=sel_ids_v,
        mode="nora",
        gate_u_alignment=None if cand_u is None else subspace_alignment(own_u, cand_u),
        gate_v_alignment=None if cand_v is None else subspace_alignment(own_v, cand_v),
        config={
            "p0": p0,
            "q0": q0,
            "tau_u": sel_u.tau,
            "tau_v": sel_v.tau,
            "delta_u": gate.delta_u,
            "delta_v": gate.delta_v,
            "target_rank": gate.target_rank,
            "debias_target": debias_target,
        },
    )
