"""Confidence intervals for bilinear functionals ``u^T Theta_0 v`` of the target.

The plug-in standard deviation combines the residual mean square with the
norms of the query vectors projected onto the fitted representation.
Intervals are justified asymptotically for the oracle pipeline; applying
them to a gated (non-oracle) model is experimental.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .completion import ObservationSet
from .errors import DegenerateQueryError, InvalidInputError
from .transfer import TransferModel

_STD_NORMAL = NormalDist()


@dataclass(frozen=True, eq=False)
class BilinearQuery:
    u: np.ndarray
    v: np.ndarray
    level: float = 0.95

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float).reshape(-1)
        v = np.asarray(self.v, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise InvalidInputError("query vectors must be finite")
        if not 0 < self.level < 1:
            raise InvalidInputError(f"confidence level must lie in (0, 1), got {self.level}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)


@dataclass(frozen=True)
class InferenceResult:
    point: float
    sigma_l: float
    z: float
    ci_lo: float
    ci_hi: float
    n0: int

    @property
    def half_width(self) -> float:
        return self.z * self.sigma_l / math.sqrt(self.n0)


def normal_quantile(prob: float) -> float:
    return _STD_NORMAL.inv_cdf(prob)


def _check(model: TransferModel, obs: ObservationSet, u, v):
    if (obs.p, obs.q) != (model.p, model.q):
        raise InvalidInputError(
            f"observations are ({obs.p}, {obs.q}) but the model is ({model.p}, {model.q})"
        )
    if len(u) != model.p or len(v) != model.q:
        raise InvalidInputError(
            f"query vectors have lengths ({len(u)}, {len(v)}), expected ({model.p}, {model.q})"
        )
    if obs.n < 1:
        raise InvalidInputError("need at least one observation")


def sigma_l_sq(model: TransferModel, obs: ObservationSet, u, v) -> float:
    """``(pq/n0) * sum_i resid_i^2 * ||U^T u||^2 * ||V^T v||^2`` with residuals against ``model.theta_hat``."""
    u = np.asarray(u, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    _check(model, obs, u, v)
    pu = model.u_hat.basis.T @ u
    pv = model.v_hat.basis.T @ v
    nu, nv = float(pu @ pu), float(pv @ pv)
    # projected norm below 1e-10 of the vector's own norm counts as orthogonal
    for side, proj_sq, vec in (("u", nu, u), ("v", nv, v)):
        if proj_sq <= 1e-20 * float(vec @ vec) or proj_sq == 0.0:
            raise DegenerateQueryError(
                f"query vector {side} is orthogonal to the fitted representation; "
                "the functional is estimated as 0 with no sampling variance"
            )
    res = obs.residuals(model.theta_hat)
    return obs.p * obs.q / obs.n * float(res @ res) * nu * nv


def bilinear_ci(model: TransferModel, obs: ObservationSet, query: BilinearQuery) -> InferenceResult:
    """Normal-approximation interval ``point +- z * sigma_l / sqrt(n0)``."""
    s2 = sigma_l_sq(model, obs, query.u, query.v)
    point = float(query.u @ model.theta_hat @ query.v)
    sigma = math.sqrt(s2)
    z = normal_quantile(0.5 + query.level / 2)
    half = z * sigma / math.sqrt(obs.n)
    return InferenceResult(point, sigma, z, point - half, point + half, obs.n)
