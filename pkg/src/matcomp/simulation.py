"""Synthetic transfer-learning instances and a seeded Monte Carlo harness.

Shared column and row spaces ``span(U)`` (p0-dim) and ``span(V)`` (q0-dim)
are drawn Haar-uniformly.  Each matrix ``U_k diag(lam_k) V_k^T`` takes its
left (right) factor either from the leading eigenvectors of a GOE-perturbed
projector onto the shared space ("informative") or from a Haar-random
subspace ("uninformative"):

    type  left            right
    i     informative     informative
    ii    informative     Haar
    iii   Haar            informative
    iv    Haar            Haar

Scenario A/B/C draws the target from type i/ii/iv.

Seeding: replication ``k`` of a run with base seed ``s`` uses
``SeedSequence(s, spawn_key=(k,))``, which is independent of every other
replication, so reps can run in any order or in parallel with identical
results.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Sequence

import numpy as np

from .completion import (
    CrudeSolverConfig,
    ObservationSet,
    crude_complete,
    debiased_estimate,
)
from .errors import InvalidInputError, MatcompError
from .linalg import Subspace, orthonormalize, top_eigvecs_sym
from .subspace import SelectionConfig
from .transfer import GateConfig, nora_transfer, oracle_transfer

log = logging.getLogger(__name__)

METHODS = ("target-only", "pooled-two-step", "oracle-transfer", "nora-transfer")
SCENARIO_TARGET_TYPE = {"A": "i", "B": "ii", "C": "iv"}
TYPES = ("i", "ii", "iii", "iv")


@dataclass(frozen=True)
class GeneratorConfig:
    p: int = 100
    q: int = 100
    p0: int = 5
    q0: int = 5
    r: int = 3
    h: float = 0.1
    K: int = 24
    n_target: int = 2500
    n_source: int = 2500
    sigma: float = 1.0
    scenario: str = "A"
    source_mix: tuple[float, float, float, float] = (0.5, 1 / 6, 1 / 6, 1 / 6)
    seed: object = 0
    # noise scale of the target alone; None means ``sigma``
    sigma_target: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "source_mix", tuple(float(f) for f in self.source_mix))
        for name in ("p", "q", "p0", "q0", "r", "n_target", "n_source"):
            if int(getattr(self, name)) < 1:
                raise InvalidInputError(f"{name} must be a positive count")
        if self.K < 0:
            raise InvalidInputError("K must be non-negative")
        if self.p0 > self.p or self.q0 > self.q:
            raise InvalidInputError("shared dimensions cannot exceed the ambient dimensions")
        if self.r > min(self.p0, self.q0):
            raise InvalidInputError(f"r={self.r} exceeds min(p0, q0)={min(self.p0, self.q0)}")
        if self.h < 0 or self.sigma < 0 or (self.sigma_target is not None and self.sigma_target < 0):
            raise InvalidInputError("h and the noise scales must be non-negative")
        if self.scenario not in SCENARIO_TARGET_TYPE:
            raise InvalidInputError(f"scenario must be one of A, B, C; got {self.scenario!r}")
        mix = self.source_mix
        if len(mix) != 4 or min(mix) < 0 or abs(sum(mix) - 1.0) > 1e-9:
            raise InvalidInputError(f"source_mix must be 4 non-negative fractions summing to 1, got {mix}")

    def type_counts(self) -> dict[str, int]:
        """Sources per type: floor for types ii-iv, remainder to type i."""
        counts = {t: int(math.floor(self.K * f + 1e-9)) for t, f in zip(TYPES[1:], self.source_mix[1:])}
        counts["i"] = self.K - sum(counts.values())
        return {t: counts[t] for t in TYPES}

    def source_types(self) -> list[str]:
        return [t for t, c in self.type_counts().items() for _ in range(c)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["source_mix"] = list(self.source_mix)
        d["seed"] = self.seed if isinstance(self.seed, int) else None
        return d


@dataclass(frozen=True, eq=False)
class SyntheticInstance:
    truth_target: np.ndarray
    truth_sources: list[np.ndarray]
    obs_target: ObservationSet
    obs_sources: list[ObservationSet]
    planted_u: Subspace
    planted_v: Subspace
    source_types: list[str]
    target_type: str
    target_factors: tuple[Subspace, Subspace] = field(repr=False, default=None)
    source_ids: list[str] = field(default_factory=list)


def sample_goe(dim: int, seed) -> np.ndarray:
    """Symmetric matrix, off-diagonal N(0, 1/(2 dim)) and diagonal N(0, 1/dim)."""
    if dim < 1:
        raise InvalidInputError("dim must be >= 1")
    z = np.random.default_rng(seed).standard_normal((dim, dim))
    return (z + z.T) / (2.0 * math.sqrt(dim))


def sample_haar_subspace(ambient: int, dim: int, seed) -> Subspace:
    if not 0 <= dim <= ambient:
        raise InvalidInputError(f"dim={dim} must lie in [0, {ambient}]")
    return orthonormalize(np.random.default_rng(seed).standard_normal((ambient, dim)))


def _informative(planted: Subspace, h: float, r: int, rng) -> Subspace:
    g = sample_goe(planted.ambient_dim, rng)
    return top_eigvecs_sym(planted.projector + h * g, r)


def _factor(planted: Subspace, informative: bool, h: float, r: int, rng) -> Subspace:
    if informative:
        return _informative(planted, h, r, rng)
    return sample_haar_subspace(planted.ambient_dim, r, rng)


def _draw_matrix(kind, planted_u, planted_v, cfg, rng):
    uk = _factor(planted_u, kind in ("i", "ii"), cfg.h, cfg.r, rng)
    vk = _factor(planted_v, kind in ("i", "iii"), cfg.h, cfg.r, rng)
    lam = rng.uniform(1.0, 2.0, cfg.r)
    return (uk.basis * lam) @ vk.basis.T, uk, vk


def sample_observations(theta: np.ndarray, n: int, sigma: float, seed) -> ObservationSet:
    """Uniform sampling with replacement; ``y = theta[a, b] + sigma * N(0, 1) / sqrt(pq)``."""
    rng = np.random.default_rng(seed)
    p, q = theta.shape
    a = rng.integers(0, p, n)
    b = rng.integers(0, q, n)
    noise = rng.standard_normal(n)
    y = theta[a, b] + (sigma / math.sqrt(p * q)) * noise if sigma else theta[a, b].copy()
    return ObservationSet(p, q, a, b, y)


def generate_instance(cfg: GeneratorConfig) -> SyntheticInstance:
    rng = np.random.default_rng(cfg.seed)
    planted_u = sample_haar_subspace(cfg.p, cfg.p0, rng)
    planted_v = sample_haar_subspace(cfg.q, cfg.q0, rng)
    target_type = SCENARIO_TARGET_TYPE[cfg.scenario]
    theta0, u0, v0 = _draw_matrix(target_type, planted_u, planted_v, cfg, rng)
    types = cfg.source_types()
    truths = [_draw_matrix(t, planted_u, planted_v, cfg, rng)[0] for t in types]
    sigma0 = cfg.sigma if cfg.sigma_target is None else cfg.sigma_target
    obs0 = sample_observations(theta0, cfg.n_target, sigma0, rng)
    obs = [sample_observations(t, cfg.n_source, cfg.sigma, rng) for t in truths]
    return SyntheticInstance(
        truth_target=theta0,
        truth_sources=truths,
        obs_target=obs0,
        obs_sources=obs,
        planted_u=planted_u,
        planted_v=planted_v,
        source_types=types,
        target_type=target_type,
        target_factors=(u0, v0),
        source_ids=[f"s{k:03d}" for k in range(len(types))],
    )


def relative_error(estimate: np.ndarray, truth: np.ndarray) -> float:
    return float(np.sum((estimate - truth) ** 2) / np.sum(truth**2))


def baseline_target_only(target: ObservationSet, cfg: CrudeSolverConfig) -> np.ndarray:
    return crude_complete(target, cfg)


def baseline_pooled_two_step(
    target: ObservationSet, sources: Sequence[ObservationSet], cfg: CrudeSolverConfig
) -> np.ndarray:
    """Complete the pooled samples, then complete the target's residual contrast."""
    pooled = crude_complete(ObservationSet.concat([target, *sources]), cfg)
    contrast = target.with_responses(target.residuals(pooled))
    return pooled + crude_complete(contrast, cfg)


@dataclass(frozen=True)
class ExperimentSettings:
    """Method-side settings of a Monte Carlo run (the data side is :class:`GeneratorConfig`)."""

    methods: tuple[str, ...] = METHODS
    reps: int = 1
    J: int = 5
    tau_u: float = 0.5
    tau_v: float = 0.5
    delta_u: float | None = None
    delta_v: float | None = None
    max_iters: int = 500
    rel_tol: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise InvalidInputError(f"unknown method label(s): {', '.join(unknown)}")
        if not self.methods:
            raise InvalidInputError("at least one method is required")
        if self.reps < 1:
            raise InvalidInputError(f"reps must be >= 1, got {self.reps}")
        if self.J < 2:
            raise InvalidInputError(f"J must be >= 2, got {self.J}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        return d


@dataclass
class MethodSummary:
    label: str
    errors: list
    mean: float
    stderr: float
    n_failed: int


@dataclass
class ExperimentResult:
    methods: list[MethodSummary]
    config: dict
    rep_seeds: list[list[int]]
    diagnostics: list[dict] = field(default_factory=list)

    def summary(self, label: str) -> MethodSummary:
        for m in self.methods:
            if m.label == label:
                return m
        raise KeyError(label)

    def csv_rows(self):
        for m in self.methods:
            for rep, err in enumerate(m.errors):
                yield m.label, rep, err


def rep_seed(base_seed: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(base_seed), spawn_key=(int(rep),))


def _run_rep(args):
    cfg, settings, base_seed, rep = args
    ss = rep_seed(base_seed, rep)
    gen_ss, debias_ss, nora_ss = ss.spawn(3)
    inst = generate_instance(replace(cfg, seed=gen_ss))
    crude = CrudeSolverConfig(cfg.r, max_iters=settings.max_iters, rel_tol=settings.rel_tol)
    out = {"rep": rep, "errors": {}, "failed": {}, "diag": {}}
    debiased = None
    if {"oracle-transfer", "nora-transfer"} & set(settings.methods):
        try:
            debiased = [
                debiased_estimate(o, crude, settings.J, s, sid)
                for o, s, sid in zip(inst.obs_sources, debias_ss.spawn(len(inst.obs_sources)), inst.source_ids)
            ]
        except MatcompError as exc:
            debiased = exc

    for method in settings.methods:
        try:
            if method == "target-only":
                est = baseline_target_only(inst.obs_target, crude)
            elif method == "pooled-two-step":
                est = baseline_pooled_two_step(inst.obs_target, inst.obs_sources, crude)
            elif isinstance(debiased, Exception):
                raise debiased
            elif method == "oracle-transfer":
                est = oracle_transfer(inst.obs_target, debiased, cfg.p0, cfg.q0).theta_hat
            else:
                gate = GateConfig(
                    0.3 * cfg.r if settings.delta_u is None else settings.delta_u,
                    0.3 * cfg.r if settings.delta_v is None else settings.delta_v,
                    cfg.r,
                )
                model = nora_transfer(
                    inst.obs_target,
                    debiased,
                    cfg.p0,
                    cfg.q0,
                    SelectionConfig(min(settings.tau_u, cfg.p0)),
                    SelectionConfig(min(settings.tau_v, cfg.q0)),
                    gate,
                    crude,
                    nora_ss,
                )
                est = model.theta_hat
                informative_u = [sid for sid, t in zip(inst.source_ids, inst.source_types) if t in ("i", "ii")]
                informative_v = [sid for sid, t in zip(inst.source_ids, inst.source_types) if t in ("i", "iii")]
                out["diag"] = {
                    "gate_u": model.gate_u_used_transfer,
                    "gate_v": model.gate_v_used_transfer,
                    "selected_u": list(model.selected_u),
                    "selected_v": list(model.selected_v),
                    "selection_exact_u": sorted(model.selected_u) == informative_u,
                    "selection_exact_v": sorted(model.selected_v) == informative_v,
                }
            out["errors"][method] = relative_error(est, inst.truth_target)
        except (MatcompError, np.linalg.LinAlgError) as exc:
            log.warning("rep %d, %s failed: %s", rep, method, exc)
            out["failed"][method] = str(exc)
    return out


def _summarize(label, errors):
    ok = [e for e in errors if e is not None]
    mean = float(np.mean(ok)) if ok else float("nan")
    se = float(np.std(ok, ddof=1) / math.sqrt(len(ok))) if len(ok) > 1 else float("nan")
    return MethodSummary(label, list(errors), mean, se, len(errors) - len(ok))


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("MATCOMP_THREADS", "1") or 1)
    return max(1, int(threads))


def run_experiment(
    cfg: GeneratorConfig,
    methods: Sequence[str] = METHODS,
    reps: int = 1,
    base_seed: int = 0,
    settings: ExperimentSettings | None = None,
    threads: int | None = 1,
) -> ExperimentResult:
    """Replicate the comparison ``reps`` times and aggregate relative errors per method.

    Failed method runs are recorded as ``None`` and excluded from the mean and
    standard error; ``n_failed`` counts them.
    """
    if settings is None:
        settings = ExperimentSettings(methods=tuple(methods), reps=reps)
    else:
        settings = replace(settings, methods=tuple(methods), reps=reps)
    jobs = [(cfg, settings, base_seed, rep) for rep in range(settings.reps)]
    workers = resolve_threads(threads)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(_run_rep, jobs))
    else:
        outs = [_run_rep(job) for job in jobs]
    outs.sort(key=lambda o: o["rep"])

    summaries = [
        _summarize(m, [o["errors"].get(m) for o in outs]) for m in settings.methods
    ]
    config = {"generator": cfg.to_dict(), "settings": settings.to_dict(), "base_seed": int(base_seed)}
    config["generator"]["seed"] = None
    return ExperimentResult(
        methods=summaries,
        config=config,
        rep_seeds=[[int(base_seed), o["rep"]] for o in outs],
        diagnostics=[{"rep": o["rep"], "failed": o["failed"], **o["diag"]} for o in outs],
    )
