import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from matcomp.completion import CrudeSolverConfig, DebiasedMatrix, ObservationSet, crude_complete, debiased_from_full
from matcomp.errors import DegenerateDesignError, InvalidInputError
from matcomp.linalg import Subspace, orthonormalize, subspace_alignment, thin_svd
from matcomp.simulation import relative_error, sample_haar_subspace, sample_observations
from matcomp.subspace import SelectionConfig
from matcomp.transfer import (
    GateConfig,
    nora_transfer,
    optional_gate,
    oracle_transfer,
    projected_design,
    target_ols,
)
from oracles import solve_normal_equations


def one_pass(theta):
    p, q = theta.shape
    a, b = np.divmod(np.arange(p * q), q)
    return ObservationSet(p, q, a, b, theta[a, b])


def shared_instance(seed, p=20, q=16, r=3, k=4):
    rng = np.random.default_rng(seed)
    u = sample_haar_subspace(p, r, rng)
    v = sample_haar_subspace(q, r, rng)
    mats = [(u.basis * rng.uniform(1, 2, r)) @ v.basis.T for _ in range(k + 1)]
    return u, v, mats[0], mats[1:]


def test_target_ols_exact_representation():
    u, v, theta, _ = shared_instance(0)
    gamma = target_ols(one_pass(theta), u, v)
    np.testing.assert_allclose(u.basis @ gamma @ v.basis.T, theta, atol=1e-8)


def test_target_ols_scalar_mean():
    e = Subspace(np.eye(3)[:, :1])
    obs = ObservationSet.from_samples(3, 3, [(0, 0, 2.5)] * 4)
    assert target_ols(obs, e, e)[0, 0] == pytest.approx(2.5, abs=1e-14)


def test_target_ols_matches_normal_equations():
    rng = np.random.default_rng(3)
    u = orthonormalize(rng.standard_normal((3, 2)))
    v = orthonormalize(rng.standard_normal((3, 2)))
    theta = u.basis @ np.array([[1.0, -0.5], [0.3, 2.0]]) @ v.basis.T
    obs = one_pass(theta)
    w = projected_design(obs, u, v)
    # explicit rows vec(u^T e_a e_b^T v), row-major
    for i, (a, b) in enumerate(zip(obs.rows, obs.cols)):
        x = np.zeros((3, 3))
        x[a, b] = 1.0
        np.testing.assert_allclose(w[i], (u.basis.T @ x @ v.basis).reshape(-1), atol=1e-15)
    oracle = solve_normal_equations(w, obs.y).reshape(2, 2)
    np.testing.assert_allclose(target_ols(obs, u, v), oracle, atol=1e-8)


def test_target_ols_rank_deficient_min_norm():
    # only cell (0, 0) observed: one identifiable direction, min-norm answer
    rng = np.random.default_rng(4)
    u = orthonormalize(rng.standard_normal((4, 2)))
    v = orthonormalize(rng.standard_normal((4, 2)))
    obs = ObservationSet.from_samples(4, 4, [(0, 0, 1.0)] * 3)
    gamma = target_ols(obs, u, v)
    w = projected_design(obs, u, v)[0]
    np.testing.assert_allclose(gamma.reshape(-1), w / (w @ w), atol=1e-12)


def test_target_ols_errors():
    u = Subspace(np.eye(3)[:, :1])
    zero_rows = ObservationSet.from_samples(3, 3, [(1, 1, 1.0), (2, 2, 1.0)])
    with pytest.raises(DegenerateDesignError):
        target_ols(zero_rows, u, u)
    with pytest.raises(InvalidInputError):
        target_ols(ObservationSet.from_samples(3, 3, []), u, u)
    with pytest.raises(InvalidInputError):
        target_ols(zero_rows, Subspace(np.eye(4)[:, :1]), u)


@given(st.integers(0, 10_000))
def test_target_ols_rotation_equivariance(seed):
    rng = np.random.default_rng(seed)
    u = orthonormalize(rng.standard_normal((6, 2)))
    v = orthonormalize(rng.standard_normal((5, 3)))
    obs = ObservationSet(6, 5, rng.integers(0, 6, 30), rng.integers(0, 5, 30), rng.standard_normal(30))
    r = orthonormalize(rng.standard_normal((2, 2))).basis
    g1 = target_ols(obs, u, v)
    g2 = target_ols(obs, Subspace(u.basis @ r), v)
    np.testing.assert_allclose(g2, r.T @ g1, atol=1e-10)
    np.testing.assert_allclose(u.basis @ r @ g2 @ v.basis.T, u.basis @ g1 @ v.basis.T, atol=1e-10)


def test_oracle_transfer_noiseless_exact():
    u, v, theta, srcs = shared_instance(1)
    deb = [debiased_from_full(m, 3, f"s{k}") for k, m in enumerate(srcs)]
    model = oracle_transfer(one_pass(theta), deb, 3, 3)
    assert relative_error(model.theta_hat, theta) <= 1e-6
    assert model.gate_u_used_transfer and model.gate_v_used_transfer
    assert model.selected_u == model.selected_v == ("s0", "s1", "s2", "s3")
    np.testing.assert_allclose(model.theta_hat, model.u_hat.basis @ model.gamma @ model.v_hat.basis.T, atol=1e-10)
    assert np.linalg.matrix_rank(model.theta_hat, tol=1e-8) <= 3


def test_oracle_transfer_single_source_smoke():
    u, v, theta, _ = shared_instance(2, p=30, q=30, r=2)
    obs0 = sample_observations(theta, 1200, 1.0, 5)
    other = sample_observations(theta, 1200, 1.0, 6)
    from matcomp.completion import debiased_estimate

    model = oracle_transfer(obs0, [debiased_estimate(other, CrudeSolverConfig(2), 5, 0)], 2, 2)
    err = relative_error(model.theta_hat, theta)
    base = relative_error(crude_complete(obs0, CrudeSolverConfig(2)), theta)
    assert np.isfinite(err) and err < 5 * base


def test_oracle_transfer_errors():
    u, v, theta, srcs = shared_instance(1)
    with pytest.raises(InvalidInputError):
        oracle_transfer(one_pass(theta), [], 3, 3)
    with pytest.raises(InvalidInputError):
        oracle_transfer(one_pass(theta), [debiased_from_full(np.ones((5, 5)), 1)], 3, 3)


def plane_pair(cos2):
    """Two 2-d subspaces of R^6 with principal-angle cosines^2 (1, cos2)."""
    e = np.eye(6)
    a = Subspace(e[:, :2])
    c = math.sqrt(cos2)
    b = Subspace(np.column_stack([e[:, 0], c * e[:, 1] + math.sqrt(1 - cos2) * e[:, 2]]))
    return a, b


def test_gate_rule_examples():
    a, b = plane_pair(0.7)
    assert subspace_alignment(a, b) == pytest.approx(1.7)
    d = optional_gate(a, a, b, b, GateConfig(0.4, 0.4, 2))
    assert d.used_u and d.used_v and d.u is b
    d = optional_gate(a, a, b, b, GateConfig(0.2, 0.2, 2))
    assert not d.used_u and not d.used_v and d.u is a


def test_gate_zero_delta_falls_back():
    a, b = plane_pair(0.9)
    d = optional_gate(a, a, b, b, GateConfig(0.0, 0.0, 2))
    assert (d.used_u, d.used_v) == (False, False)


def test_gate_inclusion_passes():
    a = Subspace(np.eye(6)[:, :2])
    big = Subspace(np.eye(6)[:, :4])
    for delta in (0.0, 0.5, 2.0):
        assert optional_gate(a, a, big, big, GateConfig(delta, delta, 2)).used_u


def test_gate_absent_candidate():
    a = Subspace(np.eye(6)[:, :2])
    d = optional_gate(a, a, None, a, GateConfig(1.0, 1.0, 2))
    assert d.u is a and not d.used_u and d.used_v


@given(st.floats(0.0, 1.0), st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_gate_monotone_in_delta(cos2, d1, extra):
    a, b = plane_pair(cos2)
    small = optional_gate(a, a, b, b, GateConfig(d1, d1, 2))
    d2 = min(2.0, d1 + extra)
    large = optional_gate(a, a, b, b, GateConfig(d2, d2, 2))
    assert large.used_u >= small.used_u and large.used_v >= small.used_v


def test_gate_config_validation():
    with pytest.raises(InvalidInputError):
        GateConfig(-0.1, 0.0, 2)
    with pytest.raises(InvalidInputError):
        GateConfig(0.0, 2.5, 2)
    assert GateConfig.default(3) == GateConfig(0.3 * 3, 0.3 * 3, 3)


def test_nora_reduces_to_oracle_when_aligned():
    u, v, theta, srcs = shared_instance(7)
    deb = [debiased_from_full(m, 3, f"s{k}") for k, m in enumerate(srcs)]
    target = one_pass(theta)
    oracle = oracle_transfer(target, deb, 3, 3)
    nora = nora_transfer(target, deb, 3, 3, gate=GateConfig.default(3), crude_cfg=CrudeSolverConfig(3))
    assert nora.gate_u_used_transfer and nora.gate_v_used_transfer
    assert nora.selected_u == oracle.selected_u
    np.testing.assert_allclose(nora.theta_hat, oracle.theta_hat, atol=1e-8)


def test_nora_delta_zero_matches_target_subspaces():
    rng = np.random.default_rng(9)
    u, v, theta, _ = shared_instance(9, p=25, q=25, r=2)
    # sources on unrelated subspaces
    srcs = []
    for k in range(4):
        a = sample_haar_subspace(25, 2, rng).basis
        b = sample_haar_subspace(25, 2, rng).basis
        srcs.append(debiased_from_full(a @ b.T, 2, f"s{k}"))
    obs = sample_observations(theta, 800, 1.0, 10)
    cfg = CrudeSolverConfig(2)
    model = nora_transfer(obs, srcs, 2, 2, SelectionConfig(2.0), SelectionConfig(2.0), GateConfig(0.0, 0.0, 2), cfg)
    assert not model.gate_u_used_transfer and not model.gate_v_used_transfer
    svd = thin_svd(crude_complete(obs, cfg), 2)
    np.testing.assert_allclose(model.u_hat.projector, svd.u @ svd.u.T, atol=1e-10)
    np.testing.assert_allclose(model.v_hat.projector, svd.v @ svd.v.T, atol=1e-10)
    cs = thin_svd(model.theta_hat, 2)
    assert subspace_alignment(Subspace(cs.u), Subspace(svd.u)) == pytest.approx(2.0, abs=1e-8)


def test_nora_without_sources_is_target_only():
    u, v, theta, _ = shared_instance(11, p=20, q=20, r=2)
    obs = sample_observations(theta, 600, 1.0, 12)
    model = nora_transfer(obs, [], 4, 4, crude_cfg=CrudeSolverConfig(2))
    assert model.selected_u == () and not model.gate_u_used_transfer
    assert model.p0 == 2 and model.q0 == 2
    assert model.gate_u_alignment is None


def test_nora_empty_selection_falls_back():
    u, v, theta, srcs = shared_instance(13, p=20, q=20, r=2)
    deb = [debiased_from_full(m, 2, f"s{k}") for k, m in enumerate(srcs)]
    obs = sample_observations(theta, 600, 1.0, 14)
    model = nora_transfer(obs, deb, 2, 2, SelectionConfig(0.0), SelectionConfig(0.0), crude_cfg=CrudeSolverConfig(2))
    assert model.selected_u == () and model.selected_v == ()
    assert not model.gate_u_used_transfer and not model.gate_v_used_transfer
