import numpy as np
import pytest
import scipy.linalg as sla

from conftest import random_stabilizable
from plspi.exceptions import DimensionError, DivergenceError, DomainError, InstabilityError
from plspi.lqr import (
    CostSpec, assemble_h, h_blocks, optimal_gain, policy_cost, riccati_residual, solve_dare,
    solve_policy_lyapunov, spectral_radius, state_value,
)


def test_scalar_dare_closed_form():
    # p = q + a^2 p - a^2 b^2 p^2 / (r + b^2 p) with a=b=q=r=1 gives the golden ratio.
    cost = CostSpec([[1.0]], [[1.0]])
    P = solve_dare([[1.0]], [[1.0]], cost)
    assert P[0, 0] == pytest.approx((1 + np.sqrt(5)) / 2, rel=1e-12)
    assert optimal_gain([[1.0]], [[1.0]], cost, P)[0, 0] == pytest.approx(P[0, 0] / (1 + P[0, 0]), rel=1e-12)


@pytest.mark.parametrize("gamma", [0.9, 0.98, 1.0])
def test_dare_matches_scipy_on_scaled_pair(gamma):
    rng = np.random.default_rng(1)
    for _ in range(10):
        A, B = random_stabilizable(rng, 3, 2)
        cost = CostSpec(np.eye(3), np.eye(2), gamma)
        ref = sla.solve_discrete_are(np.sqrt(gamma) * A, np.sqrt(gamma) * B, cost.Q, cost.R)
        P = solve_dare(A, B, cost)
        assert np.linalg.norm(P - ref) <= 1e-8 * np.linalg.norm(ref)


def test_fixed_point_method_agrees_with_doubling():
    rng = np.random.default_rng(2)
    A, B = random_stabilizable(rng, 3, 1, scale=1.0)
    cost = CostSpec(np.eye(3), np.eye(1), 0.95)
    np.testing.assert_allclose(solve_dare(A, B, cost, method="fixed_point"), solve_dare(A, B, cost), rtol=1e-8)


def test_zero_plant_gives_q():
    cost = CostSpec(np.diag([1.0, 2.0]), np.eye(1), 0.9)
    np.testing.assert_array_equal(solve_dare(np.zeros((2, 2)), np.zeros((2, 1)), cost), cost.Q)


def test_example1_optimal_gain(examples):
    cfg = examples["example1"]
    K = cfg.optimal_gain()
    assert spectral_radius(cfg.plant.A - cfg.plant.B @ K) < 1
    P = solve_dare(cfg.plant.A, cfg.plant.B, cfg.cost)
    assert riccati_residual(cfg.plant.A, cfg.plant.B, cfg.cost, P) < 1e-9


def test_example2_closed_loop_radius(examples):
    cfg = examples["example2"]
    assert spectral_radius(cfg.plant.A) == pytest.approx(1.01 + 0.01 * np.sqrt(2), abs=1e-6)
    K = cfg.optimal_gain()
    assert spectral_radius(cfg.plant.A - cfg.plant.B @ K) == pytest.approx(0.98, abs=0.005)


def test_unstabilizable_raises():
    cost = CostSpec(np.eye(2), np.eye(1))
    with pytest.raises(DivergenceError):
        solve_dare(np.diag([2.0, 0.5]), np.array([[0.0], [1.0]]), cost)


def test_cost_validation():
    with pytest.raises(DomainError):
        CostSpec(np.eye(2), np.zeros((1, 1)))
    with pytest.raises(DomainError):
        CostSpec(np.eye(2), np.eye(1), gamma=1.5)
    with pytest.raises(DomainError):
        CostSpec(-np.eye(2), np.eye(1))
    with pytest.raises(DimensionError):
        solve_dare(np.eye(3), np.ones((3, 1)), CostSpec(np.eye(2), np.eye(1)))


def test_lyapunov_matches_scipy():
    rng = np.random.default_rng(3)
    for gamma in (0.9, 1.0):
        A, B = random_stabilizable(rng, 3, 2)
        cost = CostSpec(np.eye(3), 2 * np.eye(2), gamma)
        K = optimal_gain(A, B, cost, solve_dare(A, B, cost))
        Acl = np.sqrt(gamma) * (A - B @ K)
        ref = sla.solve_discrete_lyapunov(Acl.T, cost.Q + K.T @ cost.R @ K)
        np.testing.assert_allclose(solve_policy_lyapunov(A, B, K, cost), ref, rtol=1e-9)


def test_lyapunov_scalar_and_instability():
    cost = CostSpec([[1.0]], [[1.0]])
    P = solve_policy_lyapunov([[0.5]], [[1.0]], [[0.0]], cost)
    assert P[0, 0] == pytest.approx(4 / 3, rel=1e-12)
    with pytest.raises(InstabilityError):
        solve_policy_lyapunov([[1.2]], [[1.0]], [[0.0]], cost)
    assert policy_cost([[1.2]], [[1.0]], [[0.0]], cost) == float("inf")


def test_policy_value_of_optimal_gain_is_dare_solution():
    rng = np.random.default_rng(4)
    A, B = random_stabilizable(rng, 2, 1)
    cost = CostSpec(np.eye(2), np.eye(1), 0.98)
    P = solve_dare(A, B, cost)
    K = optimal_gain(A, B, cost, P)
    np.testing.assert_allclose(solve_policy_lyapunov(A, B, K, cost), P, rtol=1e-8)


def test_h_matrix_improvement_recovers_gain():
    rng = np.random.default_rng(5)
    A, B = random_stabilizable(rng, 3, 2)
    cost = CostSpec(np.eye(3), np.eye(2), 0.9)
    P = solve_dare(A, B, cost)
    H = assemble_h(A, B, cost, P)
    _, _, H21, H22 = h_blocks(H, 3)
    np.testing.assert_allclose(np.linalg.solve(H22, H21), optimal_gain(A, B, cost, P), rtol=1e-10)
    np.testing.assert_allclose(H, H.T)


def test_state_value_noise_offset():
    P = np.eye(2)
    assert state_value(P, [1.0, 1.0]) == 2.0
    assert state_value(P, [1.0, 0.0], W=0.1 * np.eye(2), gamma=0.5) == pytest.approx(1.0 + 0.2)
    with pytest.raises(DomainError):
        state_value(P, [1.0, 0.0], W=np.eye(2), gamma=1.0)


def test_policy_cost_with_noise():
    cost = CostSpec([[1.0]], [[1.0]], 0.5)
    P = solve_policy_lyapunov([[0.5]], [[1.0]], [[0.0]], cost)
    J = policy_cost([[0.5]], [[1.0]], [[0.0]], cost, W=[[0.1]])
    assert J == pytest.approx(P[0, 0] * (1 + 0.1))
    with pytest.raises(DomainError):
        policy_cost([[0.5]], [[1.0]], [[0.0]], CostSpec([[1.0]], [[1.0]]), W=[[0.1]])
