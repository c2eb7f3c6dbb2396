import numpy as np
import pytest

from conftest import random_stabilizable
from plspi.env import Dataset, InitialState, LinearSystem, NoiseSpec, collect
from plspi.exceptions import ConfigError, DataError, DimensionError, ExcitationError, ImprovementError
from plspi.lqr import CostSpec, assemble_h, optimal_gain, solve_dare, solve_policy_lyapunov
from plspi.lspi import EvalMethod, LspiConfig, evaluate_policy, feature, lspi_run, policy_improve


def _dataset(X, U, X_next, cost):
    X, U, X_next = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (X, U, X_next))
    r = np.einsum("ij,jk,ik->i", X, cost.Q, X) + np.einsum("ij,jk,ik->i", U, cost.R, U)
    k = len(X)
    return Dataset(X, U, r, X_next, np.zeros(k, int), np.arange(k))


def test_feature_examples():
    assert np.array_equal(feature([1.0], [1.0]), [1.0, 1.0, 1.0])
    assert not np.any(feature(np.zeros(2), np.zeros(1)))
    assert feature(np.ones(3), np.ones(3)).shape == (21,)
    assert feature(np.ones((4, 3)), np.ones((4, 3))).shape == (4, 21)


def test_scalar_hand_example():
    cost = CostSpec([[1.0]], [[1.0]])
    X = np.repeat([[-1.0], [0.5], [2.0]], 2, axis=0)
    U = np.array([[0.3], [-1.0], [0.7], [1.2], [-0.4], [0.9]])
    d = _dataset(X, U, 0.5 * X + U, cost)
    H = evaluate_policy(d, [[0.0]], cost)
    p = 4 / 3
    np.testing.assert_allclose(H, [[1 + 0.25 * p, 0.5 * p], [0.5 * p, 1 + p]], rtol=1e-6)
    assert policy_improve(H, 1)[0, 0] == pytest.approx(2 / 7, rel=1e-6)


def _rich_noiseless(rng, n, m, gamma):
    A, B = random_stabilizable(rng, n, m, scale=1.1)
    cost = CostSpec(np.eye(n), np.eye(m), gamma)
    K = optimal_gain(A, B, cost, solve_dare(A, B, cost))
    d = collect(LinearSystem(A, B), cost, K, NoiseSpec(1.0), 30, 10, seed=int(rng.integers(1 << 30)))
    H_true = assemble_h(A, B, cost, solve_policy_lyapunov(A, B, K, cost))
    return d, K, cost, H_true


@pytest.mark.parametrize("method", list(EvalMethod))
def test_oracle_equivalence_random_systems(method):
    rng = np.random.default_rng(11)
    for n in (1, 2, 3):
        for m in (1, 2):
            d, K, cost, H_true = _rich_noiseless(rng, n, m, 0.95)
            H = evaluate_policy(d, K, cost, method)
            assert np.linalg.norm(H - H_true) <= 1e-6 * np.linalg.norm(H_true)
            np.testing.assert_array_equal(H, H.T)


def test_example1_optimal_h_gives_optimal_gain(examples):
    cfg = examples["example1"]
    A, B, cost = cfg.plant.A, cfg.plant.B, cfg.cost
    P = solve_dare(A, B, cost)
    np.testing.assert_allclose(policy_improve(assemble_h(A, B, cost, P), 2), optimal_gain(A, B, cost, P), rtol=1e-8)


def test_policy_improve_block_diagonal():
    H = np.diag([1.0, 2.0, 3.0])
    assert not np.any(policy_improve(H, 2))


def test_policy_improve_errors():
    with pytest.raises(ImprovementError):
        policy_improve(np.diag([1.0, 1.0, 0.0]), 2)
    with pytest.raises(ImprovementError):
        policy_improve(np.diag([1.0, 1.0, -1.0]), 2, require_pd=True)
    assert policy_improve(np.array([[1.0, 2.0], [2.0, -4.0]]), 1)[0, 0] == pytest.approx(-0.5)
    with pytest.raises(ImprovementError):
        policy_improve(np.array([[1.0, np.nan], [np.nan, 1.0]]), 1)
    with pytest.raises(DimensionError):
        policy_improve(np.eye(3), 3)


def test_repeated_transition_is_excitation_error():
    cost = CostSpec(np.eye(2), np.eye(1))
    d = _dataset(np.ones((10, 2)), np.ones((10, 1)), np.ones((10, 2)), cost)
    with pytest.raises(ExcitationError):
        evaluate_policy(d, np.zeros((1, 2)), cost)


def test_nonfinite_data_is_data_error():
    cost = CostSpec(np.eye(1), np.eye(1))
    d = _dataset([[1.0], [2.0], [np.inf]], [[1.0], [0.0], [1.0]], [[1.0], [1.0], [1.0]], cost)
    with pytest.raises(DataError):
        evaluate_policy(d, [[0.0]], cost)


def test_config_validation():
    with pytest.raises(ConfigError):
        LspiConfig(0, 1)
    with pytest.raises(ConfigError):
        LspiConfig(1, 1, ridge=-1.0)
    with pytest.raises(ConfigError):
        LspiConfig(1, 1, eval_method="nope")
    assert LspiConfig(eval_method="bellman-residual").eval_method is EvalMethod.BELLMAN_RESIDUAL


def test_lspi_run_example1_and_determinism(examples):
    cfg = examples["example1"]
    K_star = cfg.optimal_gain()
    r1 = lspi_run(cfg.plant, cfg.cost, LspiConfig(2, 5), seed=3)
    r2 = lspi_run(cfg.plant, cfg.cost, LspiConfig(2, 5), seed=3)
    assert r1.algorithm == "lspi-v1" and len(r1) == 2
    assert r1.convergence_iteration(K_star) is not None
    for a, b in zip(r1.gains, r2.gains):
        np.testing.assert_array_equal(a, b)
    assert np.array_equal(r1.rho, r2.rho)
    assert lspi_run(cfg.plant, cfg.cost, LspiConfig(1, 1), seed=0).algorithm == "lspi-v2"


def test_zero_data_flags_failed_iteration(examples):
    cfg = examples["example1"]
    rec = lspi_run(cfg.plant, cfg.cost, LspiConfig(2, 1), NoiseSpec(0.0), seed=0,
                   x0=InitialState.fixed([0.0, 0.0]))
    assert rec.failed == [True, True]
    assert "ExcitationError" in rec.iterations[0].error
    assert not np.any(rec.final_gain)
