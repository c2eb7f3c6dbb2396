import numpy as np
import pytest

from conftest import random_stabilizable
from plspi.env import Dataset, LinearSystem, NoiseSpec, collect
from plspi.exceptions import PriorError
from plspi.lqr import CostSpec, assemble_h, optimal_gain, solve_dare, solve_policy_lyapunov
from plspi.lspi import EvalMethod, LspiConfig, assemble_lhs, evaluate_policy, lspi_run
from plspi.partial import (
    PartialModel, choose_k1, difference_equation, evaluate_policy_partial, partial_evaluation,
    plspi_run, sub_optimal_gain, sub_solution, virtual_next,
)


def test_from_tokens_and_masks():
    pm = PartialModel.from_tokens([[1.0, 1.0], [0.0, "?"]], [[0.0], [1.0]])
    np.testing.assert_array_equal(pm.A1, [[1.0, 1.0], [0.0, 0.0]])
    np.testing.assert_array_equal(pm.known_mask_A, [[True, True], [True, False]])
    assert not pm.complete
    assert pm.tokens()[0] == [[1.0, 1.0], [0.0, "?"]]
    plug = PartialModel.from_tokens([["?"]], [[1.0]], plug_A=[[0.9]])
    assert plug.A1[0, 0] == 0.9
    with pytest.raises(PriorError):
        PartialModel.from_tokens([["x"]], [[1.0]])
    assert PartialModel(np.eye(2), np.ones((2, 1))).complete


def test_sub_optimal_gain_cases(examples):
    ex1 = examples["example1"]
    full = PartialModel(ex1.plant.A, ex1.plant.B)
    np.testing.assert_allclose(sub_optimal_gain(full, ex1.cost), ex1.optimal_gain(), rtol=1e-10)
    assert not np.any(sub_optimal_gain(PartialModel.zero(2, 1), ex1.cost))
    ex2 = examples["example2"]
    K1 = sub_optimal_gain(ex2.prior, ex2.cost)
    # Decoupled scalar DARE with a = 1.01, b = 1, q = 1, r = 1000, gamma = 0.98.
    a, b, q, r, g = 1.01, 1.0, 1.0, 1000.0, 0.98
    p = 1.0
    for _ in range(100_000):
        p = q + g * a * a * p - (g * a * b * p) ** 2 / (r + g * b * b * p)
    k = g * b * p * a / (r + g * b * b * p)
    np.testing.assert_allclose(K1, k * np.eye(3), rtol=1e-9, atol=1e-12)
    with pytest.raises(PriorError):
        sub_optimal_gain(PartialModel(2 * np.eye(2), np.zeros((2, 1))), ex1.cost)


def test_choose_k1_branches(examples):
    ex2 = examples["example2"]
    K1, fb = choose_k1(ex2.prior, np.zeros((3, 3)), ex2.cost)
    assert fb and np.allclose(K1, sub_optimal_gain(ex2.prior, ex2.cost))
    K = 0.1 * np.eye(3)
    K1, fb = choose_k1(ex2.prior, K, ex2.cost)
    assert not fb and np.array_equal(K1, K)
    K1, fb = choose_k1(PartialModel.zero(3, 3), np.zeros((3, 3)), ex2.cost)
    assert not fb


def test_sub_solution_examples(examples):
    cost = CostSpec([[1.0]], [[1.0]])
    sub = sub_solution(PartialModel([[0.5]], [[0.0]]), [[0.0]], cost)
    assert sub.P_K1[0, 0] == pytest.approx(4 / 3)
    np.testing.assert_allclose(sub.H_K1, [[4 / 3, 0.0], [0.0, 1.0]])
    ex1 = examples["example1"]
    zero = sub_solution(PartialModel.zero(2, 1), np.ones((1, 2)), ex1.cost)
    np.testing.assert_array_equal(zero.H_K1, np.diag([1.0, 1.0, 1.0]))
    A, B = ex1.plant.A, ex1.plant.B
    P = solve_dare(A, B, ex1.cost)
    full = sub_solution(PartialModel(A, B), optimal_gain(A, B, ex1.cost, P), ex1.cost)
    np.testing.assert_allclose(full.H_K1, assemble_h(A, B, ex1.cost, P), rtol=1e-9)
    with pytest.raises(PriorError):
        sub_solution(PartialModel([[2.0]], [[1.0]]), [[0.0]], cost)


def test_virtual_next():
    pm = PartialModel(np.array([[1.0, 1.0], [0.0, 0.0]]), np.array([[0.0], [1.0]]))
    x = np.array([1.0, 2.0])
    assert not np.any(virtual_next(PartialModel.zero(2, 1), np.ones((1, 2)), x))
    np.testing.assert_array_equal(virtual_next(pm, np.zeros((1, 2)), x), pm.A1 @ x)
    np.testing.assert_array_equal(virtual_next(pm, np.ones((1, 2)), x, np.array([0.5])), pm.A1 @ x + [0.0, 0.5])
    X = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_allclose(virtual_next(pm, np.ones((1, 2)), X), X @ (pm.A1 - pm.B1 @ np.ones((1, 2))).T)


def test_full_model_virtual_state_equals_real_next_state(examples):
    ex1 = examples["example1"]
    pm = PartialModel(ex1.plant.A, ex1.plant.B)
    K = np.array([[0.5, 1.0]])
    d = collect(ex1.plant, ex1.cost, K, NoiseSpec(0.0), 2, 5, seed=0)
    np.testing.assert_allclose(virtual_next(pm, K, d.X), d.X_next, atol=1e-15)


def _random_dataset(rng, n, m, k):
    X, U, Xn = rng.standard_normal((k, n)), rng.standard_normal((k, m)), rng.standard_normal((k, n))
    return Dataset(X, U, np.einsum("ij,ij->i", X, X) + np.einsum("ij,ij->i", U, U), Xn,
                   np.zeros(k, int), np.arange(k))


@pytest.mark.parametrize("method", list(EvalMethod))
def test_zero_prior_reduction_on_random_data(method):
    rng = np.random.default_rng(0)
    for n, m in ((1, 1), (2, 1), (3, 2)):
        cost = CostSpec(np.eye(n), np.eye(m), 0.9)
        for _ in range(5):
            d = _random_dataset(rng, n, m, 60)
            K = rng.standard_normal((m, n))
            pm = PartialModel.zero(n, m)
            sub = sub_solution(pm, rng.standard_normal((m, n)), cost)
            H_l = evaluate_policy(d, K, cost, method)
            H_p = evaluate_policy_partial(d, K, sub, pm, cost, method)
            assert np.max(np.abs(H_l - H_p)) <= 1e-10 * max(1.0, np.abs(H_l).max())


def test_lhs_is_shared_bitwise():
    rng = np.random.default_rng(1)
    d = _random_dataset(rng, 2, 1, 40)
    K = rng.standard_normal((1, 2))
    L_lspi = assemble_lhs(d, K, 0.9, EvalMethod.FIXED_POINT)[1]
    pm = PartialModel(rng.standard_normal((2, 2)) * 0.3, rng.standard_normal((2, 1)))
    sub = sub_solution(pm, np.zeros((1, 2)), CostSpec(np.eye(2), np.eye(1), 0.9))
    L_partial, _ = difference_equation(d, K, sub, pm, CostSpec(np.eye(2), np.eye(1), 0.9))
    assert np.array_equal(L_lspi, L_partial)


def test_difference_equation_rhs_vanishes_for_exact_sub_model(examples):
    ex1 = examples["example1"]
    pm = PartialModel(ex1.plant.A, ex1.plant.B)
    K = np.array([[0.5, 1.0]])
    d = collect(ex1.plant, ex1.cost, K, NoiseSpec(), 5, 10, seed=1)
    sub = sub_solution(pm, K, ex1.cost)
    L, rhs = difference_equation(d, K, sub, pm, ex1.cost)
    assert np.abs(rhs).max() <= 1e-9 * np.abs(L).max()
    # Data path (short-circuit off) also lands on H_K1.
    H, H2 = partial_evaluation(d, K, sub, pm, ex1.cost, use_complete_prior=False)
    assert np.linalg.norm(H2) <= 1e-6 * np.linalg.norm(sub.H_K1)


def test_example2_diagonal_prior_matches_model_h(examples):
    ex2 = examples["example2"]
    plant = LinearSystem(ex2.plant.A, ex2.plant.B, 0.0)
    K = ex2.optimal_gain()
    d = collect(plant, ex2.cost, K, NoiseSpec(1.0), 30, 20, seed=5)
    K1, fb = choose_k1(ex2.prior, K, ex2.cost)
    sub = sub_solution(ex2.prior, K1, ex2.cost, fb)
    H = evaluate_policy_partial(d, K, sub, ex2.prior, ex2.cost)
    H_true = assemble_h(plant.A, plant.B, ex2.cost, solve_policy_lyapunov(plant.A, plant.B, K, ex2.cost))
    assert np.linalg.norm(H - H_true) <= 1e-4 * np.linalg.norm(H_true)


def test_policy_form_virtual_state_is_available(examples):
    ex1 = examples["example1"]
    rec = plspi_run(ex1.plant, ex1.cost, ex1.prior, LspiConfig(2, 5), seed=0, virtual_action="policy")
    assert len(rec) == 2 and not any(rec.failed)
    with pytest.raises(ValueError):
        plspi_run(ex1.plant, ex1.cost, ex1.prior, LspiConfig(1, 1), seed=0, virtual_action="bogus")


def test_plspi_records_fallback_consistently(examples):
    ex2 = examples["example2"]
    rec = plspi_run(ex2.plant, ex2.cost, ex2.prior, LspiConfig(4, 5), ex2.noise, seed=2)
    K_prev = rec.K0
    for it in rec.iterations:
        for step in it.steps:
            if not step.fallback:
                M = ex2.prior.A1 - ex2.prior.B1 @ K_prev
                assert np.max(np.abs(np.linalg.eigvals(M))) < 1
            K_prev = step.K
    rec2 = plspi_run(ex2.plant, ex2.cost, ex2.prior, LspiConfig(4, 5), ex2.noise, seed=2)
    assert all(np.array_equal(a, b) for a, b in zip(rec.gains, rec2.gains))


def test_fixed_k1_always_uses_sub_optimum(examples):
    ex1 = examples["example1"]
    rec = plspi_run(ex1.plant, ex1.cost, ex1.prior, LspiConfig(2, 2), seed=0, fixed_k1=True)
    K1 = sub_optimal_gain(ex1.prior, ex1.cost)
    for it in rec.iterations:
        for step in it.steps:
            np.testing.assert_array_equal(step.k1, K1)


def test_prior_init_starts_from_sub_optimum(examples):
    ex2 = examples["example2"]
    rec = plspi_run(ex2.plant, ex2.cost, ex2.prior, LspiConfig(1, 1), ex2.noise, seed=0, init="prior")
    np.testing.assert_array_equal(rec.K0, sub_optimal_gain(ex2.prior, ex2.cost))
