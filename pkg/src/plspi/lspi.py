"""Model-free least-squares policy iteration with an exact quadratic basis.

The Q-function of ``u = -Kx`` is ``[x; u]' H [x; u]``; its half-vectorization
``h`` is fitted from transitions either by the fixed-point normal equations
``sum phi (phi - g psi)' h = sum phi r`` or by ordinary least squares on the
stacked Bellman rows.  ``phi`` is the feature of the executed pair and ``psi``
the feature of ``(x', -K x')``.

Both solvers share one ridge-regularized routine (:func:`solve_centered`).  The
ridge pulls toward a *center* vector rather than toward zero: plain LSPI
centers on ``blockdiag(Q, R)`` (the Q-matrix of the zero value function, known
from the cost design) and the partial-knowledge learner centers on its
sub-model Q-matrix.
"""

import enum
import time
from dataclasses import dataclass

import numpy as np

from plspi.env import NoiseSpec, collect
from plspi.exceptions import (
    ConfigError,
    DataError,
    DimensionError,
    ExcitationError,
    ExplosionError,
    ImprovementError,
    NumericalError,
    PLSPIError,
)
from plspi.lqr import h_blocks, policy_cost, spectral_radius
from plspi.quadform import mat_to_vec, overbar_vec, vec_to_mat
from plspi.records import InnerStep, IterationRecord, RunRecord

DEFAULT_RIDGE = 1e-8


class EvalMethod(enum.Enum):
    FIXED_POINT = "fixed_point"
    BELLMAN_RESIDUAL = "bellman_residual"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower().replace("-", "_"))
        except ValueError:
            raise ConfigError(f"unknown evaluation method {value!r}") from None


@dataclass(frozen=True)
class LspiConfig:
    outer_iters: int = 10
    inner_iters: int = 5
    eval_method: EvalMethod = EvalMethod.FIXED_POINT
    ridge: float = DEFAULT_RIDGE
    require_pd: bool = False

    def __post_init__(self):
        if int(self.outer_iters) < 1 or int(self.inner_iters) < 1:
            raise ConfigError("outer_iters and inner_iters must be at least 1")
        if not self.ridge >= 0:
            raise ConfigError("ridge must be non-negative")
        object.__setattr__(self, "eval_method", EvalMethod.parse(self.eval_method))


def feature(x, u):
    """``overbar_vec([x; u])``; row-wise when given batches."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.ndim == 1:
        u = np.atleast_1d(u)
    elif u.ndim == 1:
        u = u[:, None]
    if x.shape[:-1] != u.shape[:-1]:
        raise DimensionError(f"state batch {x.shape} and input batch {u.shape} disagree")
    return overbar_vec(np.concatenate([x, u], axis=-1))


def policy_features(X, K):
    """Features of ``(x, -Kx)`` for each row of ``X``."""
    X = np.asarray(X, dtype=float)
    return feature(X, -X @ np.atleast_2d(K).T)


def zero_value_center(cost):
    """``mat_to_vec(blockdiag(Q, R))``, the Q-matrix of a zero value function."""
    n, m = cost.n, cost.m
    Z = np.zeros((n, m))
    return mat_to_vec(np.block([[cost.Q, Z], [Z.T, cost.R]]))


def check_data(data):
    if len(data) == 0:
        raise ExcitationError("empty dataset")
    if not data.is_finite():
        raise DataError("dataset contains non-finite entries (exploded rollout?)")


def assemble_lhs(data, K, gamma, method):
    """Feature matrix and solver left-hand side for policy ``K``.

    Returns ``(Phi, L)`` where ``L = Phi'(Phi - g Psi)`` for the fixed-point
    method and ``L = Phi - g Psi`` for the Bellman-residual method.  The
    partial-knowledge learner calls this same routine, so both learners solve
    with bitwise-identical coefficient matrices.
    """
    check_data(data)
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (data.m, data.n):
        raise DimensionError(f"gain must have shape {(data.m, data.n)}, got {K.shape}")
    Phi = feature(data.X, data.U)
    if np.linalg.matrix_rank(Phi) < Phi.shape[1]:
        raise ExcitationError(
            f"feature matrix has rank {np.linalg.matrix_rank(Phi)} < {Phi.shape[1]}; "
            "data do not excite every quadratic monomial")
    D = Phi - gamma * policy_features(data.X_next, K)
    if method is EvalMethod.FIXED_POINT:
        return Phi, Phi.T @ D
    return Phi, D


def solve_centered(L, Phi, targets, center, method, ridge=DEFAULT_RIDGE):
    """Ridge-regularized solve pulling toward ``center``.

    Fixed point: ``h = c + lstsq(L + sI, Phi' y - L c)`` with
    ``s = ridge * |tr L| / d``.  Bellman residual: least squares on the rows
    ``L h = y`` augmented with ``sqrt(s) (h - c) = 0``, ``s = ridge * tr(L'L) / d``.
    """
    d = L.shape[1]
    center = np.asarray(center, dtype=float)
    if method is EvalMethod.FIXED_POINT:
        s = ridge * abs(np.trace(L)) / d
        rhs = Phi.T @ targets - L @ center
        A = L + s * np.eye(d)
    else:
        s = ridge * float(np.sum(L * L)) / d
        rhs = np.concatenate([targets - L @ center, np.zeros(d)])
        A = np.vstack([L, np.sqrt(s) * np.eye(d)])
    try:
        delta, _, rank, _ = np.linalg.lstsq(A, rhs, rcond=None)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"least-squares solve failed: {exc}") from exc
    if rank < d:
        raise ExcitationError(f"coefficient matrix has rank {rank} < {d} even after ridge repair")
    h = center + delta
    if not np.all(np.isfinite(h)):
        raise NumericalError("least-squares solution is not finite")
    return h


def evaluate_policy(data, K, cost, method=EvalMethod.FIXED_POINT, ridge=DEFAULT_RIDGE):
    """Estimate the Q-matrix ``H_K`` of ``u = -Kx`` from transitions.

    Raises :class:`ExcitationError` when the data cannot identify every entry
    of ``H`` and :class:`DataError` on non-finite data.
    """
    method = EvalMethod.parse(method)
    Phi, L = assemble_lhs(data, K, cost.gamma, method)
    h = solve_centered(L, Phi, data.r, zero_value_center(cost), method, ridge)
    return vec_to_mat(h, data.n + data.m)


def policy_improve(H, n, require_pd=False):
    """Greedy gain ``K = H22^-1 H21`` for the law ``u = -Kx``.

    ``n`` is the state dimension, so ``H22`` is the trailing ``m x m`` block.
    A singular ``H22`` always raises :class:`ImprovementError`.  An indefinite
    one only raises with ``require_pd``; otherwise the stationary point is
    returned.  Early batches evaluating a gain with unbounded cost can leave a
    huge coefficient of arbitrary sign on an unidentifiable direction, and the
    stationary point does not depend on that sign.
    """
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1] or not 0 < n < H.shape[0]:
        raise DimensionError(f"cannot split H of shape {H.shape} with n={n}")
    _, _, H21, H22 = h_blocks(H, n)
    if not (np.all(np.isfinite(H22)) and np.all(np.isfinite(H21))):
        raise ImprovementError("Q-matrix has non-finite entries")
    if np.linalg.cond(H22) > 1.0 / np.finfo(float).eps:
        raise ImprovementError("H22 is singular to working precision")
    if require_pd and np.linalg.eigvalsh(0.5 * (H22 + H22.T)).min() <= 0.0:
        raise ImprovementError("H22 is not positive definite; greedy step undefined")
    return np.linalg.solve(H22, H21)


def _report_cost(sys, cost, K, x0):
    W = sys.W if cost.gamma < 1.0 else None
    x0_cov = None if x0 is None else x0.covariance(sys.n)
    return policy_cost(sys.A, sys.B, K, cost, W=W, x0_cov=x0_cov)


def run_policy_iteration(sys, cost, config, noise, step, *, seed, n_rollouts, horizon,
                         x0=None, K0=None, algorithm="lspi"):
    """Outer data-collection loop around ``config.inner_iters`` calls of ``step``.

    ``step(data, K)`` returns ``(K_new, InnerStep)``.  A step that raises keeps
    the previous gain, flags the iteration as failed and ends its inner loop.
    ``rho`` and ``cost`` are measured on the true plant for reporting only.
    """
    K = np.zeros((sys.m, sys.n)) if K0 is None else np.array(K0, dtype=float).reshape(sys.m, sys.n)
    record = RunRecord(algorithm=algorithm, seed=seed, K0=K.copy())
    for it in range(1, config.outer_iters + 1):
        t0 = time.perf_counter()
        failed, error, steps = False, None, []
        try:
            data = collect(sys, cost, K, noise, n_rollouts, horizon, x0=x0, seed=seed, iteration=it)
        except ExplosionError as exc:
            failed, error = True, f"{type(exc).__name__}: {exc}"
        else:
            for _ in range(config.inner_iters):
                try:
                    with np.errstate(all="ignore"):
                        K_new, info = step(data, K)
                except (PLSPIError, np.linalg.LinAlgError) as exc:
                    failed, error = True, f"{type(exc).__name__}: {exc}"
                    break
                K = K_new
                steps.append(info)
        record.iterations.append(IterationRecord(
            iteration=it,
            K=K.copy(),
            rho=spectral_radius(sys.A - sys.B @ K),
            cost=_report_cost(sys, cost, K, x0),
            failed=failed,
            error=error,
            wall_clock=time.perf_counter() - t0,
            steps=tuple(steps),
        ))
    return record


def lspi_run(sys, cost, config, noise=None, *, seed=0, n_rollouts=30, horizon=20, x0=None, K0=None,
             algorithm=None):
    """Plain LSPI; ``inner_iters = 5`` gives LSPI-v1 and ``inner_iters = 1`` LSPI-v2."""
    noise = NoiseSpec() if noise is None else noise
    n = sys.n

    def step(data, K):
        H = evaluate_policy(data, K, cost, config.eval_method, config.ridge)
        K_new = policy_improve(H, n, config.require_pd)
        return K_new, InnerStep(K=K_new)

    name = algorithm or ("lspi-v1" if config.inner_iters > 1 else "lspi-v2")
    return run_policy_iteration(sys, cost, config, noise, step, seed=seed, n_rollouts=n_rollouts,
                                horizon=horizon, x0=x0, K0=K0, algorithm=name)
