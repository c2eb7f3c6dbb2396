"""Model-based LQR machinery for the discounted problem.

All formulas use the Bellman-consistent placement of the discount factor,

    P = Q + g A'PA - g^2 A'PB (R + g B'PB)^-1 B'PA,
    K = (R + g B'PB)^-1 g B'PA,

which is the undiscounted problem on ``(sqrt(g) A, sqrt(g) B)``.  Gains act as
``u = -K x`` throughout.
"""

from dataclasses import dataclass

import numpy as np

from plspi.exceptions import (
    ConditioningError,
    DimensionError,
    DivergenceError,
    DomainError,
    InstabilityError,
    NumericalError,
)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000
STABILITY_MARGIN = 1e-9


@dataclass(frozen=True)
class CostSpec:
    """Quadratic stage cost ``x'Qx + u'Ru`` and discount factor ``gamma``."""

    Q: np.ndarray
    R: np.ndarray
    gamma: float = 1.0

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if Q.shape[0] != Q.shape[1] or R.shape[0] != R.shape[1]:
            raise DimensionError(f"Q and R must be square, got {Q.shape} and {R.shape}")
        if not (np.allclose(Q, Q.T) and np.allclose(R, R.T)):
            raise DomainError("Q and R must be symmetric")
        Q = 0.5 * (Q + Q.T)
        R = 0.5 * (R + R.T)
        if np.linalg.eigvalsh(Q).min() < -1e-12 * max(1.0, np.abs(Q).max()):
            raise DomainError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(R).min() <= 0.0:
            raise DomainError("R must be positive definite")
        if not 0.0 < self.gamma <= 1.0:
            raise DomainError(f"gamma must lie in (0, 1], got {self.gamma}")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n(self):
        return self.Q.shape[0]

    @property
    def m(self):
        return self.R.shape[0]


def _check_dims(A, B, cost):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    n, m = cost.n, cost.m
    if A.shape != (n, n) or B.shape != (n, m):
        raise DimensionError(f"expected A {(n, n)} and B {(n, m)}, got {A.shape} and {B.shape}")
    return A, B


def spectral_radius(M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise DimensionError(f"spectral radius needs a square matrix, got {M.shape}")
    try:
        return float(np.max(np.abs(np.linalg.eigvals(M)), initial=0.0))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue computation failed: {exc}") from exc


def riccati_residual(A, B, cost, P):
    """Frobenius norm of ``RHS(P) - P`` for the discounted DARE."""
    A, B = _check_dims(A, B, cost)
    return float(np.linalg.norm(_riccati_map(A, B, cost, P) - P))


def _riccati_map(A, B, cost, P):
    g = cost.gamma
    S = cost.R + g * B.T @ P @ B
    F = g * B.T @ P @ A
    out = cost.Q + g * A.T @ P @ A - F.T @ np.linalg.solve(S, F)
    return 0.5 * (out + out.T)


def _dare_fixed_point(A, B, cost, tol, max_iter):
    P = cost.Q.copy()
    for _ in range(max_iter):
        P_next = _riccati_map(A, B, cost, P)
        if not np.all(np.isfinite(P_next)):
            break
        if np.linalg.norm(P_next - P) < tol:
            return P_next
        P = P_next
    raise DivergenceError(f"Riccati recursion did not converge in {max_iter} iterations")


def _dare_doubling(A, B, cost, tol, max_iter):
    # Structure-preserving doubling on the sqrt(gamma)-scaled pair; H_k -> P.
    s = np.sqrt(cost.gamma)
    Ak = s * A
    Bs = s * B
    G = Bs @ np.linalg.solve(cost.R, Bs.T)
    H = cost.Q.copy()
    I = np.eye(A.shape[0])
    with np.errstate(over="ignore", invalid="ignore"):
        return _doubling_loop(Ak, G, H, I, tol, max_iter)


def _doubling_loop(Ak, G, H, I, tol, max_iter):
    for _ in range(min(max_iter, 200)):
        W = I + G @ H
        try:
            WiA = np.linalg.solve(W, Ak)
            WiG = np.linalg.solve(W, G)
        except np.linalg.LinAlgError:
            break
        H_next = H + Ak.T @ H @ WiA
        G = G + Ak @ WiG @ Ak.T
        Ak = Ak @ WiA
        H_next = 0.5 * (H_next + H_next.T)
        G = 0.5 * (G + G.T)
        if not (np.all(np.isfinite(H_next)) and np.all(np.isfinite(Ak)) and np.all(np.isfinite(G))):
            break
        if np.linalg.norm(H_next - H) <= tol * max(1.0, np.linalg.norm(H_next)):
            return H_next
        H = H_next
    raise DivergenceError("doubling iteration for the Riccati equation diverged (pair not stabilizable?)")


def solve_dare(A, B, cost, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, method="doubling"):
    """Stabilizing solution of the discounted DARE.

    Parameters
    ----------
    A, B : array_like
        Plant matrices, shapes ``(n, n)`` and ``(n, m)``.
    cost : CostSpec
    tol : float
        Convergence tolerance on successive iterates (Frobenius norm) and on
        the final Riccati residual (relative to ``max(1, ||P||)``).
    method : {"doubling", "fixed_point"}
        ``"fixed_point"`` iterates the Riccati recursion from ``P0 = Q``;
        ``"doubling"`` squares the same recursion and needs only a few dozen
        steps.

    Raises
    ------
    DivergenceError
        If ``(sqrt(gamma) A, sqrt(gamma) B)`` is not stabilizable.
    ConditioningError
        If ``R + gamma B'PB`` is singular at the solution.
    """
    A, B = _check_dims(A, B, cost)
    if tol <= 0:
        raise DomainError("tol must be positive")
    if method == "doubling":
        P = _dare_doubling(A, B, cost, tol, max_iter)
    elif method == "fixed_point":
        P = _dare_fixed_point(A, B, cost, tol, max_iter)
    else:
        raise ValueError(f"unknown DARE method {method!r}")
    _check_invertible(cost.R + cost.gamma * B.T @ P @ B, "R + gamma B'PB")
    with np.errstate(over="ignore", invalid="ignore"):
        # A few plain Riccati sweeps polish doubling round-off.
        for _ in range(3):
            if riccati_residual(A, B, cost, P) <= tol * max(1.0, np.linalg.norm(P)):
                break
            P = _riccati_map(A, B, cost, P)
        res = riccati_residual(A, B, cost, P)
    if not res <= tol * max(1.0, np.linalg.norm(P)):
        raise DivergenceError(f"Riccati residual {res:.3e} above tolerance {tol:.1e}")
    K = optimal_gain(A, B, cost, P)
    radius = np.sqrt(cost.gamma) * spectral_radius(A - B @ K)
    if radius >= 1.0:
        raise DivergenceError(f"Riccati solution is not stabilizing (scaled closed-loop radius {radius:.6f})")
    return P


def _check_invertible(S, name):
    if S.size and np.linalg.cond(S) > 1.0 / np.finfo(float).eps:
        raise ConditioningError(f"{name} is singular to working precision")


def optimal_gain(A, B, cost, P):
    A, B = _check_dims(A, B, cost)
    g = cost.gamma
    S = cost.R + g * B.T @ P @ B
    _check_invertible(S, "R + gamma B'PB")
    return np.linalg.solve(S, g * B.T @ P @ A)


def closed_loop(A, B, K):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    return A - B @ np.atleast_2d(np.asarray(K, dtype=float))


def is_discounted_stable(A, B, K, gamma):
    return np.sqrt(gamma) * spectral_radius(closed_loop(A, B, K)) < 1.0 - STABILITY_MARGIN


def solve_policy_lyapunov(A, B, K, cost, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Value matrix of the fixed policy ``u = -Kx``.

    Solves ``P = Q + K'RK + gamma (A-BK)' P (A-BK)`` by squared Smith
    iteration.  Raises :class:`InstabilityError` unless
    ``sqrt(gamma) * rho(A - BK) < 1``.
    """
    A, B = _check_dims(A, B, cost)
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (cost.m, cost.n):
        raise DimensionError(f"gain must have shape {(cost.m, cost.n)}, got {K.shape}")
    Acl = A - B @ K
    radius = np.sqrt(cost.gamma) * spectral_radius(Acl)
    if radius >= 1.0 - STABILITY_MARGIN:
        raise InstabilityError(f"sqrt(gamma) * rho(A - BK) = {radius:.6f} >= 1")
    Ak = np.sqrt(cost.gamma) * Acl
    P = cost.Q + K.T @ cost.R @ K
    for _ in range(max_iter):
        P_next = P + Ak.T @ P @ Ak
        Ak = Ak @ Ak
        P_next = 0.5 * (P_next + P_next.T)
        if np.linalg.norm(P_next - P) <= tol * max(1.0, np.linalg.norm(P_next)):
            return P_next
        P = P_next
    raise DivergenceError(f"Lyapunov iteration did not converge in {max_iter} steps")


def assemble_h(A, B, cost, P):
    """Q-function matrix ``H`` with ``Q(x, u) = [x; u]' H [x; u]``."""
    A, B = _check_dims(A, B, cost)
    g = cost.gamma
    H12 = g * A.T @ P @ B
    H = np.block([
        [cost.Q + g * A.T @ P @ A, H12],
        [H12.T, cost.R + g * B.T @ P @ B],
    ])
    return 0.5 * (H + H.T)


def h_blocks(H, n):
    """Split ``H`` into ``(H11, H12, H21, H22)`` with ``H11`` of size ``n``."""
    return H[:n, :n], H[:n, n:], H[n:, :n], H[n:, n:]


def state_value(P, x, W=None, gamma=1.0):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    x = np.asarray(x, dtype=float)
    v = float(x @ P @ x)
    if W is None or not np.any(W):
        return v
    if gamma >= 1.0:
        raise DomainError("the noise offset gamma/(1-gamma) Tr(WP) is undefined at gamma = 1")
    return v + gamma / (1.0 - gamma) * float(np.trace(np.asarray(W) @ P))


def policy_cost(A, B, K, cost, W=None, x0_cov=None):
    """Expected discounted cost of ``u = -Kx`` from ``x0 ~ (0, x0_cov)``.

    ``x0_cov`` defaults to the identity.  Destabilizing gains cost ``inf``.
    """
    x0_cov = np.eye(cost.n) if x0_cov is None else np.atleast_2d(np.asarray(x0_cov, dtype=float))
    try:
        P = solve_policy_lyapunov(A, B, K, cost)
    except InstabilityError:
        return float("inf")
    J = float(np.trace(x0_cov @ P))
    if W is not None and np.any(W):
        if cost.gamma >= 1.0:
            raise DomainError("process noise with gamma = 1 has unbounded expected cost")
        J += cost.gamma / (1.0 - cost.gamma) * float(np.trace(np.atleast_2d(W) @ P))
    return J
