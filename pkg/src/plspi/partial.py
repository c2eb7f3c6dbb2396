"""Least-squares policy iteration that exploits a partially known model.

The learner knows ``(A1, B1)``: the trusted entries of the plant, with every
unknown entry replaced by a plug-in value.  For a gain ``K1`` that stabilizes
this sub-model, its Q-matrix ``H_K1`` is computed offline and only the
correction ``H_K2 = H_K - H_K1`` is fitted from data.

Right-hand side
---------------
Let ``x~`` be the sub-model's prediction of the next state and
``psi~ = feature(x~, -K1 x~)``.  The correction satisfies

    Phi'(Phi - g Psi) h2 = g Phi'(Psi - Psi~) h1,

which the solver evaluates as ``Phi' r~ - L h1`` with the sub-model reward
``r~ = phi' h1 - g psi~' h1``.  Solving around the center ``h1`` with the
routine shared by plain LSPI makes the zero-prior case reproduce LSPI bit for
bit: then ``H_K1 = blockdiag(Q, R)``, ``x~ = 0`` and ``r~`` is exactly the
stage cost.

By default ``x~ = A1 x + B1 u`` uses the *executed* input, so the sub-model
Bellman identity holds row by row.  ``virtual_action="policy"`` selects
``x~ = (A1 - B1 K1) x`` instead, which drops the exploration noise and biases
``H_K2`` whenever ``B1 != 0``.
"""

from dataclasses import dataclass

import numpy as np

from plspi.env import NoiseSpec
from plspi.exceptions import (
    DataError,
    DimensionError,
    DivergenceError,
    InstabilityError,
    PriorError,
    ConditioningError,
)
from plspi.lqr import (
    STABILITY_MARGIN,
    assemble_h,
    h_blocks,
    optimal_gain,
    solve_dare,
    solve_policy_lyapunov,
    spectral_radius,
)
from plspi.lspi import (
    EvalMethod,
    LspiConfig,
    assemble_lhs,
    policy_features,
    policy_improve,
    run_policy_iteration,
    solve_centered,
)
from plspi.quadform import bilinear_form, mat_to_vec, quad_form, vec_to_mat
from plspi.records import InnerStep

UNKNOWN = "?"
VIRTUAL_ACTIONS = ("executed", "policy")


@dataclass(frozen=True)
class PartialModel:
    """Known part of the plant.  Masks are ``True`` where the entry is trusted."""

    A1: np.ndarray
    B1: np.ndarray
    known_mask_A: np.ndarray = None
    known_mask_B: np.ndarray = None

    def __post_init__(self):
        A1 = np.atleast_2d(np.asarray(self.A1, dtype=float))
        B1 = np.asarray(self.B1, dtype=float)
        if B1.ndim == 1:
            B1 = B1.reshape(-1, 1)
        if A1.shape[0] != A1.shape[1] or B1.shape[0] != A1.shape[0]:
            raise DimensionError(f"inconsistent prior shapes A1 {A1.shape}, B1 {B1.shape}")
        mA = np.ones(A1.shape, bool) if self.known_mask_A is None else np.asarray(self.known_mask_A, bool)
        mB = np.ones(B1.shape, bool) if self.known_mask_B is None else np.asarray(self.known_mask_B, bool)
        if mA.shape != A1.shape or mB.shape != B1.shape:
            raise DimensionError("mask shapes must match A1 and B1")
        if not (np.all(np.isfinite(A1)) and np.all(np.isfinite(B1))):
            raise PriorError("prior matrices must be finite")
        for name, v in (("A1", A1), ("B1", B1), ("known_mask_A", mA), ("known_mask_B", mB)):
            object.__setattr__(self, name, v)

    @classmethod
    def from_tokens(cls, A_rows, B_rows, plug_A=None, plug_B=None):
        """Build from matrices whose unknown entries are the string ``"?"``.

        Unknown entries take the matching entry of ``plug_A``/``plug_B`` or 0.
        """
        A1, mA = _parse_tokens(A_rows, plug_A, "A1")
        B1, mB = _parse_tokens(B_rows, plug_B, "B1")
        return cls(A1, B1, mA, mB)

    @classmethod
    def zero(cls, n, m):
        return cls(np.zeros((n, n)), np.zeros((n, m)), np.zeros((n, n), bool), np.zeros((n, m), bool))

    @property
    def n(self):
        return self.A1.shape[0]

    @property
    def m(self):
        return self.B1.shape[1]

    @property
    def complete(self):
        return bool(self.known_mask_A.all() and self.known_mask_B.all())

    def tokens(self):
        """Inverse of :meth:`from_tokens` for plug-in values of 0."""
        def rows(M, mask):
            return [[float(v) if k else UNKNOWN for v, k in zip(r, mr)] for r, mr in zip(M, mask)]
        return rows(self.A1, self.known_mask_A), rows(self.B1, self.known_mask_B)


def _parse_tokens(rows, plug, name):
    rows = [list(r) if isinstance(r, (list, tuple, np.ndarray)) else [r] for r in rows]
    if not rows or len({len(r) for r in rows}) != 1:
        raise PriorError(f"{name} must be a non-empty rectangular array of rows")
    shape = (len(rows), len(rows[0]))
    plug = np.zeros(shape) if plug is None else np.asarray(plug, dtype=float).reshape(shape)
    M = np.empty(shape)
    mask = np.ones(shape, bool)
    for i, r in enumerate(rows):
        for j, v in enumerate(r):
            if isinstance(v, str):
                if v.strip() != UNKNOWN:
                    raise PriorError(f"{name}[{i}][{j}]: only numbers or '?' are allowed, got {v!r}")
                M[i, j], mask[i, j] = plug[i, j], False
            else:
                M[i, j] = float(v)
    return M, mask


@dataclass(frozen=True)
class SubModelSolution:
    K1: np.ndarray
    P_K1: np.ndarray
    H_K1: np.ndarray
    used_fallback: bool


def sub_optimal_gain(pm, cost):
    """Riccati-optimal gain of the sub-model ``(A1, B1)``.

    A zero sub-model yields ``K = 0``.  Raises :class:`PriorError` when the
    sub-model cannot be stabilized.
    """
    try:
        P = solve_dare(pm.A1, pm.B1, cost)
        return optimal_gain(pm.A1, pm.B1, cost, P)
    except (DivergenceError, ConditioningError) as exc:
        raise PriorError(f"sub-model has no stabilizing Riccati solution: {exc}") from exc


def sub_model_stable(pm, K):
    # Undiscounted test: the fallback must fire whenever A1 - B1 K is unstable.
    return spectral_radius(pm.A1 - pm.B1 @ K) < 1.0 - STABILITY_MARGIN


def choose_k1(pm, K, cost, k1_star=None):
    """``(K, False)`` if ``A1 - B1 K`` is stable, else ``(K1*, True)``.

    ``k1_star`` may be passed in to skip recomputing the sub-model gain.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if sub_model_stable(pm, K):
        return K, False
    return (sub_optimal_gain(pm, cost) if k1_star is None else k1_star), True


def sub_solution(pm, K1, cost, used_fallback=False):
    try:
        P = solve_policy_lyapunov(pm.A1, pm.B1, K1, cost)
    except InstabilityError as exc:
        raise PriorError(f"K1 does not stabilize the sub-model: {exc}") from exc
    K1 = np.atleast_2d(np.asarray(K1, dtype=float))
    return SubModelSolution(K1=K1.copy(), P_K1=P, H_K1=assemble_h(pm.A1, pm.B1, cost, P),
                            used_fallback=bool(used_fallback))


def virtual_next(pm, K1, x, u=None):
    """Sub-model next state: ``A1 x + B1 u``, or ``(A1 - B1 K1) x`` when ``u`` is None."""
    x = np.asarray(x, dtype=float)
    if u is None:
        u = -x @ np.atleast_2d(K1).T
    u = np.asarray(u, dtype=float)
    if x.ndim == 1:
        return pm.A1 @ x + pm.B1 @ np.atleast_1d(u)
    return x @ pm.A1.T + u @ pm.B1.T


def _virtual_states(pm, sub, data, virtual_action):
    if virtual_action not in VIRTUAL_ACTIONS:
        raise ValueError(f"virtual_action must be one of {VIRTUAL_ACTIONS}, got {virtual_action!r}")
    U = data.U if virtual_action == "executed" else None
    Xv = virtual_next(pm, sub.K1, data.X, U)
    if not np.all(np.isfinite(Xv)):
        raise DataError("virtual next states are not finite")
    return Xv


def sub_model_reward(sub, X, U, Xv, gamma):
    """``phi' h1 - g psi~' h1`` evaluated with block quadratic forms."""
    n = X.shape[1]
    H11, H12, _, H22 = (np.ascontiguousarray(b) for b in h_blocks(sub.H_K1, n))
    q = quad_form(H11, X) + 2.0 * bilinear_form(X, H12, U) + quad_form(H22, U)
    Zv = np.concatenate([Xv, -Xv @ sub.K1.T], axis=1)
    return q - gamma * quad_form(sub.H_K1, Zv)


def difference_equation(data, K, sub, pm, cost, virtual_action="executed"):
    """The correction equation ``(L, rhs)`` exactly as written, for inspection.

    ``L = Phi'(Phi - g Psi)`` and ``rhs = g Phi'(Psi - Psi~) h1``.
    """
    Phi, L = assemble_lhs(data, K, cost.gamma, EvalMethod.FIXED_POINT)
    Xv = _virtual_states(pm, sub, data, virtual_action)
    h1 = mat_to_vec(sub.H_K1)
    Psi = policy_features(data.X_next, K)
    Psi_v = policy_features(Xv, sub.K1)
    return L, cost.gamma * Phi.T @ ((Psi - Psi_v) @ h1)


def partial_evaluation(data, K, sub, pm, cost, method=EvalMethod.FIXED_POINT, ridge=1e-8,
                       virtual_action="executed", use_complete_prior=True):
    """Return ``(H_K, H_K2)``.

    With a complete prior and ``K1 = K`` the unknown part of the plant is empty,
    so ``H_K2 = 0`` and no data are used (when ``use_complete_prior``).
    """
    method = EvalMethod.parse(method)
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if use_complete_prior and pm.complete and np.array_equal(sub.K1, K):
        return sub.H_K1.copy(), np.zeros_like(sub.H_K1)
    Phi, L = assemble_lhs(data, K, cost.gamma, method)
    Xv = _virtual_states(pm, sub, data, virtual_action)
    targets = sub_model_reward(sub, data.X, data.U, Xv, cost.gamma)
    h = solve_centered(L, Phi, targets, mat_to_vec(sub.H_K1), method, ridge)
    H = vec_to_mat(h, data.n + data.m)
    return H, H - sub.H_K1


def evaluate_policy_partial(data, K, sub, pm, cost, method=EvalMethod.FIXED_POINT, ridge=1e-8,
                            virtual_action="executed", use_complete_prior=True):
    """``H_K = H_K1 + H_K2`` with ``H_K2`` fitted from ``data``."""
    return partial_evaluation(data, K, sub, pm, cost, method, ridge, virtual_action, use_complete_prior)[0]


def plspi_run(sys, cost, pm, config, noise=None, *, seed=0, n_rollouts=30, horizon=20, x0=None,
              K0=None, init="zero", fixed_k1=False, virtual_action="executed",
              use_complete_prior=True, algorithm="plspi"):
    """Partial-knowledge LSPI.

    Each inner step picks ``K1`` (the current gain if it stabilizes the
    sub-model, else the sub-model optimum; always the optimum when
    ``fixed_k1``), solves the sub-model offline, fits ``H_K2`` and improves.
    ``init="prior"`` starts from the sub-model optimum instead of ``K0``/zero.
    """
    noise = NoiseSpec() if noise is None else noise
    if (pm.n, pm.m) != (sys.n, sys.m):
        raise DimensionError(f"prior is {pm.n}x{pm.m} but the plant is {sys.n}x{sys.m}")
    if init not in ("zero", "prior"):
        raise ValueError(f"init must be 'zero' or 'prior', got {init!r}")
    cache = {}

    def k1_star():
        if "K" not in cache:
            cache["K"] = sub_optimal_gain(pm, cost)
        return cache["K"]

    if init == "prior" and K0 is None:
        K0 = k1_star()

    def step(data, K):
        if fixed_k1:
            K1, fb = k1_star(), True
        else:
            K1, fb = choose_k1(pm, K, cost, k1_star() if not sub_model_stable(pm, K) else None)
        sub = sub_solution(pm, K1, cost, used_fallback=fb)
        H, H2 = partial_evaluation(data, K, sub, pm, cost, config.eval_method, config.ridge,
                                   virtual_action, use_complete_prior)
        K_new = policy_improve(H, sys.n, config.require_pd)
        return K_new, InnerStep(K=K_new, k1=sub.K1, fallback=fb, hk2_norm=float(np.linalg.norm(H2)))

    return run_policy_iteration(sys, cost, config, noise, step, seed=seed, n_rollouts=n_rollouts,
                                horizon=horizon, x0=x0, K0=K0, algorithm=algorithm)


__all__ = [
    "PartialModel", "SubModelSolution", "sub_optimal_gain", "choose_k1", "sub_solution",
    "virtual_next", "sub_model_reward", "difference_equation", "partial_evaluation",
    "evaluate_policy_partial", "plspi_run", "LspiConfig",
]
