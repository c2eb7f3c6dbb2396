"""Half-vectorization of quadratic forms.

For a vector ``q`` of length ``n`` the monomial vector ``overbar_vec(q)`` lists
``q_i q_j`` for ``i <= j`` in row-major upper-triangular order, and for a
symmetric ``Q`` the vector ``mat_to_vec(Q)`` lists the matching coefficients so
that ``q @ Q @ q == overbar_vec(q) @ mat_to_vec(Q)``.  Off-diagonal
coefficients are therefore stored doubled.
"""

from dataclasses import dataclass, field

import numpy as np

from plspi.exceptions import DimensionError


def vec_length(n):
    return n * (n + 1) // 2


def _dim_from_length(length):
    n = int((np.sqrt(8 * length + 1) - 1) // 2)
    if vec_length(n) != length:
        raise DimensionError(f"length {length} is not a triangular number n(n+1)/2")
    return n


def overbar_vec(q):
    """Monomial vector ``[q1^2, q1 q2, ..., q1 qn, q2^2, ..., qn^2]``.

    Accepts a single vector of shape ``(n,)`` or a batch of shape ``(k, n)``,
    in which case one monomial vector is returned per row.
    """
    q = np.asarray(q, dtype=float)
    if q.ndim not in (1, 2) or q.shape[-1] == 0:
        raise DimensionError(f"expected a non-empty vector or batch of vectors, got shape {q.shape}")
    iu, ju = np.triu_indices(q.shape[-1])
    return q[..., iu] * q[..., ju]


def mat_to_vec(M):
    # Input is symmetrized first, so only the symmetric part is encoded.
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {M.shape}")
    S = 0.5 * (M + M.T)
    iu, ju = np.triu_indices(M.shape[0])
    return np.where(iu == ju, 1.0, 2.0) * S[iu, ju]


def vec_to_mat(v, n=None):
    """Inverse of :func:`mat_to_vec`; off-diagonal entries are halved on placement."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise DimensionError(f"expected a 1-D vector, got shape {v.shape}")
    if n is None:
        n = _dim_from_length(v.size)
    elif v.size != vec_length(n):
        raise DimensionError(f"vector of length {v.size} does not match n={n} (need {vec_length(n)})")
    iu, ju = np.triu_indices(n)
    vals = np.where(iu == ju, v, 0.5 * v)
    M = np.zeros((n, n))
    M[iu, ju] = vals
    M[ju, iu] = vals
    return M


def quad_form(M, X):
    """``x' M x`` for every row ``x`` of ``X``.

    Every stage cost and model-based reward in the package goes through this
    one routine, so identical inputs give bit-identical outputs.
    """
    return np.einsum("...i,ij,...j->...", np.asarray(X, dtype=float), np.asarray(M, dtype=float),
                     np.asarray(X, dtype=float))


def bilinear_form(X, M, Y):
    """``x' M y`` row by row."""
    return np.einsum("...i,ij,...j->...", np.asarray(X, dtype=float), np.asarray(M, dtype=float),
                     np.asarray(Y, dtype=float))


@dataclass(frozen=True)
class SymQuadratic:
    """A symmetric matrix together with its half-vectorized coefficients."""

    matrix: np.ndarray
    vec: np.ndarray = field(repr=False)

    @classmethod
    def from_matrix(cls, M):
        M = np.asarray(M, dtype=float)
        v = mat_to_vec(M)
        return cls(vec_to_mat(v), v)

    @classmethod
    def from_vec(cls, v, n=None):
        M = vec_to_mat(v, n)
        return cls(M, mat_to_vec(M))

    @property
    def n(self):
        return self.matrix.shape[0]

    def __call__(self, q):
        """Evaluate the quadratic form at ``q`` (or at each row of a batch)."""
        return overbar_vec(q) @ self.vec
