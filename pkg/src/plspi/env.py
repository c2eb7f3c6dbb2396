"""Stochastic linear plant and exploratory rollouts.

Random streams
--------------
Every episode owns its own generator, ``PCG64`` seeded through
``SeedSequence([seed, iteration, episode])`` (see :func:`episode_rng`).
Gaussian draws use NumPy's ziggurat sampler.  Within an episode the draw order
is: initial state, then per step the exploration noise followed by the process
noise.  Both noises are always drawn, even at zero scale, so changing a noise
level never shifts the other streams.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from plspi.exceptions import DimensionError, DomainError, ExplosionError
from plspi.quadform import quad_form

RNG_ALGORITHM = "numpy PCG64 via SeedSequence([seed, iteration, episode]); ziggurat normals"


def episode_rng(seed, iteration, episode):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(iteration), int(episode)])))


@dataclass(frozen=True)
class LinearSystem:
    """``x+ = A x + B u + xi`` with ``xi ~ N(0, noise_std^2 I)``."""

    A: np.ndarray
    B: np.ndarray
    noise_std: float = 0.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
            raise DimensionError(f"inconsistent plant shapes A {A.shape}, B {B.shape}")
        if self.noise_std < 0:
            raise DomainError("noise_std must be non-negative")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "noise_std", float(self.noise_std))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def W(self):
        return self.noise_std ** 2 * np.eye(self.n)


@dataclass(frozen=True)
class NoiseSpec:
    exploration_std: float = float(np.sqrt(0.1))

    def __post_init__(self):
        if self.exploration_std < 0:
            raise DomainError("exploration_std must be non-negative")


@dataclass(frozen=True)
class InitialState:
    """Initial-state distribution: a fixed point, or ``N(mean, cov)``.

    The default is ``N(0, I)`` in whatever dimension is requested.
    """

    kind: str = "gaussian"
    mean: tuple = None
    cov: tuple = None
    point: tuple = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "fixed"):
            raise DomainError(f"unknown initial-state kind {self.kind!r}")
        if self.kind == "fixed" and self.point is None:
            raise DomainError("a fixed initial state needs a point")

    @classmethod
    def fixed(cls, point):
        return cls(kind="fixed", point=tuple(float(v) for v in np.ravel(point)))

    def covariance(self, n):
        if self.kind == "fixed":
            p = np.asarray(self.point, dtype=float)
            return np.outer(p, p)
        cov = np.eye(n) if self.cov is None else np.asarray(self.cov, dtype=float)
        mean = np.zeros(n) if self.mean is None else np.asarray(self.mean, dtype=float)
        return cov + np.outer(mean, mean)

    def sample(self, rng, n):
        if self.kind == "fixed":
            x = np.asarray(self.point, dtype=float)
            if x.shape != (n,):
                raise DimensionError(f"fixed initial state has shape {x.shape}, plant needs ({n},)")
            return x.copy()
        z = rng.standard_normal(n)
        if self.cov is not None:
            z = np.linalg.cholesky(np.asarray(self.cov, dtype=float)) @ z
        if self.mean is not None:
            z = z + np.asarray(self.mean, dtype=float)
        return z


@dataclass(frozen=True)
class Transition:
    x: np.ndarray
    u: np.ndarray
    r: float
    x_next: np.ndarray


@dataclass
class Dataset:
    """Transitions stored column-wise; ``len(ds) == n_rollouts * horizon``."""

    X: np.ndarray
    U: np.ndarray
    r: np.ndarray
    X_next: np.ndarray
    episode: np.ndarray
    t: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.X.shape[0]

    def __getitem__(self, i):
        return Transition(self.X[i], self.U[i], float(self.r[i]), self.X_next[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def n(self):
        return self.X.shape[1]

    @property
    def m(self):
        return self.U.shape[1]

    def is_finite(self):
        return all(np.all(np.isfinite(a)) for a in (self.X, self.U, self.r, self.X_next))

    def to_csv(self, path):
        n, m = self.n, self.m
        header = (["episode", "t"] + [f"x{i}" for i in range(n)] + [f"u{j}" for j in range(m)]
                  + ["r"] + [f"x_next{i}" for i in range(n)])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for k in range(len(self)):
                w.writerow([int(self.episode[k]), int(self.t[k])]
                           + [repr(float(v)) for v in self.X[k]]
                           + [repr(float(v)) for v in self.U[k]]
                           + [repr(float(self.r[k]))]
                           + [repr(float(v)) for v in self.X_next[k]])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        n = sum(1 for h in header if h.startswith("x") and not h.startswith("x_next"))
        m = sum(1 for h in header if h.startswith("u"))
        data = np.array([[float(v) for v in row] for row in body]).reshape(len(body), len(header))
        col = 2
        X = data[:, col:col + n]; col += n
        U = data[:, col:col + m]; col += m
        r = data[:, col]; col += 1
        X_next = data[:, col:col + n]
        return cls(X, U, r, X_next, data[:, 0].astype(int), data[:, 1].astype(int))


def stage_cost(cost, X, U):
    """``x'Qx + u'Ru`` for each row of ``X`` and ``U``."""
    return quad_form(cost.Q, X) + quad_form(cost.R, U)


def step(sys, x, u, rng):
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if x.shape != (sys.n,) or u.shape != (sys.m,):
        raise DimensionError(f"step expects x {(sys.n,)} and u {(sys.m,)}, got {x.shape} and {u.shape}")
    return sys.A @ x + sys.B @ u + sys.noise_std * rng.standard_normal(sys.n)


def rollout(sys, K, noise, horizon, x0, rng):
    """One episode under ``u = -Kx + eps``; returns ``(X, U, X_next)``."""
    n, m = sys.n, sys.m
    K = np.atleast_2d(np.asarray(K, dtype=float))
    X = np.empty((horizon, n))
    U = np.empty((horizon, m))
    X_next = np.empty((horizon, n))
    x = x0.sample(rng, n)
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(horizon):
            u = -K @ x + noise.exploration_std * rng.standard_normal(m)
            x_next = sys.A @ x + sys.B @ u + sys.noise_std * rng.standard_normal(n)
            X[t], U[t], X_next[t] = x, u, x_next
            x = x_next
    return X, U, X_next


def collect(sys, cost, K, noise, n_rollouts, horizon, x0=None, seed=0, iteration=0):
    """Run ``n_rollouts`` episodes of ``horizon`` steps and stack the transitions.

    Episode ``e`` draws from :func:`episode_rng` ``(seed, iteration, e)``, so the
    result is bit-identical for identical arguments.  Raises
    :class:`ExplosionError` if any episode overflows to a non-finite state.
    """
    if n_rollouts < 1 or horizon < 1:
        raise DomainError("n_rollouts and horizon must both be at least 1")
    x0 = InitialState() if x0 is None else x0
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (sys.m, sys.n):
        raise DimensionError(f"gain must have shape {(sys.m, sys.n)}, got {K.shape}")
    parts = []
    for e in range(n_rollouts):
        X, U, X_next = rollout(sys, K, noise, horizon, x0, episode_rng(seed, iteration, e))
        if not (np.all(np.isfinite(X_next)) and np.all(np.isfinite(U))):
            raise ExplosionError(f"episode {e} overflowed to a non-finite state", episode=e)
        parts.append((X, U, X_next))
    X = np.concatenate([p[0] for p in parts])
    U = np.concatenate([p[1] for p in parts])
    X_next = np.concatenate([p[2] for p in parts])
    with np.errstate(over="ignore"):
        r = stage_cost(cost, X, U)
    if not np.all(np.isfinite(r)):
        bad = int(np.flatnonzero(~np.isfinite(r))[0]) // horizon
        raise ExplosionError(f"stage cost overflowed in episode {bad}", episode=bad)
    episode = np.repeat(np.arange(n_rollouts), horizon)
    t = np.tile(np.arange(horizon), n_rollouts)
    meta = {"n_rollouts": n_rollouts, "horizon": horizon, "seed": seed, "iteration": iteration,
            "rng": RNG_ALGORITHM}
    return Dataset(X, U, r, X_next, episode, t, meta)
