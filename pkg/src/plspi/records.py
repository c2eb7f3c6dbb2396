"""Per-run learning traces shared by the learners and the harness."""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class InnerStep:
    """One evaluate/improve step.  ``k1`` and ``fallback`` are only set by PLSPI."""

    K: np.ndarray
    k1: np.ndarray = None
    fallback: bool = None
    hk2_norm: float = None


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    K: np.ndarray
    rho: float
    cost: float
    failed: bool = False
    error: str = None
    wall_clock: float = 0.0
    steps: tuple = ()

    @property
    def fallback(self):
        """Fallback flag of the first inner step (the gain that collected the batch)."""
        if not self.steps or self.steps[0].fallback is None:
            return None
        return self.steps[0].fallback


@dataclass
class RunRecord:
    algorithm: str
    seed: int
    K0: np.ndarray
    iterations: list = field(default_factory=list)
    error: str = None

    def __len__(self):
        return len(self.iterations)

    @property
    def gains(self):
        return [it.K for it in self.iterations]

    @property
    def rho(self):
        return np.array([it.rho for it in self.iterations])

    @property
    def cost(self):
        return np.array([it.cost for it in self.iterations])

    @property
    def fallback(self):
        return [it.fallback for it in self.iterations]

    @property
    def failed(self):
        return [it.failed for it in self.iterations]

    @property
    def final_gain(self):
        return self.iterations[-1].K if self.iterations else self.K0

    def convergence_iteration(self, K_star, tol=1e-2):
        """First 1-based iteration with ``max|K - K*| < tol``, or ``None``."""
        K_star = np.asarray(K_star, dtype=float)
        for it in self.iterations:
            if np.all(np.isfinite(it.K)) and np.max(np.abs(it.K - K_star)) < tol:
                return it.iteration
        return None
