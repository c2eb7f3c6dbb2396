"""Multi-seed experiments: run the learners, aggregate across seeds, write results."""

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from plspi.env import InitialState, LinearSystem, NoiseSpec
from plspi.exceptions import ConfigError, PLSPIError
from plspi.lqr import CostSpec, optimal_gain, policy_cost, solve_dare, spectral_radius
from plspi.lspi import EvalMethod, LspiConfig, lspi_run
from plspi.partial import PartialModel, plspi_run
from plspi.records import IterationRecord, RunRecord

ALGORITHMS = ("lspi-v1", "lspi-v2", "plspi")
CONVERGENCE_TOL = 1e-2


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines an experiment's output.

    ``inner_iters`` applies to LSPI-v1 and PLSPI; LSPI-v2 always uses one
    inner step.  ``init`` chooses PLSPI's starting gain (``"zero"`` or the
    sub-model optimum ``"prior"``); the LSPI variants always start from
    ``K0`` (zero by default).
    """

    plant: LinearSystem
    cost: CostSpec
    prior: PartialModel = None
    name: str = "experiment"
    algorithms: tuple = ALGORITHMS
    seeds: tuple = tuple(range(10))
    n_rollouts: int = 30
    horizon: int = 20
    outer_iters: int = 10
    inner_iters: int = 5
    eval_method: EvalMethod = EvalMethod.FIXED_POINT
    ridge: float = 1e-8
    require_pd: bool = False
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    x0: InitialState = field(default_factory=InitialState)
    K0: np.ndarray = None
    init: str = "zero"
    fixed_k1: bool = False
    virtual_action: str = "executed"
    use_complete_prior: bool = True
    percentiles: tuple = (0.0, 75.0)
    parallel: int = 1

    def __post_init__(self):
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "percentiles", tuple(float(p) for p in self.percentiles))
        object.__setattr__(self, "eval_method", EvalMethod.parse(self.eval_method))
        self.validate()

    def validate(self):
        if not self.algorithms:
            raise ConfigError("at least one algorithm is required")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ConfigError(f"unknown algorithm(s) {bad}; choose from {list(ALGORITHMS)}")
        if len(set(self.algorithms)) != len(self.algorithms):
            raise ConfigError("algorithms must not repeat")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if any(s < 0 for s in self.seeds) or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct non-negative integers")
        if (self.plant.n, self.plant.m) != (self.cost.n, self.cost.m):
            raise ConfigError(f"plant is {self.plant.n}x{self.plant.m} but the cost is {self.cost.n}x{self.cost.m}")
        if "plspi" in self.algorithms and self.prior is None:
            raise ConfigError("plspi needs a [prior] block")
        if self.prior is not None and (self.prior.n, self.prior.m) != (self.plant.n, self.plant.m):
            raise ConfigError("prior dimensions do not match the plant")
        if self.n_rollouts < 1 or self.horizon < 1 or self.outer_iters < 1 or self.inner_iters < 1:
            raise ConfigError("n_rollouts, horizon, outer_iters and inner_iters must be at least 1")
        if self.init not in ("zero", "prior"):
            raise ConfigError(f"init must be 'zero' or 'prior', got {self.init!r}")
        if self.virtual_action not in ("executed", "policy"):
            raise ConfigError(f"virtual_action must be 'executed' or 'policy', got {self.virtual_action!r}")
        lo, hi = self.percentiles
        if not 0.0 <= lo <= 50.0 <= hi <= 100.0:
            raise ConfigError("percentiles must satisfy 0 <= low <= 50 <= high <= 100")
        if self.parallel < 1:
            raise ConfigError("parallel must be at least 1")
        if self.K0 is not None and np.shape(self.K0) != (self.plant.m, self.plant.n):
            raise ConfigError(f"K0 must have shape {(self.plant.m, self.plant.n)}")

    def lspi_config(self, algorithm):
        inner = 1 if algorithm == "lspi-v2" else self.inner_iters
        return LspiConfig(self.outer_iters, inner, self.eval_method, self.ridge, self.require_pd)

    def optimal_gain(self):
        return optimal_gain(self.plant.A, self.plant.B, self.cost, solve_dare(self.plant.A, self.plant.B, self.cost))

    def with_overrides(self, **kw):
        return replace(self, **kw)


def _failed_record(cfg, algorithm, seed, exc):
    K = np.zeros((cfg.plant.m, cfg.plant.n)) if cfg.K0 is None else np.asarray(cfg.K0, dtype=float)
    rho = spectral_radius(cfg.plant.A - cfg.plant.B @ K)
    J = policy_cost(cfg.plant.A, cfg.plant.B, K, cfg.cost)
    msg = f"{type(exc).__name__}: {exc}"
    its = [IterationRecord(iteration=i, K=K.copy(), rho=rho, cost=J, failed=True, error=msg)
           for i in range(1, cfg.outer_iters + 1)]
    return RunRecord(algorithm=algorithm, seed=seed, K0=K.copy(), iterations=its, error=msg)


def run_one(cfg, algorithm, seed):
    """One learner on one seed.  Errors are captured in the record, never raised."""
    common = dict(seed=seed, n_rollouts=cfg.n_rollouts, horizon=cfg.horizon, x0=cfg.x0)
    try:
        if algorithm == "plspi":
            return plspi_run(cfg.plant, cfg.cost, cfg.prior, cfg.lspi_config(algorithm), cfg.noise,
                             K0=cfg.K0, init=cfg.init, fixed_k1=cfg.fixed_k1,
                             virtual_action=cfg.virtual_action,
                             use_complete_prior=cfg.use_complete_prior, algorithm=algorithm, **common)
        return lspi_run(cfg.plant, cfg.cost, cfg.lspi_config(algorithm), cfg.noise, K0=cfg.K0,
                        algorithm=algorithm, **common)
    except (PLSPIError, np.linalg.LinAlgError, ValueError) as exc:
        return _failed_record(cfg, algorithm, seed, exc)


def run_experiment(cfg, parallel=None):
    """One :class:`RunRecord` per (algorithm, seed), ordered as in the config."""
    cfg.validate()
    jobs = [(a, s) for a in cfg.algorithms for s in cfg.seeds]
    workers = cfg.parallel if parallel is None else int(parallel)
    if workers <= 1:
        return [run_one(cfg, a, s) for a, s in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: run_one(cfg, *job), jobs))


@dataclass(frozen=True)
class AggregateCurve:
    """Across-seed order statistics per iteration (row ``i`` is iteration ``i + 1``)."""

    algorithm: str
    percentiles: tuple
    p_lo: np.ndarray
    median: np.ndarray
    p_hi: np.ndarray
    cost_p_lo: np.ndarray
    cost_median: np.ndarray
    cost_p_hi: np.ndarray
    instability_rate: np.ndarray
    n_runs: int

    @property
    def iterations(self):
        return np.arange(1, len(self.median) + 1)

    @property
    def band_width(self):
        return self.p_hi - self.p_lo

    def crossing_iteration(self, level=1.0):
        """First iteration whose median lies strictly below ``level``, else ``None``."""
        idx = np.flatnonzero(self.median < level)
        return int(idx[0]) + 1 if idx.size else None


def _finite_percentiles(col, qs):
    finite = col[np.isfinite(col)]
    if finite.size == 0:
        return [float("inf")] * len(qs)
    return [float(v) for v in np.percentile(finite, qs)]


def aggregate(records, percentiles=(0.0, 75.0)):
    """Per-algorithm curves.  Percentiles interpolate linearly; infinite costs
    are left out of the cost statistics and counted in ``instability_rate``."""
    lo, hi = percentiles
    groups = {}
    for rec in records:
        groups.setdefault(rec.algorithm, []).append(rec)
    curves = {}
    for alg, recs in groups.items():
        recs = sorted(recs, key=lambda r: r.seed)
        rho = np.array([r.rho for r in recs])
        cost = np.array([r.cost for r in recs])
        lo_r, med_r, hi_r = np.percentile(rho, [lo, 50.0, hi], axis=0)
        cstats = np.array([_finite_percentiles(cost[:, i], [lo, 50.0, hi]) for i in range(cost.shape[1])])
        curves[alg] = AggregateCurve(
            algorithm=alg, percentiles=(lo, hi),
            p_lo=lo_r, median=med_r, p_hi=hi_r,
            cost_p_lo=cstats[:, 0], cost_median=cstats[:, 1], cost_p_hi=cstats[:, 2],
            instability_rate=np.mean(~np.isfinite(cost), axis=0),
            n_runs=len(recs),
        )
    return curves


def fmt(x):
    """Floats as shortest round-trip repr; infinities as ``inf``/``-inf``."""
    x = float(x)
    if np.isnan(x):
        raise ValueError("NaN must never be written")
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _pct_label(p):
    return f"p{int(p)}" if float(p).is_integer() else f"p{p:g}"


def _json_float(x):
    x = float(x)
    return fmt(x) if not np.isfinite(x) else x


def _write_csv(path, header, rows):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def summarize(records, cfg):
    from plspi import SCHEMA_VERSION, __version__
    from plspi.config import config_to_dict

    K_star = cfg.optimal_gain()
    runs = []
    for r in records:
        runs.append({
            "algorithm": r.algorithm,
            "seed": r.seed,
            "final_gain": r.final_gain.tolist(),
            "final_rho": _json_float(r.rho[-1]),
            "convergence_iteration": r.convergence_iteration(K_star, CONVERGENCE_TOL),
            "failed_iterations": [it.iteration for it in r.iterations if it.failed],
            "error": r.error,
            "wall_clock_s": sum(it.wall_clock for it in r.iterations),
        })
    return {
        "tool": "plspi",
        "version": __version__,
        "schema_version": SCHEMA_VERSION,
        "rng": "numpy PCG64, SeedSequence([seed, iteration, episode]); iteration is 1-based",
        "convergence_tolerance": CONVERGENCE_TOL,
        "optimal_gain": K_star.tolist(),
        "optimal_rho": spectral_radius(cfg.plant.A - cfg.plant.B @ K_star),
        "config": config_to_dict(cfg),
        "runs": runs,
    }


def emit(records, curves, out_dir, cfg, figures=True):
    """Write ``runs.csv``, ``summary.json``, ``curve_<alg>.csv``, ``cost_<alg>.csv``
    and (optionally) ``rho.svg``/``cost.svg``.  Returns the written paths."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    paths = []
    rows = []
    for r in records:
        for it in r.iterations:
            fb = "" if it.fallback is None else str(it.fallback).lower()
            rows.append([r.algorithm, r.seed, it.iteration, fmt(it.rho), fmt(it.cost), fb])
    p = os.path.join(out_dir, "runs.csv")
    _write_csv(p, ["algorithm", "seed", "iteration", "rho", "cost", "fallback"], rows)
    paths.append(p)

    for alg, c in curves.items():
        lo, hi = (_pct_label(q) for q in c.percentiles)
        p = os.path.join(out_dir, f"curve_{alg}.csv")
        _write_csv(p, ["iteration", lo, "median", hi],
                   [[i, fmt(a), fmt(b), fmt(d)] for i, a, b, d in zip(c.iterations, c.p_lo, c.median, c.p_hi)])
        paths.append(p)
        p = os.path.join(out_dir, f"cost_{alg}.csv")
        _write_csv(p, ["iteration", lo, "median", hi, "instability_rate"],
                   [[i, fmt(a), fmt(b), fmt(d), fmt(e)] for i, a, b, d, e in
                    zip(c.iterations, c.cost_p_lo, c.cost_median, c.cost_p_hi, c.instability_rate)])
        paths.append(p)

    p = os.path.join(out_dir, "summary.json")
    try:
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(summarize(records, cfg), fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {p}: {exc}") from exc
    paths.append(p)

    if figures:
        from plspi.plotting import plot_curves
        paths.extend(plot_curves(curves, out_dir, title=cfg.name))
    return paths


def _diag_prior(A, B):
    n, m = B.shape
    return PartialModel(np.diag(np.diag(A)), np.where(np.eye(n, m, dtype=bool), B, 0.0),
                        np.eye(n, dtype=bool), np.eye(n, m, dtype=bool))


def builtin_examples():
    """Named configurations: ``example1``, ``example2`` and ``example2-full``."""
    A1 = np.array([[1.0, 1.0], [0.0, 1.0]])
    B1 = np.array([[0.0], [1.0]])
    ex1 = ExperimentConfig(
        name="example1",
        plant=LinearSystem(A1, B1, 0.0),
        cost=CostSpec(np.eye(2), np.eye(1), 1.0),
        prior=PartialModel.from_tokens([[1.0, 1.0], [0.0, "?"]], [[0.0], [1.0]]),
        outer_iters=5,
    )
    A2 = np.array([[1.01, 0.01, 0.0], [0.01, 1.01, 0.01], [0.0, 0.01, 1.01]])
    B2 = np.eye(3)
    ex2 = ExperimentConfig(
        name="example2",
        plant=LinearSystem(A2, B2, 0.1),
        cost=CostSpec(np.eye(3), 1000.0 * np.eye(3), 0.98),
        prior=_diag_prior(A2, B2),
        outer_iters=10,
    )
    ex2_full = replace(ex2, name="example2-full", prior=PartialModel(A2, B2), algorithms=("plspi",),
                       init="prior", percentiles=(0.0, 100.0))
    return {c.name: c for c in (ex1, ex2, ex2_full)}

