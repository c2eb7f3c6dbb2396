"""TOML experiment files.

Schema (all matrices are arrays of rows)::

    name = "example2"                  # optional

    [plant]
    A = [[1.01, 0.01, 0.0], ...]
    B = [[1.0, 0.0, 0.0], ...]
    noise_std = 0.1                    # process-noise standard deviation

    [cost]
    Q = [[...]]
    R = [[...]]
    gamma = 0.98

    [prior]                            # required when "plspi" is run
    A1 = [[1.01, "?", "?"], ...]       # "?" marks an unknown entry
    B1 = [[1.0, "?", "?"], ...]
    plug_A = [[...]]                   # optional values for the "?" entries (default 0)
    plug_B = [[...]]

    [experiment]                       # every key optional
    algorithms = ["lspi-v1", "lspi-v2", "plspi"]
    seeds = [0, 1, 2]
    n_rollouts = 30
    horizon = 20
    outer_iters = 10
    inner_iters = 5                    # LSPI-v1 and PLSPI; LSPI-v2 always uses 1
    eval_method = "fixed_point"        # or "bellman_residual"
    ridge = 1e-8
    require_pd = false
    exploration_std = 0.31622776601683794
    init = "zero"                      # PLSPI start: "zero" or "prior"
    K0 = [[...]]                       # optional explicit start gain
    fixed_k1 = false
    virtual_action = "executed"        # or "policy"
    use_complete_prior = true
    percentiles = [0, 75]
    parallel = 1

    [initial_state]                    # optional; default N(0, I)
    kind = "gaussian"                  # or "fixed"
    mean = [...]
    cov = [[...]]
    point = [...]                      # for kind = "fixed"

The ``"?"`` token is accepted only inside ``[prior]``.
"""

import sys

import numpy as np
import tomli_w

from plspi.env import InitialState, LinearSystem, NoiseSpec
from plspi.exceptions import ConfigError, PLSPIError
from plspi.harness import ExperimentConfig
from plspi.lqr import CostSpec
from plspi.partial import PartialModel

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

_EXPERIMENT_KEYS = {
    "algorithms", "seeds", "n_rollouts", "horizon", "outer_iters", "inner_iters", "eval_method",
    "ridge", "require_pd", "exploration_std", "init", "K0", "fixed_k1", "virtual_action",
    "use_complete_prior", "percentiles", "parallel",
}


def _matrix(value, where):
    try:
        M = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a numeric matrix (\"?\" is only allowed in [prior])") from None
    if M.ndim == 1:
        M = M.reshape(-1, 1) if where.endswith(".B") else M.reshape(1, -1)
    if M.ndim != 2:
        raise ConfigError(f"{where}: expected an array of rows")
    return M


def _table(doc, key, required=True):
    t = doc.get(key)
    if t is None:
        if required:
            raise ConfigError(f"missing [{key}] table")
        return {}
    if not isinstance(t, dict):
        raise ConfigError(f"{key} must be a table")
    return t


def _unknown_keys(table, allowed, where):
    extra = set(table) - set(allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(extra)}")


def config_from_dict(doc):
    try:
        plant_t = _table(doc, "plant")
        _unknown_keys(plant_t, {"A", "B", "noise_std"}, "[plant]")
        if "A" not in plant_t or "B" not in plant_t:
            raise ConfigError("[plant] needs A and B")
        plant = LinearSystem(_matrix(plant_t["A"], "plant.A"), _matrix(plant_t["B"], "plant.B"),
                             float(plant_t.get("noise_std", 0.0)))
        cost_t = _table(doc, "cost")
        _unknown_keys(cost_t, {"Q", "R", "gamma"}, "[cost]")
        if "Q" not in cost_t or "R" not in cost_t:
            raise ConfigError("[cost] needs Q and R")
        cost = CostSpec(_matrix(cost_t["Q"], "cost.Q"), _matrix(cost_t["R"], "cost.R"),
                        float(cost_t.get("gamma", 1.0)))
        prior = None
        prior_t = _table(doc, "prior", required=False)
        if prior_t:
            _unknown_keys(prior_t, {"A1", "B1", "plug_A", "plug_B"}, "[prior]")
            if "A1" not in prior_t or "B1" not in prior_t:
                raise ConfigError("[prior] needs A1 and B1")
            prior = PartialModel.from_tokens(prior_t["A1"], prior_t["B1"],
                                             prior_t.get("plug_A"), prior_t.get("plug_B"))
        exp = dict(_table(doc, "experiment", required=False))
        _unknown_keys(exp, _EXPERIMENT_KEYS, "[experiment]")
        kw = {}
        if "exploration_std" in exp:
            kw["noise"] = NoiseSpec(float(exp.pop("exploration_std")))
        if "K0" in exp:
            kw["K0"] = _matrix(exp.pop("K0"), "experiment.K0")
        x0_t = _table(doc, "initial_state", required=False)
        if x0_t:
            _unknown_keys(x0_t, {"kind", "mean", "cov", "point"}, "[initial_state]")
            kw["x0"] = InitialState(
                kind=x0_t.get("kind", "gaussian"),
                mean=None if "mean" not in x0_t else tuple(float(v) for v in x0_t["mean"]),
                cov=None if "cov" not in x0_t else tuple(map(tuple, _matrix(x0_t["cov"], "initial_state.cov"))),
                point=None if "point" not in x0_t else tuple(float(v) for v in x0_t["point"]),
            )
        _unknown_keys(doc, {"name", "plant", "cost", "prior", "experiment", "initial_state"}, "the top level")
        return ExperimentConfig(plant=plant, cost=cost, prior=prior, name=str(doc.get("name", "experiment")),
                                **exp, **kw)
    except ConfigError:
        raise
    except (PLSPIError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path):
    """Parse a TOML experiment file; every failure becomes :class:`ConfigError`."""
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    try:
        return config_from_dict(doc)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _rows(M):
    return [[float(v) for v in row] for row in np.atleast_2d(M)]


def config_to_dict(cfg):
    doc = {
        "name": cfg.name,
        "plant": {"A": _rows(cfg.plant.A), "B": _rows(cfg.plant.B), "noise_std": cfg.plant.noise_std},
        "cost": {"Q": _rows(cfg.cost.Q), "R": _rows(cfg.cost.R), "gamma": cfg.cost.gamma},
    }
    if cfg.prior is not None:
        A_tok, B_tok = cfg.prior.tokens()
        doc["prior"] = {"A1": A_tok, "B1": B_tok}
        if np.any(cfg.prior.A1[~cfg.prior.known_mask_A]):
            doc["prior"]["plug_A"] = _rows(cfg.prior.A1)
        if np.any(cfg.prior.B1[~cfg.prior.known_mask_B]):
            doc["prior"]["plug_B"] = _rows(cfg.prior.B1)
    exp = {
        "algorithms": list(cfg.algorithms),
        "seeds": list(cfg.seeds),
        "n_rollouts": cfg.n_rollouts,
        "horizon": cfg.horizon,
        "outer_iters": cfg.outer_iters,
        "inner_iters": cfg.inner_iters,
        "eval_method": cfg.eval_method.value,
        "ridge": cfg.ridge,
        "require_pd": cfg.require_pd,
        "exploration_std": cfg.noise.exploration_std,
        "init": cfg.init,
        "fixed_k1": cfg.fixed_k1,
        "virtual_action": cfg.virtual_action,
        "use_complete_prior": cfg.use_complete_prior,
        "percentiles": list(cfg.percentiles),
        "parallel": cfg.parallel,
    }
    if cfg.K0 is not None:
        exp["K0"] = _rows(cfg.K0)
    doc["experiment"] = exp
    x0 = cfg.x0
    x0_t = {"kind": x0.kind}
    for key in ("mean", "point"):
        if getattr(x0, key) is not None:
            x0_t[key] = [float(v) for v in getattr(x0, key)]
    if x0.cov is not None:
        x0_t["cov"] = _rows(x0.cov)
    doc["initial_state"] = x0_t
    return doc


def dumps_config(cfg):
    return tomli_w.dumps(config_to_dict(cfg))


def dump_config(cfg, path):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(dumps_config(cfg))
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc
