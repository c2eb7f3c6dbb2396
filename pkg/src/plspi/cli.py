"""Command-line interface.

Exit codes: 0 success, 1 configuration or usage error, 2 numerical failure.
JSON goes to stdout; progress and human-readable text go to stderr.
"""

import argparse
import json
import sys

import numpy as np

from plspi import SCHEMA_VERSION, __version__
from plspi.config import dump_config, dumps_config, load_config
from plspi.exceptions import ConfigError, DimensionError, DomainError, PLSPIError, PriorError
from plspi.harness import ALGORITHMS, CONVERGENCE_TOL, aggregate, builtin_examples, emit, run_experiment
from plspi.lqr import optimal_gain, solve_dare, spectral_radius

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _alg_list(text):
    algs = [v.strip() for v in text.split(",") if v.strip()]
    bad = [a for a in algs if a not in ALGORITHMS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown algorithm(s) {bad}; choose from {', '.join(ALGORITHMS)}")
    return algs


def _add_run_filters(p):
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seeds", type=_int_list, help="comma-separated seed list (replaces the config's)")
    p.add_argument("--seed-override", type=int, metavar="BASE",
                   help="use seeds BASE, BASE+1, ... (same count as configured)")
    p.add_argument("--algorithms", type=_alg_list, help=f"comma-separated subset of {','.join(ALGORITHMS)}")
    p.add_argument("--parallel", type=int, help="worker threads (default: config value)")
    p.add_argument("--no-figures", action="store_true", help="skip the SVG figures")


def build_parser():
    parser = _Parser(prog="plspi", description="Least-squares policy iteration for LQR with partial model knowledge.",
                     epilog="Exit codes: 0 ok, 1 config/usage error, 2 numerical failure.")
    parser.add_argument("--version", action="version", version=f"plspi {__version__} (output schema {SCHEMA_VERSION})")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("run", help="run an experiment from a TOML config")
    p.add_argument("--config", required=True, help="experiment TOML file")
    _add_run_filters(p)

    p = sub.add_parser("example", help="run a built-in experiment")
    p.add_argument("name", choices=sorted(builtin_examples()))
    _add_run_filters(p)

    p = sub.add_parser("dare", help="solve the Riccati equation for a config's plant and cost")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="experiment TOML file")
    src.add_argument("--example", choices=sorted(builtin_examples()), help="built-in experiment")

    p = sub.add_parser("export-config", help="write a built-in experiment as TOML")
    p.add_argument("name", choices=sorted(builtin_examples()))
    p.add_argument("--out", help="destination file (default: stdout)")
    return parser


def _apply_filters(cfg, args):
    kw = {}
    if args.seeds is not None:
        kw["seeds"] = tuple(args.seeds)
    if args.seed_override is not None:
        if args.seed_override < 0:
            raise ConfigError("--seed-override must be non-negative")
        n = len(kw.get("seeds", cfg.seeds))
        kw["seeds"] = tuple(range(args.seed_override, args.seed_override + n))
    if args.algorithms is not None:
        kw["algorithms"] = tuple(args.algorithms)
    if args.parallel is not None:
        kw["parallel"] = args.parallel
    try:
        return cfg.with_overrides(**kw) if kw else cfg
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _run(cfg, args):
    print(f"running {cfg.name}: {len(cfg.algorithms)} algorithm(s) x {len(cfg.seeds)} seed(s), "
          f"{cfg.outer_iters} outer iterations", file=sys.stderr)
    records = run_experiment(cfg)
    curves = aggregate(records, cfg.percentiles)
    paths = emit(records, curves, args.out, cfg, figures=not args.no_figures)
    K_star = cfg.optimal_gain()
    algs = {}
    for alg, c in curves.items():
        conv = [r.convergence_iteration(K_star, CONVERGENCE_TOL) for r in records if r.algorithm == alg]
        algs[alg] = {
            "median_rho_final": float(c.median[-1]),
            "median_below_one_at": c.crossing_iteration(1.0),
            "convergence_iterations": conv,
            "failed_runs": sum(1 for r in records if r.algorithm == alg and r.error),
        }
        print(f"  {alg}: final median rho {c.median[-1]:.4f}, converged runs "
              f"{sum(v is not None for v in conv)}/{len(conv)}", file=sys.stderr)
    json.dump({"name": cfg.name, "out": args.out, "files": paths, "algorithms": algs}, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def _dare(cfg):
    A, B = cfg.plant.A, cfg.plant.B
    P = solve_dare(A, B, cfg.cost)
    K = optimal_gain(A, B, cfg.cost, P)
    rho = spectral_radius(A - B @ K)
    with np.printoptions(precision=6, suppress=True):
        print(f"P =\n{P}\nK* =\n{K}\nrho(A - B K*) = {rho:.6f}", file=sys.stderr)
    json.dump({"P": P.tolist(), "K": K.tolist(), "rho": rho}, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def _dispatch(args, parser):
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_CONFIG
    if args.command == "run":
        return _run(_apply_filters(load_config(args.config), args), args)
    if args.command == "example":
        return _run(_apply_filters(builtin_examples()[args.name], args), args)
    if args.command == "dare":
        cfg = load_config(args.config) if args.config else builtin_examples()[args.example]
        return _dare(cfg)
    if args.command == "export-config":
        cfg = builtin_examples()[args.name]
        if args.out:
            dump_config(cfg, args.out)
            print(f"wrote {args.out}", file=sys.stderr)
        else:
            sys.stdout.write(dumps_config(cfg))
        return EXIT_OK
    raise AssertionError(f"unhandled command {args.command!r}")


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _dispatch(args, parser)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:
        # argparse exits 0 for --help/--version.
        return int(exc.code or 0)
    except (ConfigError, DimensionError, DomainError, PriorError) as exc:
        print(f"plspi: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PLSPIError as exc:
        print(f"plspi: numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"plspi: I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
