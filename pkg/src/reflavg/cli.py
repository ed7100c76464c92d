"""Command line entry point: ``reflavg <subcommand>``.

Exit codes: 0 success, 2 invalid arguments or config, 3 numerical failure.
"""
import argparse
import csv
import json
import sys

import numpy as np

from . import __version__
from .backward import RegressionConfig, martingale_check, solve
from .coefficients import AveragedCoefficients, audit_assumptions, make_model
from .domain import make_domain
from .errors import InvalidArgument, NumericalFailure
from .forward import PathEnsemble, TimeGrid, path_diagnostics, simulate, simulate_averaged
from .harness import ExperimentConfig, run_convergence, run_pde_grid
from .pathio import read_path_dump, write_path_dump
from .potentials import make_potential

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


def _parse_potential(text, d):
    """``kind`` or ``kind:key=value,key=value``."""
    kind, _, rest = text.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, _, val = item.partition("=")
        params[key] = None if val in ("", "none", "None") else float(val)
    return make_potential(kind, d, **params)


def _epsilon(text):
    return "averaged" if text == "averaged" else float(text)


def _add_model_args(p):
    p.add_argument("--domain", default="interval", choices=["ball", "interval", "halfspace"])
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--lower", type=float, default=-1.0)
    p.add_argument("--upper", type=float, default=1.0)
    p.add_argument("--model", default="periodic_linear_1d")
    p.add_argument("--epsilon", type=_epsilon, default=1.0,
                   help="fast time scale, or 'averaged' for the averaged system")
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--paths", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--x0", type=float, nargs="+", default=None)


def _build(args):
    model = make_model(args.model)
    params = {"radius": args.radius} if args.domain == "ball" else (
        {"lower": args.lower, "upper": args.upper} if args.domain == "interval" else {})
    dom = make_domain(args.domain, m=None if args.domain == "interval" else model.m, **params)
    x0 = np.zeros(model.m) if args.x0 is None else np.asarray(args.x0, dtype=float)
    return model, dom, x0


def _simulate(args, model, dom, x0):
    grid = TimeGrid(args.t, args.T, args.steps)
    if args.epsilon == "averaged":
        return simulate_averaged(dom, AveragedCoefficients(model), grid, x0, args.paths, args.seed)
    return simulate(dom, model, args.epsilon, grid, x0, args.paths, args.seed)


def cmd_simulate_forward(args):
    model, dom, x0 = _build(args)
    ens = _simulate(args, model, dom, x0)
    rows = _forward_summary(ens)
    _write_csv(args.csv, rows)
    if args.dump:
        write_path_dump(args.dump, ens)
    diag = path_diagnostics(ens, dom)
    print(json.dumps({"n_paths": ens.n_paths, "n_steps": ens.grid.n_steps,
                      "mean_X_T": ens.X_T.mean(axis=0).tolist(), **diag.to_dict()}, indent=2))
    return EXIT_OK


def _forward_summary(ens):
    times = ens.grid.times
    refl = np.concatenate([[0.0], np.mean(ens.dK_norm > 0, axis=0)])
    x1 = ens.X[:, :, 0]
    return [{"t": repr(float(t)), "mean_x1": repr(float(x1[:, i].mean())),
             "std_x1": repr(float(x1[:, i].std(ddof=1)) if ens.n_paths > 1 else float("nan")),
             "mean_K_var": repr(float(ens.K_var[:, i].mean())),
             "reflection_fraction": repr(float(refl[i]))}
            for i, t in enumerate(times)]


def _write_csv(path, rows):
    if not path or not rows:
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def cmd_solve_bsvi(args):
    model, dom, x0 = _build(args)
    if args.paths_file:
        header, X, dK, K_var = read_path_dump(args.paths_file)
        if header["m"] != model.m:
            raise InvalidArgument(f"dump has m={header['m']}, model has m={model.m}")
        grid = TimeGrid(args.t, args.t + header["dt"] * header["n_steps"], header["n_steps"])
        ens = PathEnsemble(grid, header["n_paths"], args.epsilon, X, dK, K_var,
                           np.zeros_like(dK), args.seed)
    else:
        ens = _simulate(args, model, dom, x0)
    p_phi = _parse_potential(args.phi, model.d)
    p_psi = _parse_potential(args.psi, model.d)
    reg = RegressionConfig(degree=args.degree, ridge=args.ridge)
    if args.epsilon == "averaged":
        sol = solve(ens, model, p_phi, p_psi, reg, "averaged", avg=AveragedCoefficients(model),
                    domain=dom)
    else:
        sol = solve(ens, model, p_phi, p_psi, reg, "epsilon", domain=dom)
    times = ens.grid.times
    rows = [{"t": repr(float(t)), "mean_Y": repr(float(sol.Y[:, i, 0].mean()))}
            for i, t in enumerate(times)]
    _write_csv(args.csv, rows)
    print(json.dumps({"Y_start": sol.Y_start.tolist(), "stderr": sol.Y_start_stderr.tolist(),
                      "martingale_stat": martingale_check(sol, ens),
                      **sol.diagnostics}, indent=2))
    return EXIT_OK


def _load_config(args):
    cfg = ExperimentConfig.from_json(args.config)
    if getattr(args, "csv", None):
        cfg.output_csv = args.csv
    if getattr(args, "json", None):
        cfg.output_json = args.json
    return cfg


def cmd_homogenize(args):
    report = run_convergence(_load_config(args))
    sys.stdout.write(report.csv_text())
    return EXIT_OK


def cmd_pde_grid(args):
    report = run_pde_grid(_load_config(args))
    sys.stdout.write(report.csv_text())
    print(json.dumps({"sup_gap": report.metadata["sup_gap"]}))
    return EXIT_OK


def cmd_audit(args):
    cfg = _load_config(args)
    model, dom, p_phi, p_psi, _ = cfg.build()
    report = audit_assumptions(model, p_phi, p_psi, args.budget or cfg.audit_budget, cfg.seed,
                               domain=dom)
    text = json.dumps(report.to_dict(), indent=2)
    if args.json:
        with open(args.json, "w") as fh:
            fh.write(text)
    print(text)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="reflavg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("homogenize", help="epsilon sweep of weak gaps and initial values")
    p.add_argument("--config", required=True)
    p.add_argument("--csv")
    p.add_argument("--json")
    p.set_defaults(func=cmd_homogenize)

    p = sub.add_parser("pde-grid", help="u^eps(t, x) versus u(t, x) on a grid")
    p.add_argument("--config", required=True)
    p.add_argument("--csv")
    p.add_argument("--json")
    p.set_defaults(func=cmd_pde_grid)

    p = sub.add_parser("audit-assumptions", help="sampled audit of the model assumptions")
    p.add_argument("--config", required=True)
    p.add_argument("--budget", type=int)
    p.add_argument("--json")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("simulate-forward", help="simulate the reflected forward system")
    _add_model_args(p)
    p.add_argument("--csv", help="per-time summary CSV")
    p.add_argument("--dump", help="binary path dump")
    p.set_defaults(func=cmd_simulate_forward)

    p = sub.add_parser("solve-bsvi", help="backward sweep over simulated or dumped paths")
    _add_model_args(p)
    p.add_argument("--paths-file", help="binary dump from simulate-forward")
    p.add_argument("--phi", default="zero")
    p.add_argument("--psi", default="zero")
    p.add_argument("--degree", type=int, default=2)
    p.add_argument("--ridge", type=float, default=1e-10)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_solve_bsvi)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidArgument, FileNotFoundError, json.JSONDecodeError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
