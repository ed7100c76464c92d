"""End-to-end experiments: epsilon sweeps of the weak gap and of the initial
value, and u^eps(t, x) versus u(t, x) grids, with CSV/JSON reports."""
import csv
import hashlib
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import __version__, rng
from .backward import RegressionConfig, martingale_check, solve
from .coefficients import AveragedCoefficients, audit_assumptions, make_model
from .domain import contains, make_domain
from .errors import InvalidArgument, ReflavgError
from .forward import TimeGrid, functional_gaps, path_diagnostics, simulate, simulate_averaged
from .potentials import make_potential


@dataclass
class ExperimentConfig:
    domain: dict = field(default_factory=lambda: {"kind": "interval", "lower": -1.0, "upper": 1.0})
    model: str = "periodic_linear_1d"
    model_params: dict = field(default_factory=dict)
    potentials: dict = field(default_factory=lambda: {
        "phi": {"kind": "positive_part", "weight": 1.0},
        "psi": {"kind": "positive_part", "weight": 0.5}})
    t: float = 0.0
    T: float = 1.0
    x0: list = field(default_factory=lambda: [0.5])
    x_grid: Optional[list] = None
    t_grid: Optional[list] = None
    epsilons: list = field(default_factory=lambda: [1.0, 0.1, 0.01])
    steps_per_period: int = 64
    max_dt: float = 1e-3
    n_paths: int = 20000
    regression: dict = field(default_factory=dict)
    functionals: list = field(default_factory=lambda: ["x", "x2", "cos"])
    seed: int = 20240611
    audit_budget: int = 500
    output_csv: Optional[str] = None
    output_json: Optional[str] = None

    @classmethod
    def from_dict(cls, data):
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise InvalidArgument(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return asdict(self)

    def config_hash(self):
        payload = {k: v for k, v in self.to_dict().items() if not k.startswith("output_")}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]

    def validate(self):
        eps = list(self.epsilons)
        if not eps:
            raise InvalidArgument("epsilons must not be empty")
        if any(not e > 0 for e in eps):
            raise InvalidArgument("epsilons must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise InvalidArgument("epsilons must be strictly decreasing")
        if not (self.T > self.t >= 0):
            raise InvalidArgument("need T > t >= 0")
        if self.n_paths < 1:
            raise InvalidArgument("n_paths must be positive")
        for name in self.functionals:
            if name not in ("x", "x2", "cos", "one"):
                raise InvalidArgument(f"unknown functional {name!r}")
        if self.t_grid is not None and any(not (self.T > s >= 0) for s in self.t_grid):
            raise InvalidArgument("t_grid entries must lie in [0, T)")

    # builders
    def build(self):
        model = make_model(self.model, **self.model_params)
        dom_params = dict(self.domain)
        kind = dom_params.pop("kind")
        dom = make_domain(kind, m=model.m if kind != "interval" else None, **dom_params)
        if dom.dimension != model.m:
            raise InvalidArgument(f"domain dimension {dom.dimension} != model dimension {model.m}")
        pots = {}
        for key in ("phi", "psi"):
            entry = dict(self.potentials.get(key, {"kind": "zero"}))
            pots[key] = make_potential(entry.pop("kind"), model.d, **entry)
        reg = RegressionConfig(**self.regression)
        for x in self.points():
            if not bool(contains(dom, np.asarray(x, dtype=float))):
                raise InvalidArgument(f"start point {x} lies outside closure(O)")
        return model, dom, pots["phi"], pots["psi"], reg

    def points(self):
        if self.x_grid is not None:
            return [np.atleast_1d(np.asarray(x, dtype=float)).tolist() for x in self.x_grid]
        return [np.atleast_1d(np.asarray(self.x0, dtype=float)).tolist()]

    def grid_for(self, t_start, epsilon, period):
        return TimeGrid.for_epsilon(t_start, self.T, epsilon, period, self.steps_per_period,
                                    self.max_dt)


def _num(v):
    """JSON-safe float."""
    v = float(v)
    if math.isnan(v):
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


@dataclass
class CellResult:
    y_start: float
    y_stderr: float
    x_T: np.ndarray
    diagnostics: dict


def _run_cell(model, dom, p_phi, p_psi, reg, grid, x, n_paths, seed, epsilon=None, avg=None):
    """Forward + backward run for one start point; keeps only the summaries."""
    if epsilon is None:
        ens = simulate_averaged(dom, avg, grid, x, n_paths, seed)
        sol = solve(ens, model, p_phi, p_psi, reg, "averaged", avg=avg, domain=dom)
    else:
        ens = simulate(dom, model, epsilon, grid, x, n_paths, seed)
        sol = solve(ens, model, p_phi, p_psi, reg, "epsilon", domain=dom)
    diag = path_diagnostics(ens, dom).to_dict()
    diag.update({k: v for k, v in sol.diagnostics.items()})
    diag["martingale_stat"] = martingale_check(sol, ens)
    out = CellResult(float(sol.Y_start[0]), float(sol.Y_start_stderr[0]), ens.X_T.copy(), diag)
    del ens, sol
    return out


@dataclass
class ConvergenceReport:
    rows: list
    metadata: dict
    kind: str = "convergence"

    def csv_text(self):
        if not self.rows:
            return ""
        cols = list(self.rows[0].keys())
        cols = [c for c in cols if c != "diagnostics"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            w.writerow([_fmt(r.get(c)) for c in cols])
        return buf.getvalue()

    def to_dict(self):
        return {"kind": self.kind, "metadata": self.metadata, "rows": self.rows}

    def write(self, csv_path=None, json_path=None):
        if csv_path:
            with open(csv_path, "w") as fh:
                fh.write(self.csv_text())
        if json_path:
            with open(json_path, "w") as fh:
                json.dump(self.to_dict(), fh, indent=2, sort_keys=True, default=_num)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def _metadata(cfg, audit):
    return {"config_hash": cfg.config_hash(), "seed": cfg.seed, "version": __version__,
            "scheme": "projected-euler", "audit_violations": audit.violations,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z")}


def run_convergence(cfg: ExperimentConfig) -> ConvergenceReport:
    """Epsilon sweep at the first start point with common random numbers.

    Each row holds the weak gaps of the forward system per functional and the
    initial-value error of the backward system against the averaged system run
    on the same grid and seed.  A failing row is recorded and the sweep goes on.
    """
    cfg.validate()
    model, dom, p_phi, p_psi, reg = cfg.build()
    avg = AveragedCoefficients(model)
    audit = audit_assumptions(model, p_phi, p_psi, cfg.audit_budget, cfg.seed, domain=dom)
    x = cfg.points()[0]
    rows = []
    bar_cache = {}
    for eps in cfg.epsilons:
        grid = cfg.grid_for(cfg.t, eps, model.period)
        row = {"epsilon": float(eps), "n_steps": grid.n_steps, "dt": grid.dt}
        try:
            cell = _run_cell(model, dom, p_phi, p_psi, reg, grid, x, cfg.n_paths, cfg.seed,
                             epsilon=eps)
            key = (grid.t_start, grid.n_steps)
            if key not in bar_cache:
                bar_cache[key] = _run_cell(model, dom, p_phi, p_psi, reg, grid, x, cfg.n_paths,
                                           cfg.seed, avg=avg)
            bar = bar_cache[key]
            for gap in functional_gaps(cell.x_T, bar.x_T, cfg.functionals):
                row[f"gap_{gap.name}"] = gap.gap
                row[f"gap_stderr_{gap.name}"] = gap.stderr
            row.update({
                "Y_eps": cell.y_start, "Y_bar": bar.y_start,
                "error": abs(cell.y_start - bar.y_start),
                "stderr": float(rng.pooled_stderr(cell.y_stderr, bar.y_stderr)),
                "martingale_eps": cell.diagnostics["martingale_stat"],
                "martingale_bar": bar.diagnostics["martingale_stat"],
                "reflection_fraction": cell.diagnostics["reflection_fraction"],
                "min_monotonicity": cell.diagnostics["min_monotonicity"],
                "status": "ok",
            })
            row["diagnostics"] = {"epsilon": cell.diagnostics, "averaged": bar.diagnostics}
        except ReflavgError as exc:
            row.update({"status": f"failed: {exc}"})
        rows.append(row)
    report = ConvergenceReport(rows, _metadata(cfg, audit))
    report.write(cfg.output_csv, cfg.output_json)
    return report


def run_pde_grid(cfg: ExperimentConfig) -> ConvergenceReport:
    """u^eps(t, x) = Y^eps_start and u(t, x) = Y_bar_start on the (t_grid x x_grid) cells.

    Every cell reuses the master seed, so a single-cell grid reproduces the
    ``run_convergence`` values exactly.  Metadata carries the sup-norm gap per
    epsilon.
    """
    cfg.validate()
    model, dom, p_phi, p_psi, reg = cfg.build()
    avg = AveragedCoefficients(model)
    audit = audit_assumptions(model, p_phi, p_psi, cfg.audit_budget, cfg.seed, domain=dom)
    t_grid = cfg.t_grid if cfg.t_grid is not None else [cfg.t]
    rows = []
    sup_gap = {}
    for eps in cfg.epsilons:
        worst = 0.0
        for t0 in t_grid:
            grid = cfg.grid_for(t0, eps, model.period)
            bar_cache = {}
            for x in cfg.points():
                row = {"epsilon": float(eps), "t": float(t0), "x": " ".join(repr(v) for v in x),
                       "n_steps": grid.n_steps}
                try:
                    cell = _run_cell(model, dom, p_phi, p_psi, reg, grid, x, cfg.n_paths,
                                     cfg.seed, epsilon=eps)
                    key = tuple(x)
                    if key not in bar_cache:
                        bar_cache[key] = _run_cell(model, dom, p_phi, p_psi, reg, grid, x,
                                                   cfg.n_paths, cfg.seed, avg=avg)
                    bar = bar_cache[key]
                    gap = abs(cell.y_start - bar.y_start)
                    worst = max(worst, gap)
                    row.update({"u_eps": cell.y_start, "u_bar": bar.y_start, "gap": gap,
                                "stderr": float(rng.pooled_stderr(cell.y_stderr, bar.y_stderr)),
                                "status": "ok"})
                except ReflavgError as exc:
                    row.update({"status": f"failed: {exc}"})
                rows.append(row)
        sup_gap[repr(float(eps))] = worst
    meta = _metadata(cfg, audit)
    meta["sup_gap"] = sup_gap
    report = ConvergenceReport(rows, meta, kind="pde-grid")
    report.write(cfg.output_csv, cfg.output_json)
    return report
