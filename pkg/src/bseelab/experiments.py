"""Scenario runs, closed-form error measurement, convergence tables and artifacts."""

from __future__ import annotations

import json
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__
from .config import ScenarioConfig, closed_form
from .solvers import (
    SolutionPair,
    mild_residual_profile,
    solve_a0,
    solve_general_picard,
    solve_linear_drift,
)
from .stochastic import RandomVector, lp_moment


@dataclass
class RunResult:
    config: ScenarioConfig
    solution: SolutionPair
    residual_profile: np.ndarray
    timings: dict = field(default_factory=dict)
    closed_form_error: Optional[float] = None

    @property
    def residual(self) -> float:
        return float(np.max(self.residual_profile))

    @property
    def converged(self) -> bool:
        return self.residual <= self.config.tol


def solve_scenario(cfg: ScenarioConfig) -> RunResult:
    t0 = time.perf_counter()
    model = cfg.model()
    S = cfg.semigroup()
    u_T = cfg.terminal(model)
    t1 = time.perf_counter()
    if cfg.method == "a0":
        sol = solve_a0(cfg.driver.as_process(model), u_T, cfg.space)
    elif cfg.method == "linear":
        sol = solve_linear_drift(S, cfg.driver.as_process(model), u_T, cfg.space)
    else:
        sol = solve_general_picard(S, cfg.driver, u_T, cfg.space, cfg.picard())
    t2 = time.perf_counter()
    profile = mild_residual_profile(sol, S, cfg.driver, u_T, cfg.space)
    t3 = time.perf_counter()
    err = closed_form_error(cfg, sol)
    timings = {"setup_s": t1 - t0, "solve_s": t2 - t1, "residual_s": t3 - t2}
    return RunResult(cfg, sol, profile, timings, err)


def closed_form_error(cfg: ScenarioConfig, sol: SolutionPair) -> Optional[float]:
    """``max`` over nodes of ``||U_i - U(t_i)||_{L^p}`` and over cells of the same for ``V``."""
    cf = closed_form(cfg)
    if cf is None:
        return None
    model = sol.model
    err = 0.0
    for i in range(model.steps + 1):
        t, w = model.grid.t(i), model.wiener(i)
        err = max(err, lp_moment(RandomVector(model, i, sol.U.at(i) - cf.U(t, w)), cfg.space))
        if i < model.steps:
            err = max(err, lp_moment(RandomVector(model, i, sol.V.at(i) - cf.V(t, w)), cfg.space))
    return err


def summary_rows(result: RunResult) -> list:
    """Rows ``(t, E_norm_U, E_norm_V, residual_t)``; norms are ``(E||.||^p)^(1/p)``.

    ``V`` lives on cells, so its entry at ``t = T`` is ``nan``.
    """
    sol, cfg = result.solution, result.config
    model = sol.model
    rows = []
    for i in range(model.steps + 1):
        u = lp_moment(sol.U.slice(i), cfg.space)
        v = lp_moment(sol.V.slice(i), cfg.space) if i < model.steps else float("nan")
        rows.append((model.grid.t(i), u, v, float(result.residual_profile[i])))
    return rows


def summary_standard_errors(result: RunResult) -> Optional[list]:
    """Sampling standard errors ``(se_U, se_V)`` of the E-norms on a path ensemble.

    They cover the Monte-Carlo moment only, not the regression error of the
    conditional expectations. ``None`` on exact models.
    """
    sol, cfg = result.solution, result.config
    model = sol.model
    if model.exact:
        return None
    rows = []
    for i in range(model.steps + 1):
        su = lp_moment(sol.U.slice(i), cfg.space, return_error=True)[1]
        sv = lp_moment(sol.V.slice(i), cfg.space, return_error=True)[1] if i < model.steps else float("nan")
        rows.append((su, sv))
    return rows


def _g17(x: float) -> str:
    return format(x, ".17g")


def write_csv(result: RunResult, path: Path):
    lines = ["t,E_norm_U,E_norm_V,residual_t"]
    lines += [",".join(_g17(v) for v in row) for row in summary_rows(result)]
    path.write_text("\n".join(lines) + "\n")


def versions() -> dict:
    return {"bseelab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, (np.floating,)):
        return _clean(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def manifest(result: RunResult) -> dict:
    """Deterministic run record (timings are written separately)."""
    cfg, sol = result.config, result.solution
    info = dict(sol.info)
    return _clean({
        "scenario": cfg.name,
        "config_hash": cfg.hash(),
        "config": cfg.canonical_text(),
        "seed": cfg.seed,
        "model": sol.model.describe(),
        "versions": versions(),
        "method": cfg.method,
        "residual": result.residual,
        "residual_profile": [float(r) for r in result.residual_profile],
        "tol": cfg.tol,
        "converged": result.converged,
        "iterations": sol.iterations,
        "contraction_history": sol.contraction_history,
        "gamma_bound": info.pop("gamma_bound", None),
        "gamma_bound_kind": info.pop("gamma_kind", None),
        "guard_theta": info.pop("theta", None),
        "guard_threshold": info.pop("guard_threshold", None),
        "guard_constants": "implied constants taken as 1",
        "closed_form_error": result.closed_form_error,
        "E_norm_standard_errors": summary_standard_errors(result),
        "solver_info": info,
        "csv_columns": {"E_norm_U": "(E||U(t)||^p)^(1/p)", "E_norm_V": "(E||V(t)||^p)^(1/p), nan at t = T",
                        "residual_t": "(E||D(t)||^p)^(1/p) of the discrete mild-equation defect"},
    })


def write_artifacts(result: RunResult, out: Path, dump_nodes: bool = False) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    write_csv(result, out / "summary.csv")
    man = manifest(result)
    (out / "manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    (out / "timings.json").write_text(json.dumps(result.timings, indent=2, sort_keys=True) + "\n")
    if dump_nodes:
        sol = result.solution
        arrays = {f"U_{i}": sol.U.at(i) for i in sol.U.levels()}
        arrays.update({f"V_{i}": sol.V.at(i) for i in sol.V.levels()})
        arrays.update({f"W_{i}": sol.model.wiener(i) for i in sol.U.levels()})
        np.savez(out / "nodes.npz", **arrays)
    return man


@dataclass
class ConvergenceRow:
    steps: int
    error: float
    residual: float
    order: Optional[float]


def observed_order(e1: float, e2: float, n1: int, n2: int, floor: float = 1e-12) -> Optional[float]:
    """``log(e1 / e2) / log(n2 / n1)``; ``inf`` when both errors sit at round-off."""
    if e1 <= floor and e2 <= floor:
        return math.inf
    if e2 <= 0:
        return math.inf
    if e1 <= 0:
        return -math.inf
    return math.log(e1 / e2) / math.log(n2 / n1)


def convergence_study(cfg: ScenarioConfig, steps_list, model_kind: Optional[str] = None) -> list:
    if closed_form(cfg) is None:
        raise ValueError(f"scenario {cfg.name or '(file)'} has no closed-form solution")
    rows = []
    for n in steps_list:
        kw = {"steps": int(n)}
        if model_kind:
            kw["model_kind"] = model_kind
        res = solve_scenario(cfg.with_overrides(**kw))
        order = None
        if rows:
            order = observed_order(rows[-1].error, res.closed_form_error, rows[-1].steps, int(n))
        rows.append(ConvergenceRow(int(n), res.closed_form_error, res.residual, order))
    return rows


def write_convergence(rows: list, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    with_order = len(rows) > 1
    header = "N,max_error,residual" + (",observed_order" if with_order else "")
    lines = [header]
    for r in rows:
        cells = [str(r.steps), _g17(r.error), _g17(r.residual)]
        if with_order:
            cells.append("" if r.order is None else _g17(r.order))
        lines.append(",".join(cells))
    (out / "convergence.csv").write_text("\n".join(lines) + "\n")
