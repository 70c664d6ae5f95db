"""
Experiment orchestration behind the CLI commands.

Each function takes a validated ExperimentConfig and an output directory,
writes its artifacts there and returns what the command prints.
"""
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from . import data
from .assembly import DemProblem, demo_1d, loss
from .config import ExperimentConfig
from .detection import detect_localization
from .diffengine import configure_determinism
from .errors import DemSolveError, OracleFailureError
from .evaluate import RelativeDifference, relative_difference
from .graph import Graph, build_graph
from .grid import HexMesh, build_grid, build_hex_mesh
from .models import Backbone, NetworkParams, dirichlet_for_face, init_params, save_params
from .reference import OracleSolution, direct_minimize
from .training import TrainReport, lbfgs_minimize
from .utils import ensure_dir, worker_count
from .vtk import write_vtk

logger = logging.getLogger(__name__)

METHODS = ("mlp", "gcn")
MODES = ("ad", "sf")
DEFAULT_REFINE_LOAD = -15.0


@dataclass
class Setup:
    mesh: HexMesh
    problem: DemProblem
    backbone: Backbone
    graph: Optional[Graph]


@dataclass
class RunOutcome:
    theta: np.ndarray
    report: TrainReport
    rd: Optional[RelativeDifference]


def signed_load(cfg: ExperimentConfig) -> float:
    """y-component of the first traction, the load reported in tables."""
    return cfg.tractions[0].traction[1]


def build_setup(cfg: ExperimentConfig) -> Setup:
    grid = build_grid(cfg.geometry.dims, cfg.geometry.lengths)
    mesh = build_hex_mesh(grid)
    bc = dirichlet_for_face(grid, cfg.dirichlet_face)
    problem = DemProblem(
        mesh,
        cfg.material,
        cfg.tractions,
        bc,
        gradient_mode=cfg.gradient_mode,
        volume_quadrature=cfg.quadrature.volume,
        ad_scheme=cfg.quadrature.ad_scheme,
    )
    graph = build_graph(grid, cfg.graph.radius, cfg.graph.adjacency) if cfg.network.kind == "gcn" else None
    return Setup(mesh, problem, Backbone(cfg.network, graph), graph)


def graph_stats(graph: Optional[Graph]) -> Optional[Dict[str, Any]]:
    if graph is None:
        return None
    degree = graph.degree.diagonal()
    return {
        "n_nodes": graph.n_nodes,
        "n_edges": graph.n_edges,
        "radius": graph.radius,
        "isolated": int(graph.isolated.size),
        "degree_min": float(degree.min()),
        "degree_mean": float(degree.mean()),
        "degree_max": float(degree.max()),
    }


def solve_oracle(cfg: ExperimentConfig, mesh: Optional[HexMesh] = None) -> OracleSolution:
    configure_determinism()
    if mesh is None:
        mesh = build_hex_mesh(build_grid(cfg.geometry.dims, cfg.geometry.lengths))
    bc = dirichlet_for_face(mesh.grid, cfg.dirichlet_face)
    return direct_minimize(
        mesh,
        cfg.material,
        cfg.tractions,
        bc,
        tol=cfg.oracle.tol,
        load_steps=cfg.oracle.load_steps,
        max_iter=cfg.oracle.max_iter,
        volume_quadrature=cfg.quadrature.volume,
    )


def train(cfg: ExperimentConfig, setup: Optional[Setup] = None, U_ref: Optional[np.ndarray] = None) -> RunOutcome:
    """Train one configuration; compare against U_ref when given."""
    configure_determinism()
    setup = setup or build_setup(cfg)
    prog = loss(setup.problem, setup.backbone)

    def audit(U):
        return detect_localization(
            U, setup.mesh, cfg.material.regime, cfg.localization_threshold, setup.problem.sf
        )

    theta, report = lbfgs_minimize(prog, init_params(cfg.network).theta, cfg.train, audit)
    rd = None
    if U_ref is not None and report.final_U is not None and np.all(np.isfinite(report.final_U)):
        rd = relative_difference(report.final_U, U_ref)
    return RunOutcome(theta, report, rd)


def summarize(cfg: ExperimentConfig, outcome: RunOutcome, out_dir: Path, oracle: Optional[OracleSolution]) -> Dict[str, Any]:
    report = outcome.report
    return {
        "status": "trained",
        "method": cfg.network.kind,
        "mode": cfg.gradient_mode,
        "load": signed_load(cfg),
        "seed": cfg.network.seed,
        "final_loss": report.final_loss,
        "stop_reason": report.stop_reason,
        "diverged": report.diverged,
        "localization_metric": report.localization_metric,
        "train_time_s": report.wall_time,
        "n_updates": report.n_updates,
        "mean_RD": outcome.rd.mean if outcome.rd is not None else None,
        "oracle_energy": oracle.energy if oracle is not None else None,
        "output_dir": str(out_dir),
    }


def run_single(cfg: ExperimentConfig, out_dir: Path, oracle: Optional[OracleSolution] = None) -> Dict[str, Any]:
    """
    Train one configuration and write its artifacts.

    Writes report.json, metrics.csv, params.joblib, solution.vtk and (with the
    oracle enabled) reference.vtk into out_dir.

    Returns:
        The report; its "summary" entry is what `run` prints.
    """
    out_dir = ensure_dir(str(out_dir))
    setup = build_setup(cfg)
    if oracle is None and cfg.oracle.enabled:
        try:
            oracle = solve_oracle(cfg, setup.mesh)
        except OracleFailureError as exc:
            logger.warning("Oracle failed, continuing without reference: %s", exc)
    outcome = train(cfg, setup, oracle.U_ref if oracle is not None else None)
    report = outcome.report

    data.write_csv(data.metrics_frame(report.epoch_losses or report.loss_history[:1]), out_dir / "metrics.csv")
    save_params(NetworkParams(cfg.network, outcome.theta), out_dir / "params.joblib")
    if report.final_U is not None:
        write_vtk(out_dir / "solution.vtk", setup.mesh, report.final_U, cfg.material)
    if oracle is not None:
        write_vtk(out_dir / "reference.vtk", setup.mesh, oracle.U_ref, cfg.material, title="dem_solve reference field")

    doc = {
        "summary": summarize(cfg, outcome, out_dir, oracle),
        "config": cfg.to_dict(),
        "train": {
            "loss_history": report.loss_history,
            "epoch_losses": report.epoch_losses,
            "wall_time": report.wall_time,
            "stop_reason": report.stop_reason,
            "diverged": report.diverged,
            "localization_metric": report.localization_metric,
            "n_updates": report.n_updates,
        },
        "relative_difference": outcome.rd.summary() if outcome.rd is not None else None,
        "oracle": None
        if oracle is None
        else {
            "energy": oracle.energy,
            "iterations": oracle.iterations,
            "residual_norm": oracle.residual_norm,
            "step_energies": oracle.step_energies,
        },
        "graph": graph_stats(setup.graph),
    }
    data.write_report(doc, out_dir / "report.json")
    return doc


def _row(cfg: ExperimentConfig, outcome: Optional[RunOutcome], status: str) -> Dict[str, Any]:
    row = {
        "method": cfg.network.kind,
        "mode": cfg.gradient_mode,
        "load": signed_load(cfg),
        "mean_RD": math.nan,
        "final_loss": math.nan,
        "train_time_s": math.nan,
        "diverged": True,
        "seed": cfg.network.seed,
        "status": status,
    }
    if outcome is not None:
        row.update(
            mean_RD=outcome.rd.mean if outcome.rd is not None else math.nan,
            final_loss=outcome.report.final_loss,
            train_time_s=outcome.report.wall_time,
            diverged=outcome.report.diverged,
        )
    return row


def _job(cfg: ExperimentConfig, out_dir: Path, U_ref: Optional[np.ndarray]) -> Dict[str, Any]:
    try:
        outcome = train(cfg, U_ref=U_ref)
    except DemSolveError as exc:
        logger.warning("Run %s-%s load %g seed %d failed: %s",
                       cfg.network.kind, cfg.gradient_mode, signed_load(cfg), cfg.network.seed, exc)
        return _row(cfg, None, f"failed: {exc}")
    run_dir = ensure_dir(str(out_dir / f"{cfg.network.kind}-{cfg.gradient_mode}-seed{cfg.network.seed}"))
    data.write_csv(data.metrics_frame(outcome.report.epoch_losses or outcome.report.loss_history[:1]), run_dir / "metrics.csv")
    data.write_report({"summary": summarize(cfg, outcome, run_dir, None)}, run_dir / "report.json")
    return _row(cfg, outcome, outcome.report.stop_reason)


def _oracle_job(cfg: ExperimentConfig) -> Optional[np.ndarray]:
    try:
        return solve_oracle(cfg).U_ref
    except OracleFailureError as exc:
        logger.warning("Oracle failed for load %g dims %s: %s", signed_load(cfg), cfg.geometry.dims, exc)
        return None


def _variants(cfg: ExperimentConfig, seeds: Sequence[int]) -> List[ExperimentConfig]:
    return [
        replace(cfg.with_seed(seed), network=replace(cfg.network, kind=method, seed=seed), gradient_mode=mode)
        for method in METHODS
        for mode in MODES
        for seed in seeds
    ]


def _case_tag(cfg: ExperimentConfig) -> str:
    nx, ny, nz = cfg.geometry.dims
    return f"dims_{nx}x{ny}x{nz}_load_{signed_load(cfg):g}"


def _run_cases(cases: List[ExperimentConfig], seeds: Sequence[int], out_dir: Path) -> List[Dict[str, Any]]:
    """Oracles first, then every method x mode x seed variant of each case."""
    n_jobs = worker_count()
    refs = [None] * len(cases)
    enabled = [i for i, c in enumerate(cases) if c.oracle.enabled]
    if enabled:
        solved = Parallel(n_jobs=n_jobs)(delayed(_oracle_job)(cases[i]) for i in enabled)
        for i, U in zip(enabled, solved):
            refs[i] = U
    jobs = [
        (variant, out_dir / _case_tag(case), refs[i])
        for i, case in enumerate(cases)
        for variant in _variants(case, seeds)
    ]
    logger.info("Running %d training jobs on %d workers", len(jobs), n_jobs)
    return Parallel(n_jobs=n_jobs)(delayed(_job)(c, d, U) for c, d, U in jobs)


def run_sweep(cfg: ExperimentConfig, loads: Sequence[float], seeds: Sequence[int], out_dir: Path) -> pd.DataFrame:
    """Every load x method x mode x seed; writes table.csv."""
    out_dir = ensure_dir(str(out_dir))
    rows = _run_cases([cfg.with_load(load) for load in loads], seeds, out_dir)
    table = data.rows_frame(rows, data.TABLE_COLUMNS)
    data.write_csv(table, out_dir / "table.csv")
    return table


def run_refine(
    cfg: ExperimentConfig,
    dims_list: Sequence[Tuple[int, int, int]],
    seeds: Sequence[int],
    out_dir: Path,
    load: float = DEFAULT_REFINE_LOAD,
) -> pd.DataFrame:
    """The fixed-load study repeated on each grid; writes refine.csv."""
    out_dir = ensure_dir(str(out_dir))
    cases = [cfg.with_dims(dims).with_load(load) for dims in dims_list]
    rows = _run_cases(cases, seeds, out_dir)
    per_case = len(METHODS) * len(MODES) * len(seeds)
    for i, row in enumerate(rows):
        row["dims"] = "x".join(str(n) for n in cases[i // per_case].geometry.dims)
    table = data.rows_frame(rows, data.REFINE_COLUMNS)
    data.write_csv(table, out_dir / "refine.csv")
    return table


def demo1d_table(delta_u_max: float, steps: int = 200) -> pd.DataFrame:
    """Bar potential under both integration schemes on [0, delta_u_max]."""
    if not delta_u_max > 0:
        raise ValueError(f"delta_u_max must be > 0, got {delta_u_max}")
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    du = np.linspace(0.0, delta_u_max, steps + 1)
    return pd.DataFrame(
        {
            "delta_u": du,
            "psi_ad": [demo_1d(d, "ad_trapezoid") for d in du],
            "psi_sf": [demo_1d(d, "sf_gauss1") for d in du],
        }
    )[data.DEMO1D_COLUMNS]
