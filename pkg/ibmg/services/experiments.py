"""Experiment configs, sweep execution and CSV artifacts.

An experiment config is flat ``key = value`` text::

    # thick shell, Stokes flow
    problem = thick
    N = [64, 128, 256]
    gamma = [5, 50]
    smoother = SC

A value in square brackets is a list and turns its key into a sweep axis; the
sweep points are the cartesian product of the axes, in the order of
``SWEEP_KEYS``. ``summary.csv`` and ``residuals.csv`` are written from the
stored runs, in sweep order.
"""
import csv
import itertools
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Tuple

import numpy as np
from django.utils import timezone

from ibmg.models import Experiment, ResidualEntry, SolveRun
from ibmg.settings import IBMG_DEFAULTS, IBMG_OUTPUT_DIR, IBMG_THREADS
from ibmg.solver.grid import HierarchyError, build_hierarchy
from ibmg.solver.krylov import StepResult, StepState, default_time_step, semi_implicit_step
from ibmg.solver.operators import FluidParams
from ibmg.solver.smoothers import SMOOTHER_KINDS, SCSmootherConfig, SmootherWrap
from ibmg.solver.structure import GEOMETRIES, FiberMesh, make_structures

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Raised for malformed or inconsistent experiment configs."""

    pass


def _parse_bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in ("true", "yes", "on", "1"):
        return True
    if value in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: '{raw}'")


def _choice(choices: Tuple[str, ...]) -> Callable[[str], str]:
    def parse(raw: str) -> str:
        if raw not in choices:
            raise ValueError(f"'{raw}' is not one of {', '.join(choices)}")
        return raw

    return parse


def _positive(parse: Callable[[str], Any]) -> Callable[[str], Any]:
    def checked(raw: str):
        value = parse(raw)
        if not value > 0:
            raise ValueError(f"{raw} is not positive")
        return value

    return checked


def _non_negative(parse: Callable[[str], Any]) -> Callable[[str], Any]:
    def checked(raw: str):
        value = parse(raw)
        if value < 0:
            raise ValueError(f"{raw} is negative")
        return value

    return checked


def _grid_size(raw: str) -> int:
    N = int(raw)
    try:
        build_hierarchy(N)
    except HierarchyError as e:
        raise ValueError(str(e)) from e
    return N


SWEEP_KEYS = ("problem", "N", "gamma", "mu", "rho", "smoother", "box", "overlap")

CONFIG_KEYS: Dict[str, Tuple[Callable[[str], Any], Any]] = {
    "name": (str, ""),
    "problem": (_choice(GEOMETRIES), "thick"),
    "N": (_grid_size, 64),
    "gamma": (_non_negative(float), 5.0),
    "mu": (_positive(float), 1.0),
    "rho": (_non_negative(float), 0.0),
    "smoother": (_choice(SMOOTHER_KINDS), "SC"),
    "box": (_positive(int), 8),
    "overlap": (_non_negative(int), 2),
    "nu1": (_non_negative(int), 1),
    "nu2": (_non_negative(int), 1),
    "wrap": (_non_negative(int), 2),
    "cheby_iters_A": (_positive(int), 2),
    "cheby_iters_M": (_positive(int), 2),
    "tol": (_positive(float), 1e-12),
    "max_iters": (_positive(int), 100),
    "seed": (_non_negative(int), 0),
    "n_structures": (_positive(int), 16),
    "record_wall_time": (_parse_bool, True),
    "output_dir": (str, IBMG_OUTPUT_DIR),
}
"""Known config keys with their parser and built-in default."""

SUMMARY_COLUMNS = (
    "problem", "N", "gamma", "mu", "rho", "smoother", "box", "overlap", "nu1", "nu2", "wrap",
    "iterations", "converged", "final_relres", "wall_time_s",
)
RESIDUAL_COLUMNS = ("run_id", "iter", "relres")


def config_defaults() -> Dict[str, Any]:
    """Built-in defaults overridden by the ``IBMG_DEFAULTS`` setting."""
    defaults = {key: default for key, (_, default) in CONFIG_KEYS.items()}
    for key, value in IBMG_DEFAULTS.items():
        if key not in CONFIG_KEYS:
            raise ConfigError(f"IBMG_DEFAULTS names unknown config key '{key}'")
        defaults[key] = _parse_value(key, str(value).lower() if isinstance(value, bool) else str(value))
    return defaults


def _parse_value(key: str, raw: str) -> Any:
    parse, _ = CONFIG_KEYS[key]
    try:
        return parse(raw.strip().strip("\"'"))
    except ValueError as e:
        raise ConfigError(f"invalid value for '{key}': {e}") from e


@dataclass
class ExperimentConfig:
    """Scalar settings plus the sweep axes of one experiment."""

    values: Dict[str, Any] = field(default_factory=config_defaults)
    axes: Dict[str, List[Any]] = field(default_factory=dict)
    text: str = ""

    @property
    def n_points(self) -> int:
        return math.prod(len(v) for v in self.axes.values())

    def points(self) -> Iterator[Dict[str, Any]]:
        """Every sweep point as a complete settings dict, in sweep order."""
        keys = [k for k in SWEEP_KEYS if k in self.axes]
        for combination in itertools.product(*(self.axes[k] for k in keys)):
            point = dict(self.values)
            point.update(zip(keys, combination))
            yield point


def parse_config(text: str) -> ExperimentConfig:
    """Parse experiment config text; raise :class:`ConfigError` on any problem."""
    config = ExperimentConfig(text=text)
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got '{line}'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        seen.add(key)
        if raw.startswith("["):
            if not raw.endswith("]"):
                raise ConfigError(f"line {lineno}: unterminated list for '{key}'")
            if key not in SWEEP_KEYS:
                raise ConfigError(f"line {lineno}: '{key}' cannot be swept")
            items = [item for item in raw[1:-1].split(",") if item.strip()]
            if not items:
                raise ConfigError(f"line {lineno}: empty list for '{key}'")
            config.axes[key] = [_parse_value(key, item) for item in items]
        else:
            config.values[key] = _parse_value(key, raw)
    return config


def read_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    return parse_config(text)


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_config(values: Dict[str, Any], axes: Optional[Dict[str, List[Any]]] = None) -> str:
    """Render settings back to config text, one key per line."""
    axes = axes or {}
    lines = []
    for key in CONFIG_KEYS:
        if key in axes:
            lines.append(f"{key} = [{', '.join(_format_value(v) for v in axes[key])}]")
        else:
            lines.append(f"{key} = {_format_value(values[key])}")
    return "\n".join(lines) + "\n"


def build_smoother(point: Dict[str, Any]) -> SmootherWrap:
    return SmootherWrap(
        kind=point["smoother"],
        box_size=point["box"],
        overlap=point["overlap"],
        fgmres_iters=point["wrap"],
        sc=SCSmootherConfig(
            cheby_iters_A=point["cheby_iters_A"],
            cheby_iters_M=point["cheby_iters_M"],
            seed=point["seed"],
        ),
        threads=IBMG_THREADS,
    )


def build_structures(point: Dict[str, Any]) -> List[FiberMesh]:
    return make_structures(
        point["problem"], point["N"], point["gamma"], seed=point["seed"], n_structures=point["n_structures"]
    )


def execute_point(point: Dict[str, Any]) -> StepResult:
    """Run one semi-implicit step of a sweep point from rest.

    Pure numerics; nothing is written to the database here, so this is safe to
    call from worker threads.
    """
    N = point["N"]
    logger.info(
        f"{point['problem']} N={N} gamma={point['gamma']} mu={point['mu']} rho={point['rho']} "
        f"smoother={point['smoother']} box={point['box']} overlap={point['overlap']}"
    )
    meshes = build_structures(point)
    params = FluidParams(mu=point["mu"], dt=default_time_step(N), rho=point["rho"])
    return semi_implicit_step(
        StepState(u=None, meshes=meshes),
        params,
        N,
        build_smoother(point),
        tol=point["tol"],
        max_iters=point["max_iters"],
        nu1=point["nu1"],
        nu2=point["nu2"],
        config={key: point[key] for key in SUMMARY_COLUMNS[:11]},
    )


@dataclass
class PointOutcome:
    """What a worker hands back for one sweep point."""

    iterations: int = 0
    residual_history: List[float] = field(default_factory=list)
    converged: bool = False
    wall_time: float = 0.0
    error: Optional[str] = None


def solve_point(point: Dict[str, Any]) -> PointOutcome:
    """Run a sweep point and capture its outcome; exceptions are logged, not raised."""
    started = time.perf_counter()
    try:
        step = execute_point(point)
    except Exception as e:
        logger.error(f"sweep point failed: {e.__class__.__name__}: {e}")
        return PointOutcome(wall_time=time.perf_counter() - started, error=str(e))
    report = step.report
    return PointOutcome(
        iterations=report.iterations,
        residual_history=list(report.residual_history),
        converged=report.converged,
        wall_time=report.wall_time,
    )


def create_experiment(config: ExperimentConfig, output_dir: Optional[str] = None) -> Experiment:
    """Store the experiment and one pending run per sweep point."""
    experiment = Experiment.objects.create(
        name=config.values["name"],
        config_text=config.text,
        output_dir=output_dir or config.values["output_dir"],
        status=Experiment.STATUS_RUNNING,
    )
    SolveRun.objects.bulk_create(
        SolveRun(experiment=experiment, sweep_index=index, config=point)
        for index, point in enumerate(config.points())
    )
    logger.info(f"experiment #{experiment.id}: {config.n_points} sweep point(s)")
    return experiment


def record_outcome(run: SolveRun, outcome: PointOutcome) -> SolveRun:
    """Persist the outcome of a run; its log lines must already be stored."""
    ResidualEntry.objects.bulk_create(
        ResidualEntry(run=run, iteration=k, relres=value) for k, value in enumerate(outcome.residual_history)
    )
    run.iterations = outcome.iterations
    run.converged = outcome.converged
    run.final_relres = outcome.residual_history[-1] if outcome.residual_history else None
    run.wall_time = outcome.wall_time
    run.result = SolveRun.RESULT_FAILED if outcome.error is not None else SolveRun.RESULT_NO
    run.result = run.compute_result()
    run.status = SolveRun.STATUS_DONE
    run.finished_at = timezone.now()
    run.save()
    return run


def _summary_row(run: SolveRun) -> List[str]:
    point = run.config
    wall_time = run.wall_time if point.get("record_wall_time", True) else 0.0
    final = run.final_relres if run.final_relres is not None else float("nan")
    row = [_format_value(point[key]) for key in SUMMARY_COLUMNS[:11]]
    row += [str(run.iterations), _format_value(run.converged), _format_value(float(final)), _format_value(float(wall_time))]
    return row


def write_summary_csv(experiment: Experiment, path) -> Path:
    """One row per sweep point, echoing the swept settings."""
    path = Path(path)
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for run in experiment.runs.filter(status=SolveRun.STATUS_DONE).order_by("sweep_index"):
            writer.writerow(_summary_row(run))
    return path


def write_residuals_csv(experiment: Experiment, path) -> Path:
    """One row per outer iteration of every run; ``run_id`` is the sweep index."""
    path = Path(path)
    entries = (
        ResidualEntry.objects.filter(run__experiment=experiment, run__status=SolveRun.STATUS_DONE)
        .order_by("run__sweep_index", "iteration")
        .values_list("run__sweep_index", "iteration", "relres")
    )
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(RESIDUAL_COLUMNS)
        for sweep_index, iteration, relres in entries:
            writer.writerow([sweep_index, iteration, _format_value(float(relres))])
    return path


def export_experiment(experiment: Experiment, output_dir=None) -> Tuple[Path, Path]:
    """Write ``summary.csv`` and ``residuals.csv`` of an experiment."""
    target = Path(output_dir or experiment.output_dir)
    os.makedirs(target, exist_ok=True)
    summary = write_summary_csv(experiment, target / "summary.csv")
    residuals = write_residuals_csv(experiment, target / "residuals.csv")
    logger.info(f"experiment #{experiment.id} exported to {target}")
    return summary, residuals


SNAPSHOT_FILES = {
    "u1": ("u1.csv", ("i", "j", "x", "y", "u1")),
    "u2": ("u2.csv", ("i", "j", "x", "y", "u2")),
    "p": ("p.csv", ("i", "j", "x", "y", "p")),
    "nodes": ("nodes.csv", ("structure", "l", "m", "x", "y")),
}
"""Snapshot schema: file name and header of each field; ``i, j`` index ``x, y``."""

_SNAPSHOT_FMT = "%.17g"


def _write_field(path: Path, columns, values: np.ndarray, coords: Tuple[np.ndarray, np.ndarray]) -> None:
    i, j = np.meshgrid(np.arange(values.shape[0]), np.arange(values.shape[1]), indexing="ij")
    table = np.column_stack([i.ravel(), j.ravel(), coords[0].ravel(), coords[1].ravel(), values.ravel()])
    np.savetxt(path, table, fmt=["%d", "%d"] + [_SNAPSHOT_FMT] * 3, delimiter=",", header=",".join(columns), comments="")


def snapshot_fields(step: StepResult, path) -> Path:
    """Write velocity, pressure and node positions of a solved step to the directory ``path``."""
    target = Path(path)
    os.makedirs(target, exist_ok=True)
    level = step.hierarchy.finest.level
    u1, u2 = step.u
    for name, values, coords in (
        ("u1", u1, level.u1_coordinates),
        ("u2", u2, level.u2_coordinates),
        ("p", step.p, level.p_coordinates),
    ):
        filename, columns = SNAPSHOT_FILES[name]
        _write_field(target / filename, columns, np.asarray(values), coords)

    rows = []
    for s, mesh in enumerate(step.meshes):
        l, m = np.meshgrid(np.arange(mesh.M1), np.arange(mesh.M2), indexing="ij")
        rows.append(np.column_stack([np.full(mesh.n_nodes, s), l.ravel(), m.ravel(), mesh.nodes]))
    filename, columns = SNAPSHOT_FILES["nodes"]
    table = np.vstack(rows) if rows else np.zeros((0, 5))
    np.savetxt(
        target / filename, table, fmt=["%d", "%d", "%d", _SNAPSHOT_FMT, _SNAPSHOT_FMT],
        delimiter=",", header=",".join(columns), comments="",
    )
    logger.info(f"snapshot written to {target}")
    return target


def _read_table(path: Path, columns) -> np.ndarray:
    with path.open() as f:
        header = f.readline().strip().split(",")
        if tuple(header) != tuple(columns):
            raise ValueError(f"{path.name}: unexpected header {header}")
        return np.loadtxt(f, delimiter=",", ndmin=2).reshape(-1, len(columns))


def read_snapshot(path) -> Dict[str, Any]:
    """Read a snapshot directory back into ``u1``, ``u2``, ``p`` arrays and per-structure node arrays."""
    source = Path(path)
    fields: Dict[str, Any] = {}
    for name in ("u1", "u2", "p"):
        filename, columns = SNAPSHOT_FILES[name]
        table = _read_table(source / filename, columns)
        i, j = table[:, 0].astype(int), table[:, 1].astype(int)
        values = np.zeros((i.max() + 1, j.max() + 1))
        values[i, j] = table[:, 4]
        fields[name] = values
    filename, columns = SNAPSHOT_FILES["nodes"]
    table = _read_table(source / filename, columns)
    nodes = []
    for s in np.unique(table[:, 0].astype(int)):
        rows = table[table[:, 0].astype(int) == s]
        M1, M2 = int(rows[:, 1].max()) + 1, int(rows[:, 2].max()) + 1
        nodes.append(rows[:, 3:5].reshape(M1, M2, 2))
    fields["nodes"] = nodes
    return fields
