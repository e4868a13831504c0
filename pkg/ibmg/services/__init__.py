import logging
from typing import Optional, Tuple

from ibmg.models import Experiment, SolveRun
from ibmg.services.experiments import (ExperimentConfig, PointOutcome,
                                       create_experiment, export_experiment,
                                       record_outcome, solve_point)
from ibmg.services.logger import DatabaseLogHandler, attach, detach
from ibmg.services.queues import get_sweep_service

logger = logging.getLogger(__name__)


def solve_with_log(run_id: int, point: dict) -> Tuple[PointOutcome, DatabaseLogHandler]:
    """Solve a sweep point, collecting the records its thread emits.

    Touches no database table; the caller flushes the handler.
    """
    handler = DatabaseLogHandler(run_id)
    attach(handler)
    try:
        outcome = solve_point(point)
    finally:
        detach(handler)
    return outcome, handler


def finish_run(run: SolveRun, outcome: PointOutcome, handler: DatabaseLogHandler) -> SolveRun:
    handler.flush()
    record_outcome(run, outcome)
    logger.info(f"run {run.sweep_index}: {run.result}, {run.iterations} iterations")
    return run


def run_sweep_point(run_id: int) -> Optional[SolveRun]:
    """
    Execute one stored sweep point and record its outcome.

    This is the job body of the queue services.

    :param run_id: id of the SolveRun to execute
    :return: the updated run, None if it does not exist
    """
    try:
        run = SolveRun.objects.select_related("experiment").get(id=run_id)
    except SolveRun.DoesNotExist:
        logger.error(f"Run with id {run_id} not found")
        return None

    run.status = SolveRun.STATUS_STARTED
    run.save(update_fields=["status"])
    outcome, handler = solve_with_log(run.id, dict(run.config))
    finish_run(run, outcome, handler)
    run.experiment.refresh_status()
    return run


def run_experiment(config: ExperimentConfig, jobs: int = 1, output_dir: Optional[str] = None) -> Experiment:
    """Store an experiment, run all its sweep points and export the CSVs once all are done."""
    experiment = create_experiment(config, output_dir)
    Experiment.prune()

    service = get_sweep_service(jobs=jobs)
    runs = list(experiment.runs.order_by("sweep_index"))
    for run in runs:
        service.add(run)
    service.wait(runs)

    experiment.refresh_status()
    if experiment.status == Experiment.STATUS_DONE:
        export_experiment(experiment)
    else:
        logger.info(f"experiment #{experiment.id} queued; export it with 'ibmg export {experiment.id}' when done")
    return experiment
