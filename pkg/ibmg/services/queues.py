"""Sweep queue services.

These are the classes that execute the sweep points of an experiment.

The abstract SweepQueueService class is the interface each class has to implement.

- LocalSweepQueueService runs the points in-process, on a pool of ``jobs`` threads.
- RQSweepQueueService enqueues them on Redis Queue, when django-rq is installed.
"""
import logging
from abc import ABC, abstractmethod
from concurrent.futures import Future, ThreadPoolExecutor
from typing import Dict, List

from django.utils.translation import gettext_lazy as _

from ibmg.models import SolveRun
from ibmg.settings import IBMG_QUEUE_SERVICE_TYPE

logger = logging.getLogger(__name__)


class SweepQueueService(ABC):
    """Abstract base class for sweep executors."""

    @abstractmethod
    def add(self, run: SolveRun):  # pragma: no cover
        """To be implemented in concrete subclasses."""
        pass

    @abstractmethod
    def wait(self, runs: List[SolveRun]):  # pragma: no cover
        """To be implemented in concrete subclasses."""
        pass


class SweepQueueException(Exception):
    """Dedicated exception for SweepQueue classes."""

    pass


class LocalSweepQueueService(SweepQueueService):
    """
    Run sweep points in the current process.

    With ``jobs = 1`` each point runs as soon as it is added. With more jobs the
    numerics run on a thread pool while every database write happens in the
    thread calling :meth:`wait`, in sweep order.
    """

    def __init__(self, jobs: int = 1):
        if jobs < 1:
            raise SweepQueueException(_(f"jobs must be at least 1, got {jobs}"))
        self.jobs = jobs
        self.pool = ThreadPoolExecutor(max_workers=jobs) if jobs > 1 else None
        self.futures: Dict[int, Future] = {}

    def add(self, run: SolveRun):
        from ibmg.services import run_sweep_point, solve_with_log

        if self.pool is None:
            return run_sweep_point(run.id)
        run.status = SolveRun.STATUS_STARTED
        run.save(update_fields=["status"])
        future = self.pool.submit(solve_with_log, run.id, dict(run.config))
        self.futures[run.id] = future
        return future

    def wait(self, runs: List[SolveRun]):
        """Collect the pooled runs in the given order and record them."""
        from ibmg.services import finish_run

        if self.pool is None:
            return
        try:
            for run in runs:
                future = self.futures.pop(run.id, None)
                if future is None:
                    continue
                outcome, handler = future.result()
                finish_run(run, outcome, handler)
        finally:
            self.pool.shutdown(wait=True)


# conditional import
try:
    import django_rq

    class RQSweepQueueService(SweepQueueService):
        """
        Enqueue sweep points on the RQ ``default`` queue.

        Each job runs ``run_sweep_point(run_id)`` in a worker; the experiment is
        exported afterwards with the ``ibmg_export`` command.
        """

        def __init__(self):
            self.queue = django_rq.get_queue('default')

        def add(self, run: SolveRun):
            from ibmg.services import run_sweep_point

            try:
                rq_job = self.queue.enqueue(run_sweep_point, run.id)
            except Exception as e:
                raise SweepQueueException(_(f"Failed to enqueue run: {e}")) from e
            run.job_id = rq_job.id
            run.save(update_fields=["job_id"])
            return rq_job

        def wait(self, runs: List[SolveRun]):
            logger.info(f"{len(runs)} run(s) enqueued")

    rq_available = True

except ImportError:
    rq_available = False


def get_sweep_service(jobs: int = 1) -> SweepQueueService:
    """Fetch the correct queue service, based on settings."""
    if IBMG_QUEUE_SERVICE_TYPE == 'RQ':
        if not rq_available:
            raise SweepQueueException(_("IBMG_QUEUE_SERVICE_TYPE is 'RQ' but django-rq is not installed"))
        return RQSweepQueueService()
    return LocalSweepQueueService(jobs=jobs)
