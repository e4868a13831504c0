import logging
import threading
from typing import List, Optional, Tuple

from django.core.management.base import BaseCommand

from ibmg.models import RunLog

PACKAGE_LOGGER = "ibmg"


def verbosity2loglevel(verbosity):
    """Map verbosity level to logging level."""
    level_map = {
        0: logging.ERROR,
        1: logging.WARNING,
        2: logging.INFO,
        3: logging.DEBUG
    }
    # Get the corresponding logging level or default to WARNING
    logging_level = level_map.get(verbosity, logging.WARNING)
    return logging_level


class LoggerEnabledCommand(BaseCommand):
    """A BaseCommand that configures the package logger from ``--verbosity`` before handling."""

    logger = None

    def execute(self, *args, **kwargs):
        """Override the BaseCommand method, adding a stream handler if not existing."""
        verbosity = kwargs.get('verbosity', 1)

        logger = logging.getLogger(PACKAGE_LOGGER)
        logger.setLevel(verbosity2loglevel(verbosity))

        # avoid duplicates for embedded commands
        if not any(
            isinstance(handler, logging.StreamHandler) and not isinstance(handler, DatabaseLogHandler)
            for handler in logger.handlers
        ):
            handler = logging.StreamHandler()
            handler.setFormatter(logging.Formatter('%(asctime)s - %(levelname)s - %(message)s', '%m-%d-%Y %H:%M:%S'))
            logger.addHandler(handler)

        self.logger = logger

        return super().execute(*args, **kwargs)


class DatabaseLogHandler(logging.Handler):
    """
    A handler that collects the records of one run and stores them as RunLog rows.

    Only records emitted by the thread that created the handler are kept, so
    several sweep points can run side by side in a thread pool, each with its
    own handler attached to the package logger. Records are buffered and written
    by ``flush()``, which may be called from another thread.

    Usage:
        handler = DatabaseLogHandler(run.id)
        attach(handler)
        ...
        detach(handler)
        handler.flush()
    """

    def __init__(self, run_id, thread_id: Optional[int] = None):
        logging.Handler.__init__(self)
        self.run_id = run_id
        self.thread_id = threading.get_ident() if thread_id is None else thread_id
        self.records: List[Tuple[str, str]] = []

    def emit(self, record):
        """Buffer the record if it comes from the run's thread."""
        if record.thread != self.thread_id:
            return
        self.records.append((record.levelname, self.format(record)))

    def flush(self):
        """Write the buffered records to the database."""
        self.acquire()
        try:
            records, self.records = self.records, []
        finally:
            self.release()
        if records:
            RunLog.objects.bulk_create(
                RunLog(run_id=self.run_id, level=level, message=message) for level, message in records
            )


def attach(handler: logging.Handler) -> None:
    logging.getLogger(PACKAGE_LOGGER).addHandler(handler)


def detach(handler: logging.Handler) -> None:
    logging.getLogger(PACKAGE_LOGGER).removeHandler(handler)
