"""Solve one sweep point and write its fields."""
from django.core.management.base import CommandError

from ibmg.services.experiments import ConfigError, execute_point, read_config, snapshot_fields
from ibmg.services.logger import LoggerEnabledCommand


class Command(LoggerEnabledCommand):
    """Solve one sweep point of a config and write u1.csv, u2.csv, p.csv and nodes.csv."""

    help = "Solve one sweep point of a config and write u1.csv, u2.csv, p.csv and nodes.csv"

    def add_arguments(self, parser):
        """Add arguments method."""
        parser.add_argument("config", help="Path to the experiment config file")
        parser.add_argument("path", help="Directory receiving the snapshot files")
        parser.add_argument(
            "--index", default=0, dest="index", type=int, help="Sweep point to solve (default: the first)"
        )

    def handle(self, *args, **options):
        """Handle method."""
        try:
            config = read_config(options["config"])
        except ConfigError as e:
            raise CommandError(str(e)) from e
        index = options["index"]
        if not 0 <= index < config.n_points:
            raise CommandError(f"--index {index} out of range, the config has {config.n_points} sweep point(s)")
        point = next(p for k, p in enumerate(config.points()) if k == index)

        step = execute_point(point)
        if not step.report.converged:
            self.logger.warning(f"snapshot of a run that did not converge (relres {step.report.final_relres:.3e})")
        target = snapshot_fields(step, options["path"])
        self.stdout.write(f"snapshot written to {target}")
