"""Run an experiment sweep."""
from django.core.management.base import CommandError

from ibmg.services import run_experiment
from ibmg.services.experiments import ConfigError, read_config
from ibmg.services.logger import LoggerEnabledCommand
from ibmg.services.queues import SweepQueueException


class Command(LoggerEnabledCommand):
    """Run every sweep point of an experiment config and write summary.csv and residuals.csv."""

    help = "Run every sweep point of an experiment config and write summary.csv and residuals.csv"

    def add_arguments(self, parser):
        """Add arguments method."""
        parser.add_argument("config", help="Path to the experiment config file")
        parser.add_argument(
            "--jobs", default=1, dest="jobs", type=int, help="Number of sweep points solved concurrently"
        )
        parser.add_argument(
            "--output-dir", default=None, dest="output_dir", help="Override the config's output_dir"
        )

    def handle(self, *args, **options):
        """Handle method."""
        try:
            config = read_config(options["config"])
        except ConfigError as e:
            raise CommandError(str(e)) from e
        if options["jobs"] < 1:
            raise CommandError(f"--jobs must be at least 1, got {options['jobs']}")

        try:
            experiment = run_experiment(config, jobs=options["jobs"], output_dir=options["output_dir"])
        except SweepQueueException as e:
            raise CommandError(str(e)) from e

        for run in experiment.runs.order_by("sweep_index"):
            relres = f"{run.final_relres:.3e}" if run.final_relres is not None else "-"
            self.stdout.write(
                f"{run.sweep_index:4d} {run.config['problem']:>10s} N={run.config['N']:<4d} "
                f"{run.config['smoother']:>3s} iterations={run.iterations:<4d} relres={relres} "
                f"{run.result or run.status}"
            )
        self.stdout.write(f"experiment #{experiment.id} {experiment.status}, output in {experiment.output_dir}")
