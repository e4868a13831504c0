"""Export the CSVs of a stored experiment."""
from django.core.management.base import CommandError

from ibmg.models import Experiment, SolveRun
from ibmg.services.experiments import export_experiment
from ibmg.services.logger import LoggerEnabledCommand


class Command(LoggerEnabledCommand):
    """Write summary.csv and residuals.csv of a stored experiment."""

    help = "Write summary.csv and residuals.csv of a stored experiment (default: the latest)"

    def add_arguments(self, parser):
        """Add arguments method."""
        parser.add_argument("experiment_id", nargs="?", type=int, default=None, help="Experiment id")
        parser.add_argument(
            "--output-dir", default=None, dest="output_dir", help="Override the experiment's output directory"
        )

    def handle(self, *args, **options):
        """Handle method."""
        experiments = Experiment.objects.order_by("-id")
        if options["experiment_id"] is not None:
            experiments = experiments.filter(id=options["experiment_id"])
        experiment = experiments.first()
        if experiment is None:
            raise CommandError("no such experiment")

        pending = experiment.runs.exclude(status=SolveRun.STATUS_DONE).count()
        if pending:
            self.logger.warning(f"{pending} run(s) of experiment #{experiment.id} not finished yet, exporting the others")
        summary, residuals = export_experiment(experiment, options["output_dir"])
        self.stdout.write(f"{summary}\n{residuals}")
